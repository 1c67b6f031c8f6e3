#pragma once

#include <memory>
#include <string>
#include <vector>

#include "genmix/rng.hpp"
#include "genmix/tensor.hpp"

namespace genmix {

enum class Mode { Train, Eval };

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool trainable;
};

// Ordered view over a model's parameters; iteration order is the layer
// order and is stable across save/load.
class ParameterSet {
 public:
  void add(std::string name, Tensor* t, bool trainable);
  auto begin() { return refs_.begin(); }
  auto end() { return refs_.end(); }
  auto begin() const { return refs_.begin(); }
  auto end() const { return refs_.end(); }
  std::size_t size() const { return refs_.size(); }
  const ParamRef& operator[](std::size_t i) const { return refs_[i]; }
  ParamRef* find(std::string_view name);

 private:
  std::vector<ParamRef> refs_;
};

// Element count over (trainable) parameters; running statistics are not
// trainable and are excluded when trainable_only is set.
std::int64_t param_count(const ParameterSet& params, bool trainable_only);

// A differentiable layer. forward() with record=true keeps whatever the
// backward pass needs; with record=false it mutates nothing, so eval-mode
// inference is a pure function of the input. backward() may be called
// repeatedly against the same recorded forward (the DeepFool attack does),
// and only touches parameter gradients when param_grads is set.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode, bool record) = 0;
  virtual Tensor backward(const Tensor& grad_out, bool param_grads) = 0;
  virtual void collect_params(ParameterSet&) {}

  const std::string& name() const { return name_; }

 protected:
  [[noreturn]] void fail_shape(const std::string& expected, const Tensor& got) const;

  std::string name_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int padding);

  void init(Rng& rng);
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(ParameterSet& ps) override;

  Tensor weight;  // (out, in, k, k)
  Tensor bias;    // (out)

 private:
  int in_c_, out_c_, k_, pad_;
  Tensor cached_input_;
};

class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(ParameterSet& ps) override;

  Tensor gamma, beta;
  Tensor running_mean, running_var;

 private:
  int c_;
  float momentum_, eps_;
  Tensor cached_xhat_;
  std::vector<float> cached_invstd_;
  bool cached_batch_stats_ = false;
};

class Elu final : public Layer {
 public:
  explicit Elu(std::string name) : Layer(std::move(name)) {}
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  Tensor cached_out_;
};

class Relu final : public Layer {
 public:
  explicit Relu(std::string name) : Layer(std::move(name)) {}
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  Tensor cached_out_;
};

class Sigmoid final : public Layer {
 public:
  explicit Sigmoid(std::string name) : Layer(std::move(name)) {}
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  Tensor cached_out_;
};

// 2x2, stride 2, floor output size; trailing odd rows/columns are dropped.
class AvgPool2 final : public Layer {
 public:
  explicit AvgPool2(std::string name) : Layer(std::move(name)) {}
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  std::vector<int> cached_in_shape_;
};

class MaxPool2 final : public Layer {
 public:
  explicit MaxPool2(std::string name) : Layer(std::move(name)) {}
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  std::vector<int> cached_in_shape_;
  std::vector<std::int32_t> cached_argmax_;
};

class Dense final : public Layer {
 public:
  Dense(std::string name, int in_features, int out_features);

  void init(Rng& rng);
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(ParameterSet& ps) override;

  Tensor weight;  // (out, in)
  Tensor bias;    // (out)

 private:
  int in_f_, out_f_;
  Tensor cached_input_;
};

class Flatten final : public Layer {
 public:
  explicit Flatten(std::string name) : Layer(std::move(name)) {}
  std::unique_ptr<Layer> clone() const override;
  Tensor forward(const Tensor& x, Mode mode, bool record) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  std::vector<int> cached_in_shape_;
};

}  // namespace genmix
