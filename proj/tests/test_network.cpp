#include <doctest.h>

#include <cmath>

#include "genmix/adam.hpp"
#include "genmix/losses.hpp"
#include "genmix/models.hpp"
#include "genmix/network.hpp"
#include "testutil.hpp"

using namespace genmix;

TEST_CASE("backward without a recorded forward fails") {
  Rng rng(1);
  NetworkModel m = build_classifier(rng);
  Tensor g({2, 10});
  CHECK_THROWS_WITH_AS(m.backward(g), doctest::Contains("without a recorded forward"), Error);

  // An eval forward without recording does not arm backward either.
  const Tensor x = testutil::blob_dataset(2, 28, 3).images;
  (void)m.forward(x, Mode::Eval, false);
  CHECK_THROWS_AS(m.backward(g), Error);
}

TEST_CASE("shape mismatches name the layer and both shapes") {
  Rng rng(2);
  NetworkModel m = build_generator(rng);
  Tensor wrong({2, 3, 28, 28});
  CHECK_THROWS_WITH_AS(m.forward(wrong, Mode::Eval, false), doctest::Contains("conv1"),
                       ShapeError);
  try {
    (void)m.forward(wrong, Mode::Eval, false);
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3,28,28)") != std::string::npos);
    CHECK(msg.find("(B,1,H,W)") != std::string::npos);
  }
}

TEST_CASE("zero output gradient yields all-zero parameter gradients") {
  Rng rng(3);
  NetworkModel m = build_classifier(rng);
  const Tensor x = testutil::blob_dataset(2, 28, 4).images;
  Tensor out = m.forward(x, Mode::Train);
  m.zero_grad();
  (void)m.backward(Tensor(out.shape()));
  for (auto& r : m.parameters())
    if (r.trainable)
      for (float v : r.tensor->grad()) CHECK(v == 0.0f);
}

TEST_CASE("linear map gradient: d(sum(Wx))/dW is x broadcast") {
  NetworkModel m("lin", Role::Classifier);
  auto fc = std::make_unique<Dense>("fc", 3, 2);
  fc->weight.fill(0.25f);
  fc->bias.fill(0.0f);
  Dense* fc_ptr = fc.get();
  m.add(std::move(fc));

  Tensor x({1, 3});
  x.data()[0] = 1.5f;
  x.data()[1] = -2.0f;
  x.data()[2] = 0.75f;
  Tensor out = m.forward(x, Mode::Train);
  m.zero_grad();
  (void)m.backward(Tensor::full(out.shape(), 1.0f));
  const auto g = fc_ptr->weight.grad();
  for (int row = 0; row < 2; ++row)
    for (int col = 0; col < 3; ++col)
      CHECK(g[static_cast<std::size_t>(row * 3 + col)] == x.data()[col]);
}

TEST_CASE("composite two-layer network passes a finite-difference check") {
  NetworkModel m("two_layer", Role::Classifier);
  Rng rng(4);
  auto fc1 = std::make_unique<Dense>("fc1", 6, 5);
  fc1->init(rng);
  m.add(std::move(fc1));
  m.add(std::make_unique<Elu>("elu"));
  auto fc2 = std::make_unique<Dense>("fc2", 5, 3);
  fc2->init(rng);
  m.add(std::move(fc2));

  Tensor x({2, 6});
  for (std::int64_t i = 0; i < x.numel(); ++i)
    x.data()[i] = 0.17f * static_cast<float>(i % 7) - 0.4f;
  const std::vector<int> labels{1, 2};

  Tensor logits = m.forward(x, Mode::Train);
  auto [loss, dlogits] = softmax_cross_entropy(logits, labels);
  m.zero_grad();
  (void)m.backward(dlogits);

  const double h = 1e-3;
  for (auto& r : m.parameters()) {
    if (!r.trainable) continue;
    for (std::int64_t i = 0; i < r.tensor->numel(); ++i) {
      const float orig = r.tensor->data()[i];
      r.tensor->data()[i] = orig + static_cast<float>(h);
      const double lp =
          softmax_cross_entropy(m.forward(x, Mode::Eval, false), labels).loss;
      r.tensor->data()[i] = orig - static_cast<float>(h);
      const double lm =
          softmax_cross_entropy(m.forward(x, Mode::Eval, false), labels).loss;
      r.tensor->data()[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = r.tensor->grad()[static_cast<std::size_t>(i)];
      const double denom = std::max({std::fabs(an), std::fabs(fd), 0.1});
      CHECK(std::fabs(an - fd) / denom <= 1e-3);
    }
  }
}

TEST_CASE("adam closed-form single step") {
  NetworkModel m("one", Role::Classifier);
  auto fc = std::make_unique<Dense>("fc", 1, 1);
  fc->weight.fill(0.0f);
  fc->bias.fill(0.0f);
  Dense* fcp = fc.get();
  m.add(std::move(fc));
  auto params = m.parameters();
  AdamState opt(params, AdamConfig{.lr = 1e-3f});

  auto wg = fcp->weight.grad();
  wg[0] = 1.0f;
  fcp->bias.zero_grad();
  opt.step(params);
  // Bias-corrected first step moves by -lr / (1 + eps*sqrt-corrections).
  CHECK(std::fabs(static_cast<double>(fcp->weight.data()[0]) - (-1e-3)) < 1e-9);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, counter advances") {
  Rng rng(5);
  NetworkModel m = build_classifier(rng);
  auto params = m.parameters();
  AdamState opt(params, AdamConfig{});
  m.zero_grad();
  const std::uint64_t before = m.checksum();
  opt.step(params);
  CHECK(m.checksum() == before);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam runs are bitwise reproducible") {
  auto run = [] {
    Rng rng(6);
    NetworkModel m = build_classifier(rng);
    auto params = m.parameters();
    AdamState opt(params, AdamConfig{});
    const Dataset d = testutil::blob_dataset(16, 28, 7);
    for (int step = 0; step < 10; ++step) {
      Tensor logits = m.forward(d.images, Mode::Train);
      auto lg = softmax_cross_entropy(logits, d.labels);
      m.zero_grad();
      m.backward(lg.grad);
      opt.step(params);
    }
    return m.checksum();
  };
  CHECK(run() == run());
}

TEST_CASE("adam aborts on NaN gradients naming the parameter") {
  Rng rng(7);
  NetworkModel m("nan_net", Role::Classifier);
  auto fc = std::make_unique<Dense>("fc", 2, 2);
  fc->init(rng);
  Dense* fcp = fc.get();
  m.add(std::move(fc));
  auto params = m.parameters();
  AdamState opt(params, AdamConfig{});
  m.zero_grad();
  fcp->weight.grad()[1] = std::nanf("");
  const std::uint64_t before = m.checksum();
  CHECK_THROWS_WITH_AS(opt.step(params), doctest::Contains("fc.weight"), NumericError);
  CHECK(m.checksum() == before);  // aborted before mutating anything
  CHECK(opt.step_count() == 0);
}

TEST_CASE("losses: cross entropy and mse behave at fixed points") {
  Tensor logits({2, 3});
  logits.fill(0.0f);
  auto ce = softmax_cross_entropy(logits, std::vector<int>{0, 2});
  CHECK(ce.loss == doctest::Approx(std::log(3.0)));

  Tensor a({2, 2});
  Tensor b({2, 2});
  a.fill(0.5f);
  b.fill(0.25f);
  auto m = mse_loss(a, b);
  CHECK(m.loss == doctest::Approx(0.0625));
  for (float v : m.grad.values()) CHECK(v == doctest::Approx(2.0 * 0.25 / 4.0));

  Tensor s({2, 1});
  s.fill(0.5f);
  CHECK(bce_toward_one(s).loss == doctest::Approx(std::log(2.0)));
  CHECK(bce_toward_zero(s).loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("parameter sets count and order deterministically") {
  ParameterSet empty;
  CHECK(param_count(empty, true) == 0);
  CHECK(param_count(empty, false) == 0);

  Rng rng(8);
  NetworkModel g = build_generator(rng);
  auto ps = g.parameters();
  CHECK(param_count(ps, true) == 28609);
  // Running statistics are the only non-trainables: 2 tensors x 32 per BN x 4.
  CHECK(param_count(ps, false) == 28609 + 256);
  CHECK(ps.find("conv1.weight") != nullptr);
  CHECK(ps.find("bn4.running_var") != nullptr);
  CHECK(ps.find("nonexistent") == nullptr);

  // Copy shares values but not storage.
  NetworkModel h = g;
  CHECK(h.checksum() == g.checksum());
  auto hp = h.parameters();
  hp.find("conv1.weight")->tensor->data()[0] += 1.0f;
  CHECK(h.checksum() != g.checksum());
}
