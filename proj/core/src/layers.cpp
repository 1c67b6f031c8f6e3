#include "genmix/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "genmix/parallel.hpp"

namespace genmix {

void ParameterSet::add(std::string name, Tensor* t, bool trainable) {
  refs_.push_back({std::move(name), t, trainable});
}

ParamRef* ParameterSet::find(std::string_view name) {
  for (auto& r : refs_)
    if (r.name == name) return &r;
  return nullptr;
}

std::int64_t param_count(const ParameterSet& params, bool trainable_only) {
  std::int64_t n = 0;
  for (const auto& r : params)
    if (!trainable_only || r.trainable) n += r.tensor->numel();
  return n;
}

void Layer::fail_shape(const std::string& expected, const Tensor& got) const {
  throw ShapeError(name_ + ": expected input " + expected + ", got " +
                   shape_str(got.shape()));
}

namespace {

// C(M x N) += A(M x K) * B(K x N), all row-major.
void gemm_accum(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::int64_t>(i) * k;
    float* crow = c + static_cast<std::int64_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      const float* brow = b + static_cast<std::int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// col(ckk x ohw): row (ci,ky,kx), column (oy,ox).
void im2col(const float* x, int c, int h, int w, int k, int pad, int oh, int ow,
            float* col) {
  for (int ci = 0; ci < c; ++ci) {
    const float* plane = x + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::int64_t>(ci) * k * k + ky * k + kx) *
                               (static_cast<std::int64_t>(oh) * ow);
        const int ox_lo = std::max(0, pad - kx);
        const int ox_hi = std::min(ow, w + pad - kx);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + ky - pad;
          float* dst = row + static_cast<std::int64_t>(oy) * ow;
          if (iy < 0 || iy >= h || ox_lo >= ox_hi) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          if (ox_lo > 0) std::fill(dst, dst + ox_lo, 0.0f);
          std::memcpy(dst + ox_lo, plane + static_cast<std::int64_t>(iy) * w + ox_lo + kx - pad,
                      static_cast<std::size_t>(ox_hi - ox_lo) * sizeof(float));
          if (ox_hi < ow) std::fill(dst + ox_hi, dst + ow, 0.0f);
        }
      }
    }
  }
}

// colT(ohw x ckk): transposed layout used by the weight-gradient pass.
void im2col_t(const float* x, int c, int h, int w, int k, int pad, int oh, int ow,
              float* col_t) {
  const int ckk = c * k * k;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      float* row = col_t + (static_cast<std::int64_t>(oy) * ow + ox) * ckk;
      int r = 0;
      for (int ci = 0; ci < c; ++ci) {
        const float* plane = x + static_cast<std::int64_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy + ky - pad;
          for (int kx = 0; kx < k; ++kx, ++r) {
            const int ix = ox + kx - pad;
            row[r] = (iy < 0 || iy >= h || ix < 0 || ix >= w)
                         ? 0.0f
                         : plane[static_cast<std::int64_t>(iy) * w + ix];
          }
        }
      }
    }
  }
}

void col2im_add(const float* dcol, int c, int h, int w, int k, int pad, int oh, int ow,
                float* dx) {
  for (int ci = 0; ci < c; ++ci) {
    float* plane = dx + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = dcol + (static_cast<std::int64_t>(ci) * k * k + ky * k + kx) *
                                      (static_cast<std::int64_t>(oh) * ow);
        const int ox_lo = std::max(0, pad - kx);
        const int ox_hi = std::min(ow, w + pad - kx);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= h || ox_lo >= ox_hi) continue;
          float* dst = plane + static_cast<std::int64_t>(iy) * w + kx - pad;
          const float* src = row + static_cast<std::int64_t>(oy) * ow;
          for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int padding)
    : Layer(std::move(name)),
      weight({out_channels, in_channels, kernel, kernel}),
      bias({out_channels}),
      in_c_(in_channels),
      out_c_(out_channels),
      k_(kernel),
      pad_(padding) {}

void Conv2d::init(Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_c_ * k_ * k_));
  for (auto& v : weight.values()) v = rng.uniform(-bound, bound);
  bias.fill(0.0f);
}

std::unique_ptr<Layer> Conv2d::clone() const { return std::make_unique<Conv2d>(*this); }

void Conv2d::collect_params(ParameterSet& ps) {
  ps.add(name_ + ".weight", &weight, true);
  ps.add(name_ + ".bias", &bias, true);
}

Tensor Conv2d::forward(const Tensor& x, Mode, bool record) {
  if (x.rank() != 4 || x.dim(1) != in_c_)
    fail_shape("(B," + std::to_string(in_c_) + ",H,W)", x);
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = h + 2 * pad_ - k_ + 1, ow = w + 2 * pad_ - k_ + 1;
  if (oh <= 0 || ow <= 0)
    fail_shape("spatial size >= " + std::to_string(k_ - 2 * pad_), x);
  const int ckk = in_c_ * k_ * k_;
  const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
  Tensor out({b, out_c_, oh, ow});
  const float* xd = x.data();
  float* od = out.data();
  parallel_for(0, b, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<float> col(static_cast<std::size_t>(ckk) * ohw);
    for (std::int64_t i = lo; i < hi; ++i) {
      im2col(xd + i * in_c_ * h * w, in_c_, h, w, k_, pad_, oh, ow, col.data());
      float* o = od + i * out_c_ * ohw;
      for (int oc = 0; oc < out_c_; ++oc)
        std::fill(o + oc * ohw, o + (oc + 1) * ohw, bias.data()[oc]);
      gemm_accum(out_c_, static_cast<int>(ohw), ckk, weight.data(), col.data(), o);
    }
  });
  if (record) cached_input_ = x;
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool param_grads) {
  if (cached_input_.rank() == 0)
    throw Error(name_ + ": backward without a recorded forward");
  const Tensor& x = cached_input_;
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = h + 2 * pad_ - k_ + 1, ow = w + 2 * pad_ - k_ + 1;
  const int ckk = in_c_ * k_ * k_;
  const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
  Tensor dx(x.shape());
  const float* gd = grad_out.data();
  const float* xd = x.data();
  float* dxd = dx.data();

  const int chunks = static_cast<int>(std::min<std::int64_t>(kReduceChunks, b));
  std::vector<std::vector<float>> wparts, bparts;
  if (param_grads) {
    wparts.assign(chunks, std::vector<float>(static_cast<std::size_t>(out_c_) * ckk, 0.0f));
    bparts.assign(chunks, std::vector<float>(static_cast<std::size_t>(out_c_), 0.0f));
  }
  parallel_chunks(b, chunks, [&](int chunk, std::int64_t lo, std::int64_t hi) {
    std::vector<float> dcol(static_cast<std::size_t>(ckk) * ohw);
    std::vector<float> col_t;
    if (param_grads) col_t.resize(static_cast<std::size_t>(ohw) * ckk);
    for (std::int64_t i = lo; i < hi; ++i) {
      const float* g = gd + i * out_c_ * ohw;
      // dcol = W^T * g
      std::fill(dcol.begin(), dcol.end(), 0.0f);
      for (int oc = 0; oc < out_c_; ++oc) {
        const float* wrow = weight.data() + static_cast<std::int64_t>(oc) * ckk;
        const float* grow = g + static_cast<std::int64_t>(oc) * ohw;
        for (int r = 0; r < ckk; ++r) {
          const float wv = wrow[r];
          float* drow = dcol.data() + static_cast<std::int64_t>(r) * ohw;
          for (std::int64_t j = 0; j < ohw; ++j) drow[j] += wv * grow[j];
        }
      }
      col2im_add(dcol.data(), in_c_, h, w, k_, pad_, oh, ow, dxd + i * in_c_ * h * w);
      if (param_grads) {
        im2col_t(xd + i * in_c_ * h * w, in_c_, h, w, k_, pad_, oh, ow, col_t.data());
        float* wp = wparts[static_cast<std::size_t>(chunk)].data();
        float* bp = bparts[static_cast<std::size_t>(chunk)].data();
        for (std::int64_t n = 0; n < ohw; ++n) {
          const float* crow = col_t.data() + n * ckk;
          for (int oc = 0; oc < out_c_; ++oc) {
            const float gv = g[static_cast<std::int64_t>(oc) * ohw + n];
            float* wrow = wp + static_cast<std::int64_t>(oc) * ckk;
            for (int r = 0; r < ckk; ++r) wrow[r] += gv * crow[r];
          }
        }
        for (int oc = 0; oc < out_c_; ++oc) {
          const float* grow = g + static_cast<std::int64_t>(oc) * ohw;
          float s = 0.0f;
          for (std::int64_t j = 0; j < ohw; ++j) s += grow[j];
          bp[oc] += s;
        }
      }
    }
  });
  if (param_grads) {
    auto wg = weight.grad();
    auto bg = bias.grad();
    for (int c = 0; c < chunks; ++c) {
      const auto& wp = wparts[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < wp.size(); ++i) wg[i] += wp[i];
      const auto& bp = bparts[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < bp.size(); ++i) bg[i] += bp[i];
    }
  }
  return dx;
}

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : Layer(std::move(name)),
      gamma(Tensor::full({channels}, 1.0f)),
      beta({channels}),
      running_mean({channels}),
      running_var(Tensor::full({channels}, 1.0f)),
      c_(channels),
      momentum_(momentum),
      eps_(eps) {}

std::unique_ptr<Layer> BatchNorm2d::clone() const {
  return std::make_unique<BatchNorm2d>(*this);
}

void BatchNorm2d::collect_params(ParameterSet& ps) {
  ps.add(name_ + ".gamma", &gamma, true);
  ps.add(name_ + ".beta", &beta, true);
  ps.add(name_ + ".running_mean", &running_mean, false);
  ps.add(name_ + ".running_var", &running_var, false);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode, bool record) {
  if (x.rank() != 4 || x.dim(1) != c_)
    fail_shape("(B," + std::to_string(c_) + ",H,W)", x);
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t n = static_cast<std::int64_t>(b) * plane;
  Tensor out(x.shape());
  Tensor xhat;
  if (record) xhat = Tensor(x.shape());
  std::vector<float> invstd(static_cast<std::size_t>(c_));
  const float* xd = x.data();
  float* od = out.data();
  float* xh = record ? xhat.data() : nullptr;

  parallel_for(0, c_, [&](std::int64_t clo, std::int64_t chi) {
    for (std::int64_t c = clo; c < chi; ++c) {
      double mean, var;
      if (mode == Mode::Train) {
        double s = 0.0;
        for (int i = 0; i < b; ++i) {
          const float* p = xd + (static_cast<std::int64_t>(i) * c_ + c) * plane;
          for (std::int64_t j = 0; j < plane; ++j) s += p[j];
        }
        mean = s / static_cast<double>(n);
        double sq = 0.0;
        for (int i = 0; i < b; ++i) {
          const float* p = xd + (static_cast<std::int64_t>(i) * c_ + c) * plane;
          for (std::int64_t j = 0; j < plane; ++j) {
            const double d = p[j] - mean;
            sq += d * d;
          }
        }
        var = sq / static_cast<double>(n);
        running_mean.data()[c] = (1.0f - momentum_) * running_mean.data()[c] +
                                 momentum_ * static_cast<float>(mean);
        running_var.data()[c] = (1.0f - momentum_) * running_var.data()[c] +
                                momentum_ * static_cast<float>(var);
      } else {
        mean = running_mean.data()[c];
        var = running_var.data()[c];
      }
      const float istd = static_cast<float>(1.0 / std::sqrt(var + eps_));
      invstd[static_cast<std::size_t>(c)] = istd;
      const float m = static_cast<float>(mean);
      const float g = gamma.data()[c], bt = beta.data()[c];
      for (int i = 0; i < b; ++i) {
        const std::int64_t off = (static_cast<std::int64_t>(i) * c_ + c) * plane;
        for (std::int64_t j = 0; j < plane; ++j) {
          const float v = (xd[off + j] - m) * istd;
          if (xh != nullptr) xh[off + j] = v;
          od[off + j] = g * v + bt;
        }
      }
    }
  });
  if (record) {
    cached_xhat_ = std::move(xhat);
    cached_invstd_ = std::move(invstd);
    cached_batch_stats_ = (mode == Mode::Train);
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out, bool param_grads) {
  if (cached_xhat_.rank() == 0)
    throw Error(name_ + ": backward without a recorded forward");
  const int b = cached_xhat_.dim(0), h = cached_xhat_.dim(2), w = cached_xhat_.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t n = static_cast<std::int64_t>(b) * plane;
  Tensor dx(cached_xhat_.shape());
  const float* gd = grad_out.data();
  const float* xh = cached_xhat_.data();
  float* dxd = dx.data();
  auto dgamma = param_grads ? gamma.grad() : std::span<float>{};
  auto dbeta = param_grads ? beta.grad() : std::span<float>{};

  parallel_for(0, c_, [&](std::int64_t clo, std::int64_t chi) {
    for (std::int64_t c = clo; c < chi; ++c) {
      double s1 = 0.0, s2 = 0.0;
      for (int i = 0; i < b; ++i) {
        const std::int64_t off = (static_cast<std::int64_t>(i) * c_ + c) * plane;
        for (std::int64_t j = 0; j < plane; ++j) {
          s1 += gd[off + j];
          s2 += gd[off + j] * xh[off + j];
        }
      }
      if (param_grads) {
        dbeta[static_cast<std::size_t>(c)] += static_cast<float>(s1);
        dgamma[static_cast<std::size_t>(c)] += static_cast<float>(s2);
      }
      const float g = gamma.data()[c];
      const float istd = cached_invstd_[static_cast<std::size_t>(c)];
      if (cached_batch_stats_) {
        const float m1 = static_cast<float>(s1 / static_cast<double>(n));
        const float m2 = static_cast<float>(s2 / static_cast<double>(n));
        for (int i = 0; i < b; ++i) {
          const std::int64_t off = (static_cast<std::int64_t>(i) * c_ + c) * plane;
          for (std::int64_t j = 0; j < plane; ++j)
            dxd[off + j] = g * istd * (gd[off + j] - m1 - xh[off + j] * m2);
        }
      } else {
        for (int i = 0; i < b; ++i) {
          const std::int64_t off = (static_cast<std::int64_t>(i) * c_ + c) * plane;
          for (std::int64_t j = 0; j < plane; ++j) dxd[off + j] = g * istd * gd[off + j];
        }
      }
    }
  });
  return dx;
}

std::unique_ptr<Layer> Elu::clone() const { return std::make_unique<Elu>(*this); }

Tensor Elu::forward(const Tensor& x, Mode, bool record) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  parallel_for(0, x.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i)
      od[i] = xd[i] > 0.0f ? xd[i] : std::expm1f(xd[i]);
  });
  if (record) cached_out_ = out;
  return out;
}

Tensor Elu::backward(const Tensor& grad_out, bool) {
  if (cached_out_.rank() == 0)
    throw Error(name_ + ": backward without a recorded forward");
  Tensor dx(cached_out_.shape());
  const float* gd = grad_out.data();
  const float* yd = cached_out_.data();
  float* dxd = dx.data();
  parallel_for(0, dx.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i)
      dxd[i] = gd[i] * (yd[i] > 0.0f ? 1.0f : yd[i] + 1.0f);
  });
  return dx;
}

std::unique_ptr<Layer> Relu::clone() const { return std::make_unique<Relu>(*this); }

Tensor Relu::forward(const Tensor& x, Mode, bool record) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  parallel_for(0, x.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) od[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
  });
  if (record) cached_out_ = out;
  return out;
}

Tensor Relu::backward(const Tensor& grad_out, bool) {
  if (cached_out_.rank() == 0)
    throw Error(name_ + ": backward without a recorded forward");
  Tensor dx(cached_out_.shape());
  const float* gd = grad_out.data();
  const float* yd = cached_out_.data();
  float* dxd = dx.data();
  parallel_for(0, dx.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) dxd[i] = yd[i] > 0.0f ? gd[i] : 0.0f;
  });
  return dx;
}

std::unique_ptr<Layer> Sigmoid::clone() const { return std::make_unique<Sigmoid>(*this); }

Tensor Sigmoid::forward(const Tensor& x, Mode, bool record) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  parallel_for(0, x.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) od[i] = 1.0f / (1.0f + std::exp(-xd[i]));
  });
  if (record) cached_out_ = out;
  return out;
}

Tensor Sigmoid::backward(const Tensor& grad_out, bool) {
  if (cached_out_.rank() == 0)
    throw Error(name_ + ": backward without a recorded forward");
  Tensor dx(cached_out_.shape());
  const float* gd = grad_out.data();
  const float* yd = cached_out_.data();
  float* dxd = dx.data();
  parallel_for(0, dx.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) dxd[i] = gd[i] * yd[i] * (1.0f - yd[i]);
  });
  return dx;
}

std::unique_ptr<Layer> AvgPool2::clone() const { return std::make_unique<AvgPool2>(*this); }

Tensor AvgPool2::forward(const Tensor& x, Mode, bool record) {
  if (x.rank() != 4) fail_shape("(B,C,H,W)", x);
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) fail_shape("spatial size >= 2", x);
  Tensor out({b, c, oh, ow});
  const float* xd = x.data();
  float* od = out.data();
  const std::int64_t planes = static_cast<std::int64_t>(b) * c;
  parallel_for(0, planes, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      const float* in = xd + p * h * w;
      float* o = od + p * oh * ow;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const float* q = in + static_cast<std::int64_t>(2 * oy) * w + 2 * ox;
          o[static_cast<std::int64_t>(oy) * ow + ox] =
              0.25f * (q[0] + q[1] + q[w] + q[w + 1]);
        }
    }
  });
  if (record) cached_in_shape_ = x.shape();
  return out;
}

Tensor AvgPool2::backward(const Tensor& grad_out, bool) {
  if (cached_in_shape_.empty())
    throw Error(name_ + ": backward without a recorded forward");
  const int b = cached_in_shape_[0], c = cached_in_shape_[1];
  const int h = cached_in_shape_[2], w = cached_in_shape_[3];
  const int oh = h / 2, ow = w / 2;
  Tensor dx(cached_in_shape_);
  const float* gd = grad_out.data();
  float* dxd = dx.data();
  const std::int64_t planes = static_cast<std::int64_t>(b) * c;
  parallel_for(0, planes, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      const float* g = gd + p * oh * ow;
      float* d = dxd + p * h * w;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const float v = 0.25f * g[static_cast<std::int64_t>(oy) * ow + ox];
          float* q = d + static_cast<std::int64_t>(2 * oy) * w + 2 * ox;
          q[0] += v;
          q[1] += v;
          q[w] += v;
          q[w + 1] += v;
        }
    }
  });
  return dx;
}

std::unique_ptr<Layer> MaxPool2::clone() const { return std::make_unique<MaxPool2>(*this); }

Tensor MaxPool2::forward(const Tensor& x, Mode, bool record) {
  if (x.rank() != 4) fail_shape("(B,C,H,W)", x);
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) fail_shape("spatial size >= 2", x);
  Tensor out({b, c, oh, ow});
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(out.numel()));
  const float* xd = x.data();
  float* od = out.data();
  const std::int64_t planes = static_cast<std::int64_t>(b) * c;
  parallel_for(0, planes, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      const float* in = xd + p * h * w;
      float* o = od + p * oh * ow;
      std::int32_t* am = argmax.data() + p * oh * ow;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const float* q = in + static_cast<std::int64_t>(2 * oy) * w + 2 * ox;
          const float vals[4] = {q[0], q[1], q[w], q[w + 1]};
          int best = 0;
          for (int i = 1; i < 4; ++i)
            if (vals[i] > vals[best]) best = i;
          o[static_cast<std::int64_t>(oy) * ow + ox] = vals[best];
          am[static_cast<std::int64_t>(oy) * ow + ox] = best;
        }
    }
  });
  if (record) {
    cached_in_shape_ = x.shape();
    cached_argmax_ = std::move(argmax);
  }
  return out;
}

Tensor MaxPool2::backward(const Tensor& grad_out, bool) {
  if (cached_in_shape_.empty())
    throw Error(name_ + ": backward without a recorded forward");
  const int b = cached_in_shape_[0], c = cached_in_shape_[1];
  const int h = cached_in_shape_[2], w = cached_in_shape_[3];
  const int oh = h / 2, ow = w / 2;
  Tensor dx(cached_in_shape_);
  const float* gd = grad_out.data();
  float* dxd = dx.data();
  const std::int64_t planes = static_cast<std::int64_t>(b) * c;
  parallel_for(0, planes, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      const float* g = gd + p * oh * ow;
      const std::int32_t* am = cached_argmax_.data() + p * oh * ow;
      float* d = dxd + p * h * w;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int best = am[static_cast<std::int64_t>(oy) * ow + ox];
          const int dy = best / 2, dxo = best % 2;
          d[static_cast<std::int64_t>(2 * oy + dy) * w + 2 * ox + dxo] +=
              g[static_cast<std::int64_t>(oy) * ow + ox];
        }
    }
  });
  return dx;
}

Dense::Dense(std::string name, int in_features, int out_features)
    : Layer(std::move(name)),
      weight({out_features, in_features}),
      bias({out_features}),
      in_f_(in_features),
      out_f_(out_features) {}

void Dense::init(Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_f_));
  for (auto& v : weight.values()) v = rng.uniform(-bound, bound);
  bias.fill(0.0f);
}

std::unique_ptr<Layer> Dense::clone() const { return std::make_unique<Dense>(*this); }

void Dense::collect_params(ParameterSet& ps) {
  ps.add(name_ + ".weight", &weight, true);
  ps.add(name_ + ".bias", &bias, true);
}

Tensor Dense::forward(const Tensor& x, Mode, bool record) {
  if (x.rank() != 2 || x.dim(1) != in_f_)
    fail_shape("(B," + std::to_string(in_f_) + ")", x);
  const int b = x.dim(0);
  Tensor out({b, out_f_});
  const float* xd = x.data();
  float* od = out.data();
  parallel_for(0, b, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const float* xr = xd + i * in_f_;
      float* orow = od + i * out_f_;
      for (int o = 0; o < out_f_; ++o) {
        const float* wr = weight.data() + static_cast<std::int64_t>(o) * in_f_;
        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
        int j = 0;
        for (; j + 4 <= in_f_; j += 4) {
          s0 += wr[j] * xr[j];
          s1 += wr[j + 1] * xr[j + 1];
          s2 += wr[j + 2] * xr[j + 2];
          s3 += wr[j + 3] * xr[j + 3];
        }
        for (; j < in_f_; ++j) s0 += wr[j] * xr[j];
        orow[o] = ((s0 + s1) + (s2 + s3)) + bias.data()[o];
      }
    }
  });
  if (record) cached_input_ = x;
  return out;
}

Tensor Dense::backward(const Tensor& grad_out, bool param_grads) {
  if (cached_input_.rank() == 0)
    throw Error(name_ + ": backward without a recorded forward");
  const int b = cached_input_.dim(0);
  Tensor dx({b, in_f_});
  const float* gd = grad_out.data();
  const float* xd = cached_input_.data();
  float* dxd = dx.data();
  parallel_for(0, b, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const float* g = gd + i * out_f_;
      float* d = dxd + i * in_f_;
      for (int o = 0; o < out_f_; ++o) {
        const float gv = g[o];
        const float* wr = weight.data() + static_cast<std::int64_t>(o) * in_f_;
        for (int j = 0; j < in_f_; ++j) d[j] += gv * wr[j];
      }
    }
  });
  if (param_grads) {
    auto wg = weight.grad();
    auto bg = bias.grad();
    parallel_for(0, out_f_, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t o = lo; o < hi; ++o) {
        float* wrow = wg.data() + o * in_f_;
        double bs = 0.0;
        for (int i = 0; i < b; ++i) {
          const float gv = gd[static_cast<std::int64_t>(i) * out_f_ + o];
          bs += gv;
          const float* xr = xd + static_cast<std::int64_t>(i) * in_f_;
          for (int j = 0; j < in_f_; ++j) wrow[j] += gv * xr[j];
        }
        bg[static_cast<std::size_t>(o)] += static_cast<float>(bs);
      }
    });
  }
  return dx;
}

std::unique_ptr<Layer> Flatten::clone() const { return std::make_unique<Flatten>(*this); }

Tensor Flatten::forward(const Tensor& x, Mode, bool record) {
  if (x.rank() < 2) fail_shape("rank >= 2", x);
  if (record) cached_in_shape_ = x.shape();
  Tensor out = x;
  out.drop_grad();
  out.reshape({x.dim(0), static_cast<int>(x.numel() / x.dim(0))});
  return out;
}

Tensor Flatten::backward(const Tensor& grad_out, bool) {
  if (cached_in_shape_.empty())
    throw Error(name_ + ": backward without a recorded forward");
  Tensor dx = grad_out;
  dx.drop_grad();
  dx.reshape(cached_in_shape_);
  return dx;
}

}  // namespace genmix
