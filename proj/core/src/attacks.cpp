#include "genmix/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "genmix/checkpoint.hpp"
#include "genmix/losses.hpp"
#include "genmix/parallel.hpp"

namespace genmix {

namespace {

float clip01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

float signf(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

// Gradient of the mean cross-entropy at the provided labels, pulled back to
// the input. Leaves classifier parameters and their gradients untouched.
Tensor input_gradient(NetworkModel& c, const Tensor& x, std::span<const int> y) {
  Tensor logits = c.forward(x, Mode::Eval, /*record=*/true);
  auto [loss, dlogits] = softmax_cross_entropy(logits, y);
  Tensor g = c.backward(dlogits, /*param_grads=*/false);
  for (float v : g.values())
    if (std::isnan(v)) throw NumericError("NaN input gradient from " + c.name());
  return g;
}

AttackResult finalize(NetworkModel& c, const Tensor& x, Tensor x_adv,
                      std::span<const int> y, AttackKind kind) {
  AttackResult r;
  const auto preds = predict(c, x_adv);
  r.success.resize(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    r.success[i] = preds[i] != y[i] ? 1 : 0;
  r.norms = perturbation_norms(x, x_adv, attack_norm_kind(kind));
  r.adversarial = std::move(x_adv);
  return r;
}

std::int64_t image_numel(const Tensor& x) { return x.numel() / x.dim(0); }

}  // namespace

std::string attack_kind_str(AttackKind k) {
  switch (k) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Df: return "df";
    case AttackKind::Aun: return "aun";
    case AttackKind::Bim: return "bim";
    case AttackKind::Agn: return "agn";
    case AttackKind::Ragn: return "ragn";
    case AttackKind::Sapn: return "sapn";
    case AttackKind::Slide: return "slide";
  }
  return "unknown";
}

AttackKind attack_kind_from_str(std::string_view s) {
  for (int k = 0; k <= static_cast<int>(AttackKind::Slide); ++k)
    if (attack_kind_str(static_cast<AttackKind>(k)) == s)
      return static_cast<AttackKind>(k);
  throw ConfigError("unknown attack kind: " + std::string(s));
}

NormKind attack_norm_kind(AttackKind k) {
  switch (k) {
    case AttackKind::Fgsm:
    case AttackKind::Pgd:
    case AttackKind::Bim:
    case AttackKind::Df:
      return NormKind::Linf;
    case AttackKind::Aun:
    case AttackKind::Agn:
    case AttackKind::Ragn:
    case AttackKind::Sapn:
      return NormKind::L2;
    case AttackKind::Slide:
      return NormKind::L1;
  }
  return NormKind::Linf;
}

AttackSpec AttackSpec::make(AttackKind kind, float epsilon) {
  AttackSpec s;
  s.kind = kind;
  s.epsilon = epsilon;
  switch (kind) {
    case AttackKind::Fgsm:
      s.steps = 1;
      s.step_size = epsilon;
      break;
    case AttackKind::Pgd:
      s.steps = 40;
      s.step_size = epsilon / 10.0f;
      s.random_start = true;
      break;
    case AttackKind::Bim:
      s.steps = 10;
      s.step_size = epsilon / 5.0f;
      break;
    case AttackKind::Df:
      s.steps = 50;
      s.overshoot = 0.02f;
      break;
    case AttackKind::Slide:
      s.steps = 20;
      s.step_size = epsilon / 10.0f;
      s.quantile = 0.99f;
      break;
    case AttackKind::Ragn:
      s.max_repeats = 100;
      break;
    case AttackKind::Aun:
    case AttackKind::Agn:
    case AttackKind::Sapn:
      break;
  }
  return s;
}

AttackSpec AttackSpec::parse(std::string_view text) {
  const auto split = [](std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const auto next = s.find(sep, pos);
      if (next == std::string_view::npos) {
        parts.emplace_back(s.substr(pos));
        break;
      }
      parts.emplace_back(s.substr(pos, next - pos));
      pos = next + 1;
    }
    return parts;
  };
  const auto parts = split(text, ':');
  if (parts.size() < 2)
    throw ConfigError("attack spec '" + std::string(text) + "' must be KIND:EPS[:key=val,...]");
  const AttackKind kind = attack_kind_from_str(parts[0]);
  float eps = 0.0f;
  try {
    eps = std::stof(parts[1]);
  } catch (const std::exception&) {
    throw ConfigError("attack spec '" + std::string(text) + "': bad epsilon '" + parts[1] + "'");
  }
  if (!(eps > 0.0f))
    throw ConfigError("attack spec '" + std::string(text) + "': epsilon must be > 0");
  AttackSpec s = make(kind, eps);
  for (std::size_t i = 2; i < parts.size(); ++i) {
    for (const auto& kv : split(parts[i], ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("attack spec '" + std::string(text) + "': expected key=val, got '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "steps") s.steps = std::stoi(val);
        else if (key == "step_size") s.step_size = std::stof(val);
        else if (key == "random_start") s.random_start = std::stoi(val) != 0;
        else if (key == "max_repeats") s.max_repeats = std::stoi(val);
        else if (key == "overshoot") s.overshoot = std::stof(val);
        else if (key == "quantile") s.quantile = std::stof(val);
        else throw ConfigError("attack spec '" + std::string(text) + "': unknown key '" + key + "'");
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception&) {
        throw ConfigError("attack spec '" + std::string(text) + "': bad value for '" + key + "'");
      }
    }
  }
  if (s.steps < 1)
    throw ConfigError("attack spec '" + std::string(text) + "': steps must be >= 1");
  return s;
}

std::string AttackSpec::str() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s:%g", attack_kind_str(kind).c_str(),
                static_cast<double>(epsilon));
  return buf;
}

std::string AttackSpec::full_str() const {
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "%s:%g:steps=%d,step_size=%g,random_start=%d,max_repeats=%d,overshoot=%g,quantile=%g",
                attack_kind_str(kind).c_str(), static_cast<double>(epsilon), steps,
                static_cast<double>(step_size), random_start ? 1 : 0, max_repeats,
                static_cast<double>(overshoot), static_cast<double>(quantile));
  return buf;
}

std::vector<AttackSpec> default_roster() {
  return {
      AttackSpec::make(AttackKind::Fgsm, 0.5f), AttackSpec::make(AttackKind::Pgd, 0.5f),
      AttackSpec::make(AttackKind::Df, 0.5f),   AttackSpec::make(AttackKind::Aun, 3.5f),
      AttackSpec::make(AttackKind::Bim, 0.2f),  AttackSpec::make(AttackKind::Agn, 100.0f),
      AttackSpec::make(AttackKind::Ragn, 15.0f), AttackSpec::make(AttackKind::Sapn, 10.0f),
      AttackSpec::make(AttackKind::Slide, 25.0f),
  };
}

std::vector<float> perturbation_norms(const Tensor& x, const Tensor& x_adv, NormKind kind) {
  const int b = x.dim(0);
  const std::int64_t d = image_numel(x);
  std::vector<float> norms(static_cast<std::size_t>(b));
  const float* xd = x.data();
  const float* ad = x_adv.data();
  parallel_for(0, b, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const float* p = xd + i * d;
      const float* q = ad + i * d;
      double acc = 0.0;
      switch (kind) {
        case NormKind::Linf:
          for (std::int64_t j = 0; j < d; ++j)
            acc = std::max(acc, static_cast<double>(std::fabs(q[j] - p[j])));
          break;
        case NormKind::L2:
          for (std::int64_t j = 0; j < d; ++j) {
            const double dd = static_cast<double>(q[j]) - p[j];
            acc += dd * dd;
          }
          acc = std::sqrt(acc);
          break;
        case NormKind::L1:
          for (std::int64_t j = 0; j < d; ++j)
            acc += std::fabs(static_cast<double>(q[j]) - p[j]);
          break;
      }
      norms[static_cast<std::size_t>(i)] = static_cast<float>(acc);
    }
  });
  return norms;
}

std::vector<int> predict(NetworkModel& classifier, const Tensor& x) {
  return argmax_rows(classifier.forward(x, Mode::Eval, /*record=*/false));
}

double success_rate(const AttackResult& r) {
  if (r.success.empty()) return 0.0;
  std::int64_t s = 0;
  for (auto v : r.success) s += v;
  return static_cast<double>(s) / static_cast<double>(r.success.size());
}

AttackResult attack_iterative_linf(NetworkModel& c, const Tensor& x,
                                   std::span<const int> y, const AttackSpec& spec,
                                   Rng& noise) {
  const float eps = spec.epsilon;
  const std::int64_t n = x.numel();
  Tensor x_adv = x;
  x_adv.drop_grad();
  if (spec.random_start && eps > 0.0f) {
    float* a = x_adv.data();
    const float* xd = x.data();
    for (std::int64_t i = 0; i < n; ++i)
      a[i] = clip01(xd[i] + noise.uniform(-eps, eps));
  }
  for (int t = 0; t < spec.steps; ++t) {
    Tensor g = input_gradient(c, x_adv, y);
    float* a = x_adv.data();
    const float* gd = g.data();
    const float* xd = x.data();
    parallel_for(0, n, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        const float stepped = a[i] + spec.step_size * signf(gd[i]);
        const float delta = std::min(eps, std::max(-eps, stepped - xd[i]));
        a[i] = clip01(xd[i] + delta);
      }
    });
  }
  return finalize(c, x, std::move(x_adv), y, spec.kind);
}

AttackResult attack_fgsm(NetworkModel& c, const Tensor& x, std::span<const int> y,
                         const AttackSpec& spec) {
  AttackSpec one = spec;
  one.steps = 1;
  one.step_size = spec.epsilon;
  one.random_start = false;
  Rng unused(0);
  return attack_iterative_linf(c, x, y, one, unused);
}

AttackResult attack_deepfool(NetworkModel& c, const Tensor& x, std::span<const int> y,
                             const AttackSpec& spec) {
  const int b = x.dim(0);
  const std::int64_t d = image_numel(x);
  Tensor x_adv = x;
  x_adv.drop_grad();
  std::vector<std::uint8_t> active(static_cast<std::size_t>(b), 1);

  for (int iter = 0; iter < spec.steps; ++iter) {
    Tensor logits = c.forward(x_adv, Mode::Eval, /*record=*/true);
    const int k = logits.dim(1);
    const auto preds = argmax_rows(logits);
    bool any = false;
    for (int i = 0; i < b; ++i) {
      if (preds[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)])
        active[static_cast<std::size_t>(i)] = 0;
      any = any || active[static_cast<std::size_t>(i)];
    }
    if (!any) break;

    // Per-class input gradients from the one recorded forward.
    std::vector<Tensor> grads;
    grads.reserve(static_cast<std::size_t>(k));
    for (int cls = 0; cls < k; ++cls) {
      Tensor onehot(logits.shape());
      float* oh = onehot.data();
      for (int i = 0; i < b; ++i) oh[static_cast<std::int64_t>(i) * k + cls] = 1.0f;
      grads.push_back(c.backward(onehot, /*param_grads=*/false));
    }

    const float* ld = logits.data();
    float* ad = x_adv.data();
    parallel_for(0, b, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        const int yi = y[static_cast<std::size_t>(i)];
        const float* gy = grads[static_cast<std::size_t>(yi)].data() + i * d;
        double best_dist = std::numeric_limits<double>::infinity();
        int best_k = -1;
        double best_fdiff = 0.0, best_wn2 = 0.0;
        for (int cls = 0; cls < k; ++cls) {
          if (cls == yi) continue;
          const float* gk = grads[static_cast<std::size_t>(cls)].data() + i * d;
          double wn2 = 0.0;
          for (std::int64_t j = 0; j < d; ++j) {
            const double w = static_cast<double>(gk[j]) - gy[j];
            wn2 += w * w;
          }
          if (wn2 < 1e-20) continue;
          const double fdiff = static_cast<double>(ld[i * k + cls]) - ld[i * k + yi];
          const double dist = std::fabs(fdiff) / std::sqrt(wn2);
          if (dist < best_dist) {
            best_dist = dist;
            best_k = cls;
            best_fdiff = fdiff;
            best_wn2 = wn2;
          }
        }
        if (best_k < 0) continue;
        const float* gk = grads[static_cast<std::size_t>(best_k)].data() + i * d;
        const double scale =
            (1.0 + spec.overshoot) * std::fabs(best_fdiff) / best_wn2;
        float* row = ad + i * d;
        for (std::int64_t j = 0; j < d; ++j)
          row[j] += static_cast<float>(scale * (static_cast<double>(gk[j]) - gy[j]));
      }
    });
  }

  // Final L-inf projection and pixel-range clip.
  const float eps = spec.epsilon;
  float* ad = x_adv.data();
  const float* xd = x.data();
  parallel_for(0, x.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const float delta = std::min(eps, std::max(-eps, ad[i] - xd[i]));
      ad[i] = clip01(xd[i] + delta);
    }
  });
  return finalize(c, x, std::move(x_adv), y, spec.kind);
}

Tensor sample_scaled_noise(const std::vector<int>& shape, float eps, bool gaussian,
                           Rng& rng) {
  Tensor noise(shape);
  const int b = shape[0];
  const std::int64_t d = noise.numel() / b;
  float* nd = noise.data();
  for (std::int64_t i = 0; i < b; ++i) {
    float* row = nd + i * d;
    double sumsq = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      row[j] = gaussian ? rng.gaussian() : rng.uniform(-1.0f, 1.0f);
      sumsq += static_cast<double>(row[j]) * row[j];
    }
    if (sumsq > 0.0) {
      const float scale = static_cast<float>(eps / std::sqrt(sumsq));
      for (std::int64_t j = 0; j < d; ++j) row[j] *= scale;
    }
  }
  return noise;
}

AttackResult attack_noise(NetworkModel& c, const Tensor& x, std::span<const int> y,
                          const AttackSpec& spec, Rng& noise) {
  const bool gaussian = spec.kind != AttackKind::Aun;
  const int repeats = spec.kind == AttackKind::Ragn ? std::max(1, spec.max_repeats) : 1;
  const int b = x.dim(0);
  const std::int64_t d = image_numel(x);
  Tensor x_adv = x;
  x_adv.drop_grad();
  std::vector<std::uint8_t> active(static_cast<std::size_t>(b), 1);
  for (int r = 0; r < repeats; ++r) {
    Tensor delta = sample_scaled_noise(x.shape(), spec.epsilon, gaussian, noise);
    const float* xd = x.data();
    const float* nd = delta.data();
    float* ad = x_adv.data();
    for (int i = 0; i < b; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      const std::int64_t off = static_cast<std::int64_t>(i) * d;
      for (std::int64_t j = 0; j < d; ++j) ad[off + j] = clip01(xd[off + j] + nd[off + j]);
    }
    if (repeats == 1) break;
    const auto preds = predict(c, x_adv);
    bool any = false;
    for (int i = 0; i < b; ++i) {
      if (preds[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)])
        active[static_cast<std::size_t>(i)] = 0;
      any = any || active[static_cast<std::size_t>(i)];
    }
    if (!any) break;
  }
  return finalize(c, x, std::move(x_adv), y, spec.kind);
}

AttackResult attack_salt_pepper(NetworkModel& c, const Tensor& x, std::span<const int> y,
                                const AttackSpec& spec, Rng& noise) {
  const int b = x.dim(0);
  const std::int64_t d = image_numel(x);
  // Doubling schedule of corrupted-pixel counts up to 10% of the image.
  const auto cap = static_cast<std::int64_t>(0.10 * static_cast<double>(d));
  std::vector<std::int64_t> schedule;
  for (int s = 7; s >= 0; --s) {
    const auto cnt = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(0.10 * std::pow(2.0, -s) * static_cast<double>(d))));
    const auto capped = std::min(cnt, cap);
    if (schedule.empty() || capped > schedule.back()) schedule.push_back(capped);
  }

  std::vector<std::vector<int>> orders(static_cast<std::size_t>(b));
  std::vector<std::vector<float>> values(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    orders[static_cast<std::size_t>(i)] = noise.permutation(static_cast<int>(d));
    auto& vals = values[static_cast<std::size_t>(i)];
    vals.resize(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j)
      vals[static_cast<std::size_t>(j)] = noise.below(2) == 0 ? 0.0f : 1.0f;
  }

  Tensor x_adv = x;
  x_adv.drop_grad();
  std::vector<std::uint8_t> active(static_cast<std::size_t>(b), 1);
  for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
    const std::int64_t count = schedule[stage];
    const float* xd = x.data();
    float* ad = x_adv.data();
    for (int i = 0; i < b; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      const std::int64_t off = static_cast<std::int64_t>(i) * d;
      std::memcpy(ad + off, xd + off, static_cast<std::size_t>(d) * sizeof(float));
      const auto& ord = orders[static_cast<std::size_t>(i)];
      const auto& vals = values[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < count; ++j)
        ad[off + ord[static_cast<std::size_t>(j)]] = vals[static_cast<std::size_t>(ord[static_cast<std::size_t>(j)])];
    }
    const auto preds = predict(c, x_adv);
    const auto l2 = perturbation_norms(x, x_adv, NormKind::L2);
    bool any = false;
    for (int i = 0; i < b; ++i) {
      if (active[static_cast<std::size_t>(i)] &&
          preds[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)] &&
          l2[static_cast<std::size_t>(i)] <= spec.epsilon + 1e-6f)
        active[static_cast<std::size_t>(i)] = 0;
      any = any || active[static_cast<std::size_t>(i)];
    }
    if (!any) break;
  }
  return finalize(c, x, std::move(x_adv), y, spec.kind);
}

void project_l1_ball(std::span<float> v, float radius) {
  double l1 = 0.0;
  for (float x : v) l1 += std::fabs(static_cast<double>(x));
  if (l1 <= static_cast<double>(radius)) return;
  std::vector<double> u(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) u[i] = std::fabs(static_cast<double>(v[i]));
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double cand = (css - radius) / static_cast<double>(j + 1);
    if (u[j] - cand > 0.0)
      tau = cand;
    else
      break;
  }
  for (auto& x : v) {
    const auto mag = static_cast<float>(std::max(0.0, std::fabs(static_cast<double>(x)) - tau));
    x = x > 0.0f ? mag : -mag;
  }
}

AttackResult attack_slide(NetworkModel& c, const Tensor& x, std::span<const int> y,
                          const AttackSpec& spec) {
  const int b = x.dim(0);
  const std::int64_t d = image_numel(x);
  Tensor delta(x.shape());
  Tensor x_adv = x;
  x_adv.drop_grad();
  for (int t = 0; t < spec.steps; ++t) {
    Tensor g = input_gradient(c, x_adv, y);
    float* dd = delta.data();
    const float* gd = g.data();
    const float* xd = x.data();
    float* ad = x_adv.data();
    parallel_for(0, b, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<float> mags(static_cast<std::size_t>(d));
      for (std::int64_t i = lo; i < hi; ++i) {
        const float* grow = gd + i * d;
        for (std::int64_t j = 0; j < d; ++j) mags[static_cast<std::size_t>(j)] = std::fabs(grow[j]);
        auto sorted = mags;
        const auto idx = static_cast<std::size_t>(spec.quantile * static_cast<float>(d - 1));
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx),
                         sorted.end());
        const float thr = sorted[idx];
        std::int64_t cnt = 0;
        for (std::int64_t j = 0; j < d; ++j)
          if (mags[static_cast<std::size_t>(j)] >= thr && grow[j] != 0.0f) ++cnt;
        if (cnt == 0) continue;
        const float step = spec.step_size / static_cast<float>(cnt);
        float* drow = dd + i * d;
        for (std::int64_t j = 0; j < d; ++j)
          if (mags[static_cast<std::size_t>(j)] >= thr && grow[j] != 0.0f)
            drow[j] += step * signf(grow[j]);
        project_l1_ball({drow, static_cast<std::size_t>(d)}, spec.epsilon);
        for (std::int64_t j = 0; j < d; ++j) ad[i * d + j] = clip01(xd[i * d + j] + drow[j]);
      }
    });
  }
  return finalize(c, x, std::move(x_adv), y, spec.kind);
}

AttackResult apply_attack(const AttackSpec& spec, NetworkModel& classifier,
                          const Tensor& x, std::span<const int> y, Rng& noise) {
  if (x.rank() != 4) throw ShapeError("attacks expect (B,1,H,W) images");
  if (static_cast<std::size_t>(x.dim(0)) != y.size())
    throw ShapeError("attack label count does not match batch size");
  switch (spec.kind) {
    case AttackKind::Fgsm:
      return attack_fgsm(classifier, x, y, spec);
    case AttackKind::Pgd:
    case AttackKind::Bim:
      return attack_iterative_linf(classifier, x, y, spec, noise);
    case AttackKind::Df:
      return attack_deepfool(classifier, x, y, spec);
    case AttackKind::Aun:
    case AttackKind::Agn:
    case AttackKind::Ragn:
      return attack_noise(classifier, x, y, spec, noise);
    case AttackKind::Sapn:
      return attack_salt_pepper(classifier, x, y, spec, noise);
    case AttackKind::Slide:
      return attack_slide(classifier, x, y, spec);
  }
  throw ConfigError("unknown attack kind");
}

void save_attack_cache(const std::filesystem::path& path, const AttackSpec& spec,
                       const Tensor& images, std::span<const int> labels,
                       std::span<const std::uint8_t> success) {
  Checkpoint ck;
  ck.tensors.push_back({"images", images});
  if (!labels.empty()) {
    Tensor lt({static_cast<int>(labels.size())});
    for (std::size_t i = 0; i < labels.size(); ++i) lt.data()[i] = static_cast<float>(labels[i]);
    ck.tensors.push_back({"labels", std::move(lt)});
  }
  Tensor st({static_cast<int>(success.size())});
  for (std::size_t i = 0; i < success.size(); ++i) st.data()[i] = static_cast<float>(success[i]);
  ck.tensors.push_back({"success", std::move(st)});
  nlohmann::json meta;
  meta["attack"] = spec.full_str();
  ck.metadata_json = meta.dump();
  save_checkpoint(ck, path);
}

AttackCache load_attack_cache(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  AttackCache out;
  const auto meta = nlohmann::json::parse(ck.metadata_json);
  out.spec = AttackSpec::parse(meta.at("attack").get<std::string>());
  const Tensor* images = ck.find("images");
  const Tensor* success = ck.find("success");
  if (images == nullptr || success == nullptr)
    throw FormatError(path.string() + ": attack cache is missing images/success tensors");
  out.images = *images;
  out.success.resize(static_cast<std::size_t>(success->numel()));
  for (std::size_t i = 0; i < out.success.size(); ++i)
    out.success[i] = success->data()[i] != 0.0f ? 1 : 0;
  if (const Tensor* labels = ck.find("labels"); labels != nullptr) {
    out.labels.resize(static_cast<std::size_t>(labels->numel()));
    for (std::size_t i = 0; i < out.labels.size(); ++i)
      out.labels[i] = static_cast<int>(labels->data()[i]);
  }
  return out;
}

}  // namespace genmix
