#include <benchmark/benchmark.h>

#include "genmix/attacks.hpp"
#include "genmix/models.hpp"

using namespace genmix;

namespace {

struct Setup {
  NetworkModel classifier;
  Tensor images;
  std::vector<int> labels;

  Setup() : classifier(make_classifier()), images({64, 1, 28, 28}) {
    Rng rng(11);
    for (auto& v : images.values()) v = static_cast<float>(rng.next_double());
    labels.resize(64);
    for (auto& y : labels) y = static_cast<int>(rng.below(10));
  }
  static NetworkModel make_classifier() {
    Rng rng(10);
    return build_classifier(rng);
  }
};

Setup& setup() {
  static Setup s;
  return s;
}

void Attack(benchmark::State& state, AttackKind kind, float eps) {
  auto& s = setup();
  const AttackSpec spec = AttackSpec::make(kind, eps);
  Rng noise(13);
  for (auto _ : state) {
    AttackResult r = apply_attack(spec, s.classifier, s.images, s.labels, noise);
    benchmark::DoNotOptimize(r.adversarial.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}

}  // namespace

BENCHMARK_CAPTURE(Attack, fgsm, AttackKind::Fgsm, 0.5f);
BENCHMARK_CAPTURE(Attack, pgd, AttackKind::Pgd, 0.5f);
BENCHMARK_CAPTURE(Attack, deepfool, AttackKind::Df, 0.5f);
BENCHMARK_CAPTURE(Attack, aun, AttackKind::Aun, 3.5f);
BENCHMARK_CAPTURE(Attack, sapn, AttackKind::Sapn, 10.0f);
BENCHMARK_CAPTURE(Attack, slide, AttackKind::Slide, 25.0f);
