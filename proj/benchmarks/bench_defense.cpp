#include <benchmark/benchmark.h>

#include "genmix/defense.hpp"
#include "genmix/eval.hpp"

using namespace genmix;

namespace {

Tensor random_images(int batch, std::uint64_t seed) {
  Tensor x({batch, 1, 28, 28});
  Rng rng(seed);
  for (auto& v : x.values()) v = static_cast<float>(rng.next_double());
  return x;
}

EnsembleState make_ensemble(int n_gens) {
  RngStreams rngs(21);
  EnsembleState ens;
  ens.roster = {AttackSpec::make(AttackKind::Fgsm, 0.5f),
                AttackSpec::make(AttackKind::Aun, 1.5f)};
  ens.config.num_generators = n_gens;
  Rng dinit = rngs.derive("init-disc", 0);
  ens.discriminator = build_discriminator(dinit);
  ens.disc_opt = AdamState(ens.discriminator.parameters(), AdamConfig{});
  for (int j = 0; j < n_gens; ++j) {
    Rng ginit = rngs.derive("init-gen", static_cast<std::uint64_t>(j));
    ens.generators.push_back(build_generator(ginit, "g" + std::to_string(j)));
    ens.gen_opt.emplace_back(ens.generators.back().parameters(), AdamConfig{});
  }
  return ens;
}

void CompetitiveStep(benchmark::State& state) {
  Rng crng(22);
  NetworkModel classifier = build_classifier(crng);
  auto ens = make_ensemble(static_cast<int>(state.range(0)));
  const Tensor canon = random_images(static_cast<int>(state.range(1)), 23);
  const Tensor transf = random_images(static_cast<int>(state.range(1)), 24);
  RngStreams rngs(25);
  int step = 0;
  for (auto _ : state) {
    StepReport r = competitive_step(ens, classifier, canon, transf, rngs, 0, step++);
    benchmark::DoNotOptimize(r.loss_d);
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(CompetitiveStep)->Args({1, 32})->Args({3, 32})->Args({9, 32});

void DefendBatch(benchmark::State& state) {
  auto ens = make_ensemble(static_cast<int>(state.range(0)));
  const Tensor x = random_images(64, 26);
  for (auto _ : state) {
    DefendedBatch out = defend_image_batch(ens, x);
    benchmark::DoNotOptimize(out.defended.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(DefendBatch)->Arg(1)->Arg(3)->Arg(9);

}  // namespace
