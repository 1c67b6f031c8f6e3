#include <benchmark/benchmark.h>

#include "genmix/adam.hpp"
#include "genmix/losses.hpp"
#include "genmix/models.hpp"
#include "genmix/parallel.hpp"

using namespace genmix;

namespace {

Tensor random_images(int batch, std::uint64_t seed) {
  Tensor x({batch, 1, 28, 28});
  Rng rng(seed);
  for (auto& v : x.values()) v = static_cast<float>(rng.next_double());
  return x;
}

void GeneratorForward(benchmark::State& state) {
  Rng rng(1);
  NetworkModel g = build_generator(rng);
  const Tensor x = random_images(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    Tensor y = g.forward(x, Mode::Eval, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(GeneratorForward)->Arg(32)->Arg(128);

void GeneratorTrainStep(benchmark::State& state) {
  Rng rng(3);
  NetworkModel g = build_generator(rng);
  auto params = g.parameters();
  AdamState opt(params, AdamConfig{});
  const Tensor x = random_images(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) {
    Tensor out = g.forward(x, Mode::Train);
    auto [loss, dout] = mse_loss(out, x);
    g.zero_grad();
    g.backward(dout);
    opt.step(params);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(GeneratorTrainStep)->Arg(32)->Arg(128);

void DiscriminatorForward(benchmark::State& state) {
  Rng rng(5);
  NetworkModel d = build_discriminator(rng);
  const Tensor x = random_images(static_cast<int>(state.range(0)), 6);
  for (auto _ : state) {
    Tensor y = d.forward(x, Mode::Eval, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(DiscriminatorForward)->Arg(32)->Arg(128);

void ClassifierForward(benchmark::State& state) {
  Rng rng(7);
  NetworkModel c = build_classifier(rng);
  const Tensor x = random_images(static_cast<int>(state.range(0)), 8);
  for (auto _ : state) {
    Tensor y = c.forward(x, Mode::Eval, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(ClassifierForward)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
