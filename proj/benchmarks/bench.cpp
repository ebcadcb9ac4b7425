#include "rwre/env.hpp"
#include "rwre/estimate.hpp"
#include "rwre/filter.hpp"
#include "rwre/walk.hpp"

#include <benchmark/benchmark.h>

namespace {

using rwre::Vector;

rwre::ParamSpace two_state() {
  return rwre::preset_two_state_chain(0.4, 0.8, Vector::Constant(2, 0.01), Vector::Constant(2, 0.99));
}

Vector truth() { return (Vector(2) << 0.2, 0.9).finished(); }

void BM_Loglik(benchmark::State& state) {
  const auto space = two_state();
  const auto z = rwre::simulate_bpire(space.kernel(truth()), std::size_t(state.range(0)), 1);
  const rwre::LikelihoodEvaluator ev(space, z, 0);
  const Vector theta = (Vector(2) << 0.3, 0.8).finished();
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(theta, false, false).loglik);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Loglik)->Arg(1000)->Arg(10000);

void BM_LoglikWithGradient(benchmark::State& state) {
  const auto space = two_state();
  const auto z = rwre::simulate_bpire(space.kernel(truth()), std::size_t(state.range(0)), 1);
  const rwre::LikelihoodEvaluator ev(space, z, 0);
  const Vector theta = (Vector(2) << 0.3, 0.8).finished();
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(theta, true, false).grad);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LoglikWithGradient)->Arg(1000)->Arg(10000);

void BM_FilterStep(benchmark::State& state) {
  const auto space = two_state();
  const auto rd = space.reversed_with_derivatives(truth());
  const auto f = rwre::filter_init(rd.kernel, 0, space.dim());
  for (auto _ : state) benchmark::DoNotOptimize(rwre::filter_step(f, rd.kernel, rd.dq_rev, 3, 2).log_increment);
}
BENCHMARK(BM_FilterStep);

void BM_Walk(benchmark::State& state) {
  const auto kernel = two_state().kernel(truth());
  std::uint64_t r = 0;
  for (auto _ : state) {
    auto env = rwre::simulate_environment(kernel, 0, state.range(0), 1, r);
    benchmark::DoNotOptimize(rwre::simulate_walk(env, state.range(0), 1, 0, r++).positions.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Walk)->Arg(10000);

void BM_Bpire(benchmark::State& state) {
  const auto kernel = two_state().kernel(truth());
  std::uint64_t r = 0;
  for (auto _ : state) benchmark::DoNotOptimize(rwre::simulate_bpire(kernel, std::size_t(state.range(0)), 1, r++).z);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bpire)->Arg(10000);

void BM_Fit(benchmark::State& state) {
  const auto space = two_state();
  const auto z = rwre::simulate_bpire(space.kernel(truth()), std::size_t(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(rwre::fit(space, z, 0).theta_hat);
}
BENCHMARK(BM_Fit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
