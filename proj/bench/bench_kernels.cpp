#include <benchmark/benchmark.h>

#include "singmix/induction.hpp"
#include "singmix/rng.hpp"
#include "singmix/transfer.hpp"

using namespace singmix;

namespace {

const TransferOperator& model_operator() {
  static const InducedMarkovMap F = build_induced_map(lorenz_like_map());
  static const TransferOperator P(F, model_roof(), cplx(0.0, 10.0));
  return P;
}

std::vector<cplx> random_profile(std::size_t n) {
  Rng rng(7);
  std::vector<cplx> v(n);
  for (auto& z : v) z = cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<double> random_series(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_apply_kernel(benchmark::State& state) {
  const auto& k = model_operator().kernel();
  const auto psi = random_profile(k.nodes);
  std::vector<cplx> out(k.nodes);
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  for (auto _ : state) {
    apply_kernel(k, psi, out, exec);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["entries"] = static_cast<double>(k.weight.size());
}

void BM_apply_kernel_serial(benchmark::State& state) {
  const auto& k = model_operator().kernel();
  const auto psi = random_profile(k.nodes);
  std::vector<cplx> out(k.nodes);
  for (auto _ : state) {
    apply_kernel_serial(k, psi, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_lagged_products(benchmark::State& state) {
  const auto x = random_series(static_cast<std::size_t>(state.range(0)), 1);
  const auto y = random_series(x.size(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(lagged_products(x, y, 80, Exec::Parallel));
}

void BM_lagged_products_serial(benchmark::State& state) {
  const auto x = random_series(static_cast<std::size_t>(state.range(0)), 1);
  const auto y = random_series(x.size(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(lagged_products_serial(x, y, 80));
}

}  // namespace

BENCHMARK(BM_apply_kernel)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_apply_kernel_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lagged_products)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lagged_products_serial)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
