// Serial reference against OpenMP paths of the quadrature and Monte Carlo kernels.

#include <benchmark/benchmark.h>

#include "sglscv/kernels.hpp"
#include "sglscv/optim.hpp"
#include "sglscv/sampling.hpp"

using namespace sglscv;

namespace {

const problems::Diffusion1D& diffusion() {
  static const problems::Diffusion1D p({});
  return p;
}

const problems::AdvDiff5D& advdiff() {
  static const problems::AdvDiff5D p({});
  return p;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_GradientTable1D(benchmark::State& st) {
  const auto& p = diffusion();
  const auto rule = poly::gauss_legendre(static_cast<int>(st.range(1)));
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(p.control_dim(), 0.1);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::gradient_table(p, u, rule, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(rule.size()));
}
BENCHMARK(BM_GradientTable1D)->ArgsProduct({{0, 1}, {20, 200}})->Unit(benchmark::kMillisecond);

void BM_GradientTable5D(benchmark::State& st) {
  const auto& p = advdiff();
  const auto rule = poly::tensor_gauss(static_cast<int>(st.range(1)), p.parameter_law());
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(p.control_dim(), 0.1);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::gradient_table(p, u, rule, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(rule.size()));
}
BENCHMARK(BM_GradientTable5D)->ArgsProduct({{0, 1}, {3, 4}})->Unit(benchmark::kMillisecond);

void BM_SampleMoments(benchmark::State& st) {
  const auto& p = diffusion();
  const auto rho = sampling::SamplingMeasure::reference(p.parameter_law());
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(p.control_dim(), 0.1);
  const auto n = static_cast<std::size_t>(st.range(1));
  for (auto _ : st)
    benchmark::DoNotOptimize(kernels::sample_moments(n, exec_of(st), [&](std::size_t i) {
      sampling::Stream r(1, 0, i);
      return p.gradient(u, rho.sample(r));
    }));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_SampleMoments)->ArgsProduct({{0, 1}, {4096}})->Unit(benchmark::kMillisecond);

void BM_Replicates(benchmark::State& st) {
  const problems::QuadraticToy toy(1);
  const auto set = poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, 2, 1);
  for (auto _ : st) {
    std::vector<double> err(8);
    for_each_index(err.size(), exec_of(st), [&](std::size_t r) {
      optim::RunOptions opt;
      opt.iterations = 2000;
      opt.replicate = r;
      opt.record_every = 2000;
      opt.reference = toy.optimum();
      err[r] = optim::run_sglscv_fixed(toy, set, optim::MeasureKind::arcsine, optim::StepSchedule::constant(0.2), 200,
                                       opt)
                   .rows.back()
                   .error;
    });
    benchmark::DoNotOptimize(err);
  }
}
BENCHMARK(BM_Replicates)->ArgsProduct({{0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
