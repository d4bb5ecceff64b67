#include <benchmark/benchmark.h>

#include "qhprice/features.hpp"
#include "qhprice/synthetic.hpp"

namespace {

using namespace qhprice;

const Dataset& dataset() {
  static const Dataset d = [] {
    SyntheticOptions o;
    o.days = 400;
    return simulate_dataset(o);
  }();
  return d;
}

DateRange window() {
  const Date first = dataset().range().first;
  return {first, first + std::chrono::days{364}};
}

void BM_FeatureBuilder(benchmark::State& state) {
  for (auto _ : state) {
    FeatureBuilder b(dataset(), window(), {});
    benchmark::DoNotOptimize(&b);
  }
}
BENCHMARK(BM_FeatureBuilder)->Unit(benchmark::kMillisecond);

void BM_Design(benchmark::State& state) {
  const FeatureBuilder b(dataset(), window(), {});
  const FeatureSetKind kind{state.range(0) ? FeatureSet::Full : FeatureSet::Expert, true, Target::QhAuction};
  for (auto _ : state) benchmark::DoNotOptimize(b.design(kind, 40));
}
BENCHMARK(BM_Design)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Pca(benchmark::State& state) {
  Eigen::MatrixXd days = Eigen::MatrixXd::Random(365, 96);
  for (auto _ : state) benchmark::DoNotOptimize(pca_fit(days));
}
BENCHMARK(BM_Pca)->Unit(benchmark::kMicrosecond);

}  // namespace
