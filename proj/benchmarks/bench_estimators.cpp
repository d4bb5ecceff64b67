#include <random>

#include <benchmark/benchmark.h>

#include "qhprice/estimators.hpp"
#include "qhprice/transform.hpp"

namespace {

using namespace qhprice;

void make_problem(int n, int p, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  x.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = z(rng);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < p; j += 3) beta(j) = 1.0 / (1 + j);
  y = x * beta;
  for (int i = 0; i < n; ++i) y(i) += 0.5 * z(rng);
}

void BM_EnPath(benchmark::State& state) {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  make_problem(360, static_cast<int>(state.range(0)), x, y);
  const LambdaGrid grid = LambdaGrid::exponential(lambda_max(x, y, 0.5));
  for (auto _ : state) benchmark::DoNotOptimize(fit_en_path(x, y, grid));
}
BENCHMARK(BM_EnPath)->Arg(32)->Arg(255)->Unit(benchmark::kMillisecond);

void BM_CrossValidate(benchmark::State& state) {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  make_problem(360, 32, x, y);
  const LambdaGrid grid = LambdaGrid::exponential(lambda_max(x, y, 0.5));
  for (auto _ : state) benchmark::DoNotOptimize(cross_validate(x, y, grid));
}
BENCHMARK(BM_CrossValidate)->Unit(benchmark::kMillisecond);

void BM_Ols(benchmark::State& state) {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  make_problem(360, static_cast<int>(state.range(0)), x, y);
  for (auto _ : state) benchmark::DoNotOptimize(solve_ols(x, y));
}
BENCHMARK(BM_Ols)->Arg(32)->Arg(255)->Unit(benchmark::kMicrosecond);

void BM_Mlog(benchmark::State& state) {
  std::vector<double> v(96 * 365);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (double& x : v) x = u(rng);
  for (auto _ : state) {
    double s = 0.0;
    for (double x : v) s += mlog_inverse(mlog(x, 1.0 / 3.0), 1.0 / 3.0);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_Mlog);

}  // namespace
