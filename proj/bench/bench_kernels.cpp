// Serial reference kernels vs their OpenMP counterparts on pipeline-sized inputs.

#include <random>

#include <benchmark/benchmark.h>

#include "laic/kernels.hpp"

namespace {

using laic::Matrix;
namespace serial = laic::kernels::serial;
namespace omp = laic::kernels::omp;

Matrix random_rows(Eigen::Index n, Eigen::Index d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  m.rowwise().normalize();
  return m;
}

template <auto Fn>
void nearest(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), 64, 1), c = random_rows(50, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, c));
}

template <auto Fn>
void knn(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), 60, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, 10));
}

template <auto Fn>
void ridge_solve(benchmark::State& state) {
  const Matrix u = random_rows(100, 64, 4), x = random_rows(state.range(0), 64, 5);
  Eigen::MatrixXd gram = u * u.transpose();
  gram.diagonal().array() += 5.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  const Matrix rhs = x * u.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(llt, rhs));
}

template <auto Fn>
void center_grad(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), 64, 6), s = random_rows(10, 64, 7), dl = random_rows(state.range(0), 10, 8);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, dl, s, 0.01));
}

}  // namespace

BENCHMARK(nearest<serial::nearest_sq_euclidean>)->Name("nearest_sq_euclidean/serial")->Arg(4000)->Arg(16000);
BENCHMARK(nearest<omp::nearest_sq_euclidean>)->Name("nearest_sq_euclidean/omp")->Arg(4000)->Arg(16000);
BENCHMARK(nearest<serial::argmax_cosine>)->Name("argmax_cosine/serial")->Arg(4000)->Arg(16000);
BENCHMARK(nearest<omp::argmax_cosine>)->Name("argmax_cosine/omp")->Arg(4000)->Arg(16000);
BENCHMARK(knn<serial::knn_cosine>)->Name("knn_cosine/serial")->Arg(1000)->Arg(4000);
BENCHMARK(knn<omp::knn_cosine>)->Name("knn_cosine/omp")->Arg(1000)->Arg(4000);
BENCHMARK(ridge_solve<serial::solve_rows_spd>)->Name("solve_rows_spd/serial")->Arg(4000)->Arg(16000);
BENCHMARK(ridge_solve<omp::solve_rows_spd>)->Name("solve_rows_spd/omp")->Arg(4000)->Arg(16000);
BENCHMARK(center_grad<serial::accumulate_center_grad>)->Name("accumulate_center_grad/serial")->Arg(256)->Arg(4096);
BENCHMARK(center_grad<omp::accumulate_center_grad>)->Name("accumulate_center_grad/omp")->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
