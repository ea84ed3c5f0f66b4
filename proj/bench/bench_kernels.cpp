// OpenMP kernels against their serial references.

#include "recomb/kernels.hpp"
#include "recomb/sparse.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace recomb;

namespace {

std::vector<EncodedDoc> make_docs(std::int32_t vocab, int docs, int len) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int32_t> word(0, vocab - 1);
  std::vector<EncodedDoc> out(static_cast<std::size_t>(docs));
  for (int d = 0; d < docs; ++d) {
    out[d].slice = d % 4;
    out[d].weight = d % 3 == 0 ? 2.0 : 1.0;
    for (int i = 0; i < len; ++i) out[d].ids.push_back(word(rng));
  }
  return out;
}

Mat random_mat(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

CsrMatrix random_sparse(std::int32_t n, double density) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  std::vector<Triplet> upper;
  for (std::int32_t i = 0; i < n; ++i)
    for (std::int32_t j = i + 1; j < n; ++j)
      if (u(rng) < density) upper.push_back({i, j, u(rng)});
  return CsrMatrix::from_upper(n, upper);
}

template <auto Fn>
void BM_count_pairs(benchmark::State& state) {
  const auto docs = make_docs(5000, static_cast<int>(state.range(0)), 60);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(docs, 4, 5000, WindowSpec{5, false}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Fn>
void BM_spmm(benchmark::State& state) {
  const auto y = random_sparse(static_cast<std::int32_t>(state.range(0)), 0.01);
  const Mat w = random_mat(state.range(0), 50, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(y, w));
}

template <auto Fn>
void BM_sparse_code(benchmark::State& state) {
  Mat dict = random_mat(200, 50, 4);
  dict.rowwise().normalize();
  const Mat x = random_mat(state.range(0), 50, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(dict, x, 5, nullptr));
}

template <auto Fn>
void BM_cosine_argmax(benchmark::State& state) {
  Mat atoms = random_mat(200, 50, 6);
  atoms.rowwise().normalize();
  const Mat x = random_mat(state.range(0), 50, 7);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(atoms, x));
}

}  // namespace

BENCHMARK(BM_count_pairs<kernels::count_pairs>)->Name("count_pairs/omp")->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_count_pairs<reference::count_pairs>)->Name("count_pairs/serial")->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_spmm<kernels::spmm>)->Name("spmm/omp")->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_spmm<reference::spmm>)->Name("spmm/serial")->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sparse_code<kernels::sparse_code>)->Name("sparse_code/omp")->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sparse_code<reference::sparse_code>)->Name("sparse_code/serial")->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_cosine_argmax<kernels::cosine_argmax>)->Name("cosine_argmax/omp")->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_cosine_argmax<reference::cosine_argmax>)->Name("cosine_argmax/serial")->Arg(20000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
