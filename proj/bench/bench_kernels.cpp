// Serial reference vs OpenMP kernels, and serial vs parallel batch gradients.

#include <benchmark/benchmark.h>

#include <vector>

#include "cnet/collabonet.hpp"
#include "cnet/kernels.hpp"
#include "cnet/rng.hpp"

namespace {

using namespace cnet;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Gemm>
void bm_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Gemv>
void bm_gemv(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 3), x = random_vector(n, 4);
  std::vector<double> y(n);
  for (auto _ : state) {
    Gemv(a.data(), n, n, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

BENCHMARK(bm_gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<kernels::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_gemv<kernels::serial::gemv>)->Name("gemv/serial")->Arg(300)->Arg(1200);
BENCHMARK(bm_gemv<kernels::omp::gemv>)->Name("gemv/omp")->Arg(300)->Arg(1200);

struct BatchFixture {
  RunConfig config;
  Vocabulary vocab;
  TensorMap params;
  std::vector<IndexedSentence> sentences;
  std::vector<SentenceTask> tasks;

  BatchFixture() {
    config.dims.d_word = 50;
    config.dims.d_char = 16;
    config.dims.d_clwe = 60;
    config.dims.d_lstm = 64;
    Rng rng(7);
    std::vector<std::string> words;
    for (int i = 0; i < 200; ++i) words.push_back("w" + std::to_string(i));
    std::vector<std::vector<std::string>> token_lists;
    for (int s = 0; s < 10; ++s) {
      std::vector<std::string> tokens;
      for (int t = 0; t < 20; ++t) tokens.push_back(words[rng.next() % words.size()]);
      token_lists.push_back(tokens);
    }
    for (const auto& w : words) vocab.chars.add_word(w);
    vocab.words = WordEmbeddingTable(config.dims.d_word);
    for (const auto& w : words) vocab.words.add_random(w, rng);
    params = init_stm_parameters(config.dims, vocab, rng);
    for (const auto& tokens : token_lists) {
      IndexedSentence s = index_tokens(vocab, tokens);
      s.tags.assign(tokens.size(), Tag::O);
      sentences.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      SentenceTask task;
      task.sentence = &sentences[i];
      task.dropout_seed = i;
      tasks.push_back(std::move(task));
    }
  }
};

template <bool Parallel>
void bm_batch(benchmark::State& state) {
  static BatchFixture f;
  const TrainSettings settings{0.5, 0.3, true};
  const TensorMap alpha;
  for (auto _ : state) {
    auto g = Parallel ? batch_gradient_parallel(f.params, alpha, f.config.dims, f.tasks, settings)
                      : batch_gradient_serial(f.params, alpha, f.config.dims, f.tasks, settings);
    benchmark::DoNotOptimize(g);
  }
}

BENCHMARK(bm_batch<false>)->Name("batch_gradient/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_batch<true>)->Name("batch_gradient/parallel")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
