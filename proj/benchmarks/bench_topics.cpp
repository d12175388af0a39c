#include <benchmark/benchmark.h>

#include <cmath>

#include "velocity/reference.hpp"
#include "velocity/rng.hpp"
#include "velocity/topics.hpp"

using namespace velocity;

namespace {

std::vector<Post> corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Post> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(Post{PostId{i + 1}, UserId{1}, reference::filler(rng, 10, 80), false,
                       rng.between(0, kDay - 1), std::nullopt, std::nullopt});
  }
  return out;
}

void BM_CountTrigrams(benchmark::State& state) {
  const auto posts = corpus(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(topics::count_trigrams(posts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CountTrigrams)->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_DailyTopics(benchmark::State& state) {
  const auto month = corpus(20000, 2);
  auto deleted = corpus(2000, 3);
  for (auto& p : deleted) p.text += "北京特大暴雨遇难人数公布";
  for (auto _ : state) benchmark::DoNotOptimize(topics::daily_topics(deleted, month));
}
BENCHMARK(BM_DailyTopics)->Unit(benchmark::kMillisecond);

void BM_Connect(benchmark::State& state) {
  Rng rng(4);
  std::vector<topics::ScoredTrigram> sel;
  for (int i = 0; i < 1000; ++i) {
    sel.push_back({topics::Trigram{static_cast<char32_t>(0x4E00 + rng.below(40)),
                                   static_cast<char32_t>(0x4E00 + rng.below(40)),
                                   static_cast<char32_t>(0x4E00 + rng.below(40))},
                   30, rng.uniform()});
  }
  for (auto _ : state) benchmark::DoNotOptimize(topics::connect(sel));
}
BENCHMARK(BM_Connect);

void BM_Ica(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const int t = 72;
  Eigen::MatrixXd s(static_cast<Eigen::Index>(k), t);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    for (int c = 0; c < t; ++c) {
      const double wave = std::sin(0.13 * c * static_cast<double>(r + 1) + static_cast<double>(r));
      s(r, c) = r % 2 == 0 ? wave : (wave >= 0.0 ? 1.0 : -1.0);
    }
  }
  Eigen::MatrixXd mix(50, static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix(i) = rng.normal();
  const Eigen::MatrixXd x = mix * s;
  for (auto _ : state) benchmark::DoNotOptimize(topics::ica(x, k, 7));
}
BENCHMARK(BM_Ica)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace
