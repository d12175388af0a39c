#include <benchmark/benchmark.h>

#include <cmath>

#include "velocity/analytics.hpp"
#include "velocity/rng.hpp"

using namespace velocity;

namespace {

analytics::Design design(std::size_t n) {
  const auto truth = analytics::reference_regular_model();
  Rng rng(8);
  analytics::Design d;
  d.names = truth.feature_order;
  d.x.resize(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    d.x(i, 0) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    d.x(i, 1) = std::floor(rng.gamma(1.2) * 300.0);
    d.x(i, 2) = std::floor(rng.gamma(1.0) * 2000.0);
  }
  d.y = analytics::sample_nb2(truth, d, rng);
  return d;
}

void BM_FitNb2(benchmark::State& state) {
  const auto d = design(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(analytics::fit_nb2(d));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitNb2)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);

void BM_RepostSync(benchmark::State& state) {
  Rng rng(9);
  std::vector<Post> posts;
  std::vector<DeletionRecord> records;
  for (std::uint64_t i = 1; i <= 20000; ++i) {
    const PostId root{1 + (i - 1) / 20 * 20};
    const bool is_root = root == PostId{i};
    posts.push_back(Post{PostId{i}, UserId{i % 97}, "r", false, 0,
                         is_root ? std::nullopt : std::optional{root}, is_root ? std::nullopt : std::optional{root}});
    records.push_back(make_deletion_record(posts.back(), DeletionKind::SystemDeleted, rng.between(1, kDay)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(analytics::repost_sync(records, posts));
}
BENCHMARK(BM_RepostSync)->Unit(benchmark::kMillisecond);

}  // namespace
