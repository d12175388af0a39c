#include <benchmark/benchmark.h>

#include "velocity/crawler.hpp"
#include "velocity/platform.hpp"

using namespace velocity;

namespace {

// One virtual hour of minute polls over `users` timelines of 50 posts each.
void BM_CrawlHour(benchmark::State& state) {
  const auto users = static_cast<std::uint64_t>(state.range(0));
  std::uint64_t polls = 0;
  for (auto _ : state) {
    state.PauseTiming();
    sim::CensorPolicy policy;
    sim::Platform p(policy, 1);
    crawl::CrawlPlan plan;
    plan.poll_public = false;
    plan.credentials.push_back({Credential{"bench", std::nullopt}, 1000000});
    for (std::uint64_t u = 1; u <= users; ++u) {
      p.add_user(User{UserId{u}});
      plan.tracked_users.push_back(UserId{u});
    }
    for (int i = 0; i < 50; ++i) {
      for (std::uint64_t u = 1; u <= users; ++u) p.submit_post(UserId{u}, "post", false, {}, 0);
    }
    store::PostLog log;
    crawl::Crawler c(p, plan, log);
    state.ResumeTiming();
    polls += c.run(kHour).user_polls;
  }
  state.counters["polls/s"] = benchmark::Counter(static_cast<double>(polls), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_CrawlHour)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TokenBucket(benchmark::State& state) {
  crawl::TokenBucket bucket(150);
  Timestamp now = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bucket.try_take(now));
    now += 1;
  }
}
BENCHMARK(BM_TokenBucket);

}  // namespace
