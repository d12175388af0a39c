#pragma once

#include <cstdint>
#include <string>

#include "velocity/crawler.hpp"
#include "velocity/policy.hpp"
#include "velocity/rng.hpp"
#include "velocity/scenario.hpp"

// A synthetic reference workload: a censor policy exercising every mechanism,
// a multi-day scenario with planted topics, and a matching crawl plan.
namespace velocity::reference {

struct Options {
  std::uint64_t seed = 1;
  std::size_t users = 2000;
  std::size_t posts = 100000;
  std::size_t days = 3;
  std::size_t tracked = 100;  // the first `tracked` users are the sensitive cohort
};

struct Bundle {
  sim::CensorPolicy policy;
  sim::Scenario scenario;
  crawl::CrawlPlan plan;
  Timestamp end = 0;  // virtual time by which every scheduled action has run
};

Bundle make(const Options& options);

// Keywords the reference policy reacts to.
inline constexpr const char* kExplicitKeyword = "法轮功";
inline constexpr const char* kHoldKeyword = "抗议";
inline constexpr const char* kCamouflageKeyword = "翻墙";
inline constexpr const char* kSweepKeyword = "37人";

// Filler text drawn from a fixed pool of CJK characters.
std::string filler(Rng& rng, std::size_t min_len, std::size_t max_len);

}  // namespace velocity::reference
