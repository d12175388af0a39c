#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "velocity/domain.hpp"

namespace velocity::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kSelfCheck = 3 };

struct GenerateConfig {
  std::uint64_t seed = 1;
  fs::path out;
  std::size_t users = 2000;
  std::size_t posts = 100000;
  std::size_t days = 3;
  std::size_t tracked = 100;
};

struct SimulateConfig {
  std::uint64_t seed = 1;
  fs::path policy;
  fs::path scenario;
  fs::path out;  // parent of the run directory
  std::optional<Timestamp> until;
  // Copied into the run directory for `crawl`; defaults to plan.json beside
  // the scenario when that file exists.
  std::optional<fs::path> plan;
};

struct CrawlConfig {
  fs::path run;
  std::optional<fs::path> plan;  // defaults to <run>/plan.json
};

struct AnalyzeConfig {
  fs::path run;
  std::optional<fs::path> out;  // defaults to <run>/analysis
  double bin_width_min = 5.0;
  double sweep_window_min = 5.0;
  std::size_t sweep_min_count = 10;
  double sweep_min_age_hours = 24.0;
  std::vector<std::string> sweep_patterns;
  std::vector<std::string> topics;  // substrings for topic response time
  bool refit_check = false;
  std::size_t refit_records = 50000;
};

struct TopicsConfig {
  fs::path run;
  std::optional<fs::path> out;  // defaults to <run>/topics
  std::size_t ica_k = 5;
  double cos_threshold = 0.7;
  std::size_t words = 50;
  bool matrix_from_public = false;
  std::uint64_t min_daily = 20;
  std::size_t top_k = 1000;
};

// File names inside a run directory beyond the storage defaults.
inline constexpr const char* kPolicyCopy = "policy.json";
inline constexpr const char* kScenarioCopy = "scenario.jsonl";
inline constexpr const char* kPlanCopy = "plan.json";
inline constexpr const char* kRunFile = "run.json";
inline constexpr const char* kUsersFile = "users.jsonl";
inline constexpr const char* kCrawledPostsFile = "crawled_posts.jsonl";
inline constexpr const char* kClosuresFile = "closures.jsonl";
inline constexpr const char* kCrawlReportFile = "crawl_report.json";
inline constexpr const char* kMetaFile = "run_meta.json";

// Each command returns an ExitCode and reports progress on `log`. Errors
// propagate as exceptions; `exit_code_for` maps them.
int cmd_generate(const GenerateConfig& config, std::ostream& log);
// Returns the run directory through `run_dir` when given.
int cmd_simulate(const SimulateConfig& config, std::ostream& log, fs::path* run_dir = nullptr);
int cmd_crawl(const CrawlConfig& config, std::ostream& log);
int cmd_analyze(const AnalyzeConfig& config, std::ostream& log);
int cmd_topics(const TopicsConfig& config, std::ostream& log);

int exit_code_for(const std::exception& e);

// Exclusive claim on an output directory through a `.lock` file.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

class LockedError : public Error {
 public:
  using Error::Error;
};

}  // namespace velocity::cli
