#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "velocity/domain.hpp"

namespace velocity::sim {

enum class RuleAction { Explicit, Implicit, Camouflage };

struct KeywordRule {
  std::string pattern;  // plain substring
  RuleAction action = RuleAction::Explicit;
  // Implicit only: how long the post is held before a reviewer resolves it,
  // and the chance the resolution is a deletion instead of a release.
  Seconds review_delay = 0;
  double delete_probability = 0.0;
  std::string message = "this operation cannot be processed";
};

// Retroactive keyword sweep: every visible post containing `pattern` is
// system-deleted, spread evenly over [fire_at, fire_at + completion_window).
struct RetroSweep {
  std::string pattern;
  Timestamp fire_at = 0;
  Seconds completion_window = 5 * kMinute;
};

struct WatchlistEntry {
  UserId user_id{};
  Seconds review_latency = 0;
  double deletion_probability_per_review = 0.0;
};

inline constexpr std::uint32_t kUnlimitedCapacity = std::numeric_limits<std::uint32_t>::max();

struct CensorPolicy {
  std::vector<KeywordRule> keyword_rules;
  std::vector<RetroSweep> retro_sweeps;
  std::vector<WatchlistEntry> watchlist;
  bool chain_mass_delete = false;
  Seconds chain_delete_window = 5 * kMinute;
  std::vector<std::string> banned_search_terms;
  // Reviews per virtual hour of day; overflow waits FIFO for later hours.
  std::array<std::uint32_t, 24> hourly_reviewer_capacity = filled_capacity(kUnlimitedCapacity);
  std::optional<std::uint32_t> account_closure_threshold;

  std::size_t timeline_page = 50;
  std::size_t public_half_size = 100;
  // Ages of the two public-timeline halves, in seconds.
  Seconds public_recent_min_age = kMinute;
  Seconds public_recent_max_age = 5 * kMinute;
  Seconds public_old_min_age = kHour;
  Seconds public_old_max_age = 6 * kHour;

  static std::array<std::uint32_t, 24> filled_capacity(std::uint32_t per_hour) {
    std::array<std::uint32_t, 24> a{};
    a.fill(per_hour);
    return a;
  }
};

// Throws ValidationError naming the offending field.
void validate(const CensorPolicy& policy);

CensorPolicy policy_from_json(std::string_view text);
std::string policy_to_json(const CensorPolicy& policy);
CensorPolicy load_policy(const std::filesystem::path& path);

}  // namespace velocity::sim
