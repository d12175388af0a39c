#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "velocity/domain.hpp"

// Scripted platform activity. Submissions carry a scenario-local `key` so that
// later events (reposts, author deletions) can refer to posts whose real ids
// the platform assigns at run time.
namespace velocity::sim {

struct UserEvent {
  Timestamp at = 0;
  User user;
};

struct SubmitEvent {
  Timestamp at = 0;
  std::uint64_t key = 0;
  UserId author{};
  std::string text;
  bool has_picture = false;
  std::optional<std::uint64_t> parent_key;
};

struct DeleteEvent {
  Timestamp at = 0;
  UserId author{};
  std::uint64_t key = 0;
};

using ScenarioEvent = std::variant<UserEvent, SubmitEvent, DeleteEvent>;
using Scenario = std::vector<ScenarioEvent>;

Timestamp event_time(const ScenarioEvent& e);

std::string to_json_line(const ScenarioEvent& e);
ScenarioEvent scenario_event_from_json(std::string_view line);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const Scenario& scenario);

}  // namespace velocity::sim
