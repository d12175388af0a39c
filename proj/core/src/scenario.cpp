#include "velocity/scenario.hpp"

#include "json_detail.hpp"
#include "velocity/storage.hpp"

namespace velocity::sim {

using detail::field;
using detail::field_or;
using detail::Json;

Timestamp event_time(const ScenarioEvent& e) {
  return std::visit([](const auto& ev) { return ev.at; }, e);
}

std::string to_json_line(const ScenarioEvent& e) {
  Json j;
  if (const auto* u = std::get_if<UserEvent>(&e)) {
    j["type"] = "user";
    j["at"] = u->at;
    const Json user = detail::to_json(u->user);
    for (const auto& [k, v] : user.items()) j[k] = v;
  } else if (const auto* s = std::get_if<SubmitEvent>(&e)) {
    j["type"] = "submit";
    j["at"] = s->at;
    j["key"] = s->key;
    j["author"] = raw(s->author);
    j["text"] = s->text;
    j["has_picture"] = s->has_picture;
    j["parent_key"] = s->parent_key ? Json(*s->parent_key) : Json(nullptr);
  } else {
    const auto& d = std::get<DeleteEvent>(e);
    j["type"] = "delete";
    j["at"] = d.at;
    j["author"] = raw(d.author);
    j["key"] = d.key;
  }
  return j.dump();
}

ScenarioEvent scenario_event_from_json(std::string_view line) {
  const Json j = detail::parse(line);
  const auto type = field<std::string>(j, "type");
  const auto at = field<Timestamp>(j, "at");
  if (type == "user") {
    return UserEvent{at, detail::user_from(j)};
  }
  if (type == "submit") {
    SubmitEvent s;
    s.at = at;
    s.key = field<std::uint64_t>(j, "key");
    s.author = UserId{field<std::uint64_t>(j, "author")};
    s.text = field<std::string>(j, "text");
    s.has_picture = field_or<bool>(j, "has_picture", false);
    s.parent_key = field_or<std::optional<std::uint64_t>>(j, "parent_key", std::nullopt);
    return s;
  }
  if (type == "delete") {
    return DeleteEvent{at, UserId{field<std::uint64_t>(j, "author")},
                       field<std::uint64_t>(j, "key")};
  }
  throw ValidationError("unknown scenario event type '" + type + "'");
}

Scenario load_scenario(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("scenario file '" + path.string() + "' does not exist");
  }
  return store::read_all<ScenarioEvent>(path, scenario_event_from_json);
}

void save_scenario(const std::filesystem::path& path, const Scenario& scenario) {
  store::write_all(path, scenario, [](const ScenarioEvent& e) { return to_json_line(e); });
}

}  // namespace velocity::sim
