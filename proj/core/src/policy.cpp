#include "velocity/policy.hpp"

#include <fstream>
#include <sstream>

#include "json_detail.hpp"

namespace velocity::sim {

using detail::field;
using detail::field_or;
using detail::Json;

void validate(const CensorPolicy& p) {
  for (std::size_t i = 0; i < p.keyword_rules.size(); ++i) {
    const auto& r = p.keyword_rules[i];
    const std::string where = "keyword_rules[" + std::to_string(i) + "]";
    if (r.pattern.empty()) throw ValidationError(where + ".pattern must be nonempty");
    if (r.review_delay < 0) throw ValidationError(where + ".review_delay must be >= 0");
    if (r.delete_probability < 0.0 || r.delete_probability > 1.0) {
      throw ValidationError(where + ".delete_probability must be in [0,1]");
    }
  }
  for (std::size_t i = 0; i < p.retro_sweeps.size(); ++i) {
    const auto& s = p.retro_sweeps[i];
    const std::string where = "retro_sweeps[" + std::to_string(i) + "]";
    if (s.pattern.empty()) throw ValidationError(where + ".pattern must be nonempty");
    if (s.completion_window <= 0) throw ValidationError(where + ".completion_window must be > 0");
  }
  for (std::size_t i = 0; i < p.watchlist.size(); ++i) {
    const auto& w = p.watchlist[i];
    const std::string where = "watchlist[" + std::to_string(i) + "]";
    if (w.review_latency < 0) throw ValidationError(where + ".review_latency must be >= 0");
    if (w.deletion_probability_per_review < 0.0 || w.deletion_probability_per_review > 1.0) {
      throw ValidationError(where + ".deletion_probability_per_review must be in [0,1]");
    }
  }
  if (p.chain_delete_window <= 0) throw ValidationError("chain_delete_window must be > 0");
  if (p.account_closure_threshold && *p.account_closure_threshold == 0) {
    throw ValidationError("account_closure_threshold must be >= 1");
  }
  if (p.timeline_page == 0) throw ValidationError("timeline_page must be >= 1");
  if (p.public_recent_min_age > p.public_recent_max_age || p.public_recent_min_age < 0) {
    throw ValidationError("public.recent_age must be a nonnegative ordered range");
  }
  if (p.public_old_min_age > p.public_old_max_age || p.public_old_min_age < 0) {
    throw ValidationError("public.old_age must be a nonnegative ordered range");
  }
}

namespace {

RuleAction action_from(const std::string& s) {
  if (s == "explicit") return RuleAction::Explicit;
  if (s == "implicit") return RuleAction::Implicit;
  if (s == "camouflage") return RuleAction::Camouflage;
  throw ValidationError("keyword rule action must be explicit, implicit or camouflage, got '" +
                        s + "'");
}

const char* action_name(RuleAction a) {
  switch (a) {
    case RuleAction::Explicit:
      return "explicit";
    case RuleAction::Implicit:
      return "implicit";
    case RuleAction::Camouflage:
      return "camouflage";
  }
  return "explicit";
}

template <class F>
void each(const Json& j, const char* name, F f) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return;
  if (!it->is_array()) throw ValidationError(std::string("field '") + name + "' must be a list");
  std::size_t i = 0;
  for (const auto& item : *it) {
    try {
      f(item);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(name) + "[" + std::to_string(i) + "]: " + e.what());
    }
    ++i;
  }
}

}  // namespace

CensorPolicy policy_from_json(std::string_view text) {
  const Json j = detail::parse(text);
  if (!j.is_object()) throw ValidationError("policy must be an object");
  CensorPolicy p;
  each(j, "keyword_rules", [&](const Json& r) {
    KeywordRule rule;
    rule.pattern = field<std::string>(r, "pattern");
    rule.action = action_from(field<std::string>(r, "action"));
    rule.review_delay = field_or<Seconds>(r, "review_delay", 0);
    rule.delete_probability = field_or<double>(r, "delete_probability", 0.0);
    rule.message = field_or<std::string>(r, "message", rule.message);
    p.keyword_rules.push_back(std::move(rule));
  });
  each(j, "retro_sweeps", [&](const Json& s) {
    RetroSweep sweep;
    sweep.pattern = field<std::string>(s, "pattern");
    sweep.fire_at = field<Timestamp>(s, "fire_at");
    sweep.completion_window = field_or<Seconds>(s, "completion_window", 5 * kMinute);
    p.retro_sweeps.push_back(std::move(sweep));
  });
  each(j, "watchlist", [&](const Json& w) {
    WatchlistEntry e;
    e.user_id = UserId{field<std::uint64_t>(w, "user_id")};
    e.review_latency = field<Seconds>(w, "review_latency");
    e.deletion_probability_per_review = field<double>(w, "deletion_probability_per_review");
    p.watchlist.push_back(e);
  });
  p.chain_mass_delete = field_or<bool>(j, "chain_mass_delete", false);
  p.chain_delete_window = field_or<Seconds>(j, "chain_delete_window", 5 * kMinute);
  each(j, "banned_search_terms",
       [&](const Json& t) { p.banned_search_terms.push_back(t.get<std::string>()); });
  if (auto it = j.find("hourly_reviewer_capacity"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 24) {
      throw ValidationError("hourly_reviewer_capacity must list exactly 24 entries");
    }
    for (std::size_t h = 0; h < 24; ++h) {
      const Json& v = (*it)[h];
      if (v.is_string() && v.get<std::string>() == "unlimited") {
        p.hourly_reviewer_capacity[h] = kUnlimitedCapacity;
      } else if (v.is_number_unsigned()) {
        p.hourly_reviewer_capacity[h] = v.get<std::uint32_t>();
      } else {
        throw ValidationError("hourly_reviewer_capacity[" + std::to_string(h) +
                              "] must be a nonnegative integer or \"unlimited\"");
      }
    }
  }
  if (auto v = field_or<std::optional<std::uint32_t>>(j, "account_closure_threshold",
                                                      std::nullopt)) {
    p.account_closure_threshold = *v;
  }
  p.timeline_page = field_or<std::size_t>(j, "timeline_page", p.timeline_page);
  if (auto it = j.find("public"); it != j.end() && it->is_object()) {
    const Json& pub = *it;
    p.public_half_size = field_or<std::size_t>(pub, "half_size", p.public_half_size);
    p.public_recent_min_age = field_or<Seconds>(pub, "recent_min_age", p.public_recent_min_age);
    p.public_recent_max_age = field_or<Seconds>(pub, "recent_max_age", p.public_recent_max_age);
    p.public_old_min_age = field_or<Seconds>(pub, "old_min_age", p.public_old_min_age);
    p.public_old_max_age = field_or<Seconds>(pub, "old_max_age", p.public_old_max_age);
  }
  validate(p);
  return p;
}

std::string policy_to_json(const CensorPolicy& p) {
  Json j;
  j["keyword_rules"] = Json::array();
  for (const auto& r : p.keyword_rules) {
    Json rule;
    rule["pattern"] = r.pattern;
    rule["action"] = action_name(r.action);
    if (r.action == RuleAction::Implicit) {
      rule["review_delay"] = r.review_delay;
      rule["delete_probability"] = r.delete_probability;
    }
    if (r.action == RuleAction::Explicit) rule["message"] = r.message;
    j["keyword_rules"].push_back(rule);
  }
  j["retro_sweeps"] = Json::array();
  for (const auto& s : p.retro_sweeps) {
    j["retro_sweeps"].push_back(
        {{"pattern", s.pattern}, {"fire_at", s.fire_at}, {"completion_window", s.completion_window}});
  }
  j["watchlist"] = Json::array();
  for (const auto& w : p.watchlist) {
    j["watchlist"].push_back({{"user_id", raw(w.user_id)},
                              {"review_latency", w.review_latency},
                              {"deletion_probability_per_review", w.deletion_probability_per_review}});
  }
  j["chain_mass_delete"] = p.chain_mass_delete;
  j["chain_delete_window"] = p.chain_delete_window;
  j["banned_search_terms"] = p.banned_search_terms;
  Json caps = Json::array();
  for (auto c : p.hourly_reviewer_capacity) {
    caps.push_back(c == kUnlimitedCapacity ? Json("unlimited") : Json(c));
  }
  j["hourly_reviewer_capacity"] = caps;
  j["account_closure_threshold"] =
      p.account_closure_threshold ? Json(*p.account_closure_threshold) : Json(nullptr);
  j["timeline_page"] = p.timeline_page;
  j["public"] = {{"half_size", p.public_half_size},
                 {"recent_min_age", p.public_recent_min_age},
                 {"recent_max_age", p.public_recent_max_age},
                 {"old_min_age", p.public_old_min_age},
                 {"old_max_age", p.public_old_max_age}};
  return j.dump(2);
}

CensorPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read policy file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return policy_from_json(buf.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace velocity::sim
