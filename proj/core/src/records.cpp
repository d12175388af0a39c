#include "velocity/records.hpp"

#include "json_detail.hpp"
#include "velocity/fetch.hpp"

namespace velocity {

std::string_view to_string(FetchFailure failure) {
  switch (failure) {
    case FetchFailure::RateLimited:
      return "rate-limited";
    case FetchFailure::AccountClosed:
      return "account-closed";
    case FetchFailure::Blocked:
      return "blocked";
  }
  return "unknown";
}

namespace detail {

Json parse(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

Json to_json(const Post& p) {
  Json j;
  j["post_id"] = raw(p.post_id);
  j["user_id"] = raw(p.user_id);
  j["text"] = p.text;
  j["has_picture"] = p.has_picture;
  j["created_at"] = p.created_at;
  j["parent_id"] = p.parent_id ? Json(raw(*p.parent_id)) : Json(nullptr);
  j["repost_root_id"] = p.repost_root_id ? Json(raw(*p.repost_root_id)) : Json(nullptr);
  return j;
}

Post post_from(const Json& j) {
  Post p;
  p.post_id = PostId{field<std::uint64_t>(j, "post_id")};
  p.user_id = UserId{field<std::uint64_t>(j, "user_id")};
  p.text = field<std::string>(j, "text");
  p.has_picture = field_or<bool>(j, "has_picture", false);
  p.created_at = field<Timestamp>(j, "created_at");
  if (auto v = field_or<std::optional<std::uint64_t>>(j, "parent_id", std::nullopt)) {
    p.parent_id = PostId{*v};
  }
  if (auto v = field_or<std::optional<std::uint64_t>>(j, "repost_root_id", std::nullopt)) {
    p.repost_root_id = PostId{*v};
  }
  validate(p);
  return p;
}

Json to_json(const User& u) {
  Json j;
  j["user_id"] = raw(u.user_id);
  j["followers_count"] = u.followers_count;
  j["friends_count"] = u.friends_count;
  j["posts_count"] = u.posts_count;
  j["verified"] = u.verified;
  j["status"] = u.status == AccountStatus::Active ? "active" : "closed";
  return j;
}

User user_from(const Json& j) {
  User u;
  u.user_id = UserId{field<std::uint64_t>(j, "user_id")};
  u.followers_count = field_or<std::uint64_t>(j, "followers_count", 0);
  u.friends_count = field_or<std::uint64_t>(j, "friends_count", 0);
  u.posts_count = field_or<std::uint64_t>(j, "posts_count", 0);
  u.verified = field_or<bool>(j, "verified", false);
  const auto status = field_or<std::string>(j, "status", "active");
  if (status == "active") {
    u.status = AccountStatus::Active;
  } else if (status == "closed") {
    u.status = AccountStatus::Closed;
  } else {
    throw ValidationError("field 'status' must be active or closed");
  }
  return u;
}

Json to_json(const DeletionRecord& r) {
  Json j;
  j["post_id"] = raw(r.post_id);
  j["user_id"] = raw(r.user_id);
  j["kind"] = std::string(to_string(r.kind));
  j["created_at"] = r.created_at;
  j["detected_at"] = r.detected_at;
  j["lifetime"] = r.lifetime;
  return j;
}

DeletionRecord deletion_from(const Json& j) {
  DeletionRecord r;
  r.post_id = PostId{field<std::uint64_t>(j, "post_id")};
  r.user_id = UserId{field<std::uint64_t>(j, "user_id")};
  r.kind = deletion_kind_from_string(field<std::string>(j, "kind"));
  r.created_at = field<Timestamp>(j, "created_at");
  r.detected_at = field<Timestamp>(j, "detected_at");
  r.lifetime = lifetime_minutes(r.created_at, r.detected_at);
  return r;
}

}  // namespace detail

std::string to_json_line(const Post& post) { return detail::to_json(post).dump(); }
std::string to_json_line(const User& user) { return detail::to_json(user).dump(); }
std::string to_json_line(const DeletionRecord& record) { return detail::to_json(record).dump(); }

Post post_from_json(std::string_view line) { return detail::post_from(detail::parse(line)); }
User user_from_json(std::string_view line) { return detail::user_from(detail::parse(line)); }
DeletionRecord deletion_from_json(std::string_view line) {
  return detail::deletion_from(detail::parse(line));
}

}  // namespace velocity
