#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace velocity {

// Virtual-clock time in integer seconds.
using Timestamp = std::int64_t;
using Seconds = std::int64_t;

inline constexpr Seconds kMinute = 60;
inline constexpr Seconds kHour = 3600;
inline constexpr Seconds kDay = 86400;
inline constexpr std::size_t kMaxPostLength = 140;

enum class PostId : std::uint64_t {};
enum class UserId : std::uint64_t {};

constexpr std::uint64_t raw(PostId id) { return static_cast<std::uint64_t>(id); }
constexpr std::uint64_t raw(UserId id) { return static_cast<std::uint64_t>(id); }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInterval : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Post {
  PostId post_id{};
  UserId user_id{};
  std::string text;  // UTF-8
  bool has_picture = false;
  Timestamp created_at = 0;
  std::optional<PostId> parent_id;
  std::optional<PostId> repost_root_id;

  bool is_repost() const { return parent_id.has_value(); }
  // Identifier shared by every post of one repost tree; the root's own id for
  // the root itself.
  PostId chain_key() const { return repost_root_id.value_or(post_id); }

  friend bool operator==(const Post&, const Post&) = default;
};

// Throws ValidationError when the lineage or length invariants are broken.
void validate(const Post& post);

enum class AccountStatus { Active, Closed };

struct User {
  UserId user_id{};
  std::uint64_t followers_count = 0;
  std::uint64_t friends_count = 0;
  std::uint64_t posts_count = 0;
  bool verified = false;
  AccountStatus status = AccountStatus::Active;

  friend bool operator==(const User&, const User&) = default;
};

enum class DeletionKind { SystemDeleted, GeneralDeleted };

// Result of probing one post id.
enum class ProbeCode { Visible, PostDoesNotExist, PermissionDenied };

std::optional<DeletionKind> classify(ProbeCode code);

std::string_view to_string(DeletionKind kind);
DeletionKind deletion_kind_from_string(std::string_view s);

struct DeletionRecord {
  PostId post_id{};
  UserId user_id{};
  DeletionKind kind = DeletionKind::GeneralDeleted;
  Timestamp created_at = 0;
  Timestamp detected_at = 0;
  double lifetime = 0.0;  // minutes

  friend bool operator==(const DeletionRecord&, const DeletionRecord&) = default;
};

// Minutes between creation and detection. Throws InvalidInterval when the
// detection precedes the creation.
double lifetime_minutes(Timestamp created_at, Timestamp detected_at);

DeletionRecord make_deletion_record(const Post& post, DeletionKind kind, Timestamp detected_at);

}  // namespace velocity

template <>
struct std::hash<velocity::PostId> {
  std::size_t operator()(velocity::PostId id) const noexcept {
    return std::hash<std::uint64_t>{}(velocity::raw(id));
  }
};

template <>
struct std::hash<velocity::UserId> {
  std::size_t operator()(velocity::UserId id) const noexcept {
    return std::hash<std::uint64_t>{}(velocity::raw(id));
  }
};
