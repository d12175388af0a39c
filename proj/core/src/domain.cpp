#include "velocity/domain.hpp"

#include "velocity/utf8.hpp"

namespace velocity {

void validate(const Post& post) {
  if (post.repost_root_id.has_value() != post.parent_id.has_value()) {
    throw ValidationError("post " + std::to_string(raw(post.post_id)) +
                          ": repost_root_id must be present exactly when parent_id is");
  }
  if (utf8::length(post.text) > kMaxPostLength) {
    throw ValidationError("post " + std::to_string(raw(post.post_id)) +
                          ": text exceeds 140 characters");
  }
}

std::optional<DeletionKind> classify(ProbeCode code) {
  switch (code) {
    case ProbeCode::PermissionDenied:
      return DeletionKind::SystemDeleted;
    case ProbeCode::PostDoesNotExist:
      return DeletionKind::GeneralDeleted;
    case ProbeCode::Visible:
      break;
  }
  return std::nullopt;
}

std::string_view to_string(DeletionKind kind) {
  return kind == DeletionKind::SystemDeleted ? "SystemDeleted" : "GeneralDeleted";
}

DeletionKind deletion_kind_from_string(std::string_view s) {
  if (s == "SystemDeleted") return DeletionKind::SystemDeleted;
  if (s == "GeneralDeleted") return DeletionKind::GeneralDeleted;
  throw ValidationError("unknown deletion kind '" + std::string(s) + "'");
}

double lifetime_minutes(Timestamp created_at, Timestamp detected_at) {
  if (detected_at < created_at) {
    throw InvalidInterval("detection at " + std::to_string(detected_at) +
                          " precedes creation at " + std::to_string(created_at));
  }
  return static_cast<double>(detected_at - created_at) / 60.0;
}

DeletionRecord make_deletion_record(const Post& post, DeletionKind kind, Timestamp detected_at) {
  return DeletionRecord{post.post_id,        post.user_id, kind, post.created_at, detected_at,
                        lifetime_minutes(post.created_at, detected_at)};
}

}  // namespace velocity
