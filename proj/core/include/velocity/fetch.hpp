#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "velocity/domain.hpp"

namespace velocity {

// A crawler account. `account` is the platform user the credential logs in
// as, which decides what author-only content it can see.
struct Credential {
  std::string name;
  std::optional<UserId> account;
};

enum class FetchFailure { RateLimited, AccountClosed, Blocked };

std::string_view to_string(FetchFailure failure);

using PostRef = std::shared_ptr<const Post>;

template <class T>
using Fetched = std::variant<T, FetchFailure>;

template <class T>
bool ok(const Fetched<T>& f) {
  return std::holds_alternative<T>(f);
}

using Timeline = std::vector<PostRef>;

struct Probe {
  ProbeCode code = ProbeCode::PostDoesNotExist;
  PostRef post;  // set only when code == Visible
};

// The three read operations any backend (simulator, recorded fixture, live
// adapter) has to provide. "post does not exist" and "permission denied" are
// payloads of a successful probe; only rate limiting and closed accounts fail.
class FetchBackend {
 public:
  virtual ~FetchBackend() = default;

  // Newest-first, at most one page.
  virtual Fetched<Timeline> user_timeline(UserId target, const Credential& viewer,
                                          Timestamp now) = 0;
  virtual Fetched<Timeline> public_timeline(const Credential& viewer, Timestamp now) = 0;
  virtual Fetched<Probe> post(PostId id, const Credential& viewer, Timestamp now) = 0;
};

}  // namespace velocity
