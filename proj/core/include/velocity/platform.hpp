#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "velocity/domain.hpp"
#include "velocity/fetch.hpp"
#include "velocity/policy.hpp"
#include "velocity/rng.hpp"
#include "velocity/scenario.hpp"

namespace velocity::sim {

class AccountClosedError : public Error {
 public:
  using Error::Error;
};
class NotFoundError : public Error {
 public:
  using Error::Error;
};
class NotOwnerError : public Error {
 public:
  using Error::Error;
};
class AlreadyDeletedError : public Error {
 public:
  using Error::Error;
};

struct Published {
  PostId post_id{};
};
struct RejectedExplicit {
  std::string message;
};
struct HeldImplicit {
  PostId post_id{};
  Timestamp release_or_delete_at = 0;
};
struct CamouflagedPublished {
  PostId post_id{};
};

using SubmitOutcome = std::variant<Published, RejectedExplicit, HeldImplicit, CamouflagedPublished>;

std::optional<PostId> stored_id(const SubmitOutcome& outcome);

// Why the platform removed or changed something.
enum class Cause {
  Author,        // the author deleted it
  HoldReview,    // an implicit hold resolved as a deletion
  Watchlist,     // a watched user's post was flagged on review
  RetroSweep,    // retroactive keyword sweep
  ChainSweep,    // repost-chain mass deletion
  Release,       // an implicit hold was released
  Closure,       // account closed after too many system deletions
};

std::string_view to_string(Cause cause);
Cause cause_from_string(std::string_view s);

enum class ActionKind { SystemDelete, GeneralDelete, HoldReleased, AccountClosed };

struct CensorAction {
  Timestamp at = 0;
  ActionKind kind = ActionKind::SystemDelete;
  Cause cause = Cause::Author;
  std::optional<PostId> post_id;
  UserId user_id{};

  friend bool operator==(const CensorAction&, const CensorAction&) = default;
};

struct GroundTruthEntry {
  PostId post_id{};
  UserId user_id{};
  DeletionKind kind = DeletionKind::SystemDeleted;
  Timestamp true_deletion_time = 0;
  Timestamp created_at = 0;
  Cause cause = Cause::Author;

  friend bool operator==(const GroundTruthEntry&, const GroundTruthEntry&) = default;
};

std::string to_json_line(const GroundTruthEntry& entry);
GroundTruthEntry ground_truth_from_json(std::string_view line);

// Outcome of one scripted scenario event, kept for inspection.
struct ScriptOutcome {
  Timestamp at = 0;
  std::uint64_t key = 0;
  std::optional<PostId> post_id;
  std::string result;  // "published", "held", "camouflaged", "rejected", or an error message
};

// Deterministic simulated microblog service. Every public member is one
// serialized command: concurrent callers are admitted, but commands execute in
// a single total order, and all behaviour is a function of (policy, seed,
// command order). Commands carrying `now` first advance the virtual clock to
// `now`, running every scheduled platform action due by then.
class Platform final : public FetchBackend {
 public:
  Platform(CensorPolicy policy, std::uint64_t seed);

  void add_user(const User& user);
  // Scripted events run inside tick() at their timestamps.
  void load_scenario(const Scenario& scenario);
  // Per-minute request budget for a crawler credential. Unregistered
  // credentials are not rate-limited.
  void register_credential(const std::string& name, std::uint32_t per_minute);

  SubmitOutcome submit_post(UserId author, const std::string& text, bool has_picture,
                            std::optional<PostId> parent_id, Timestamp now);
  void user_delete_post(UserId author, PostId id, Timestamp now);

  Fetched<Timeline> user_timeline(UserId target, const Credential& viewer, Timestamp now) override;
  Fetched<Timeline> public_timeline(const Credential& viewer, Timestamp now) override;
  Fetched<Probe> post(PostId id, const Credential& viewer, Timestamp now) override;
  Fetched<std::vector<PostRef>> search(const std::string& term, const Credential& viewer,
                                       Timestamp now);

  std::vector<CensorAction> tick(Timestamp until);

  Timestamp now() const;
  std::vector<GroundTruthEntry> ground_truth() const;
  std::vector<CensorAction> actions() const;
  std::vector<ScriptOutcome> script_log() const;
  std::vector<Post> all_posts() const;
  std::vector<User> users() const;
  std::optional<User> user(UserId id) const;
  std::optional<PostId> post_for_key(std::uint64_t scenario_key) const;
  // Time of the earliest pending scheduled action, if any.
  std::optional<Timestamp> next_event_time() const;
  const CensorPolicy& policy() const { return policy_; }

 private:
  enum class Visibility { Held, Visible, Camouflaged, GeneralDeleted, SystemDeleted };

  struct PostState {
    PostRef post;
    Visibility vis = Visibility::Visible;
    bool delete_scheduled = false;
    std::size_t hold_rule = 0;
  };

  struct UserState {
    User user;
    std::vector<std::uint32_t> posts;  // slots in creation order
    std::uint32_t system_deletions = 0;
    std::optional<std::size_t> watch;  // index into policy watchlist
  };

  enum class EventKind {
    ScriptUser,
    ScriptSubmit,
    ScriptDelete,
    HoldDue,
    WatchDue,
    SweepFire,
    ScheduledDelete,
    CapacityWake,
  };

  struct Event {
    Timestamp at = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::CapacityWake;
    std::uint32_t slot = 0;   // post slot, script index, or sweep index
    Cause cause = Cause::Author;
    bool operator>(const Event& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  struct Review {
    bool hold = false;
    std::uint32_t slot = 0;
  };

  struct RateWindow {
    std::uint32_t budget = 0;
    std::int64_t minute = -1;
    std::uint32_t used = 0;
  };

  void advance(Timestamp until);
  void run_event(const Event& e);
  void drain_reviews(Timestamp t);
  void run_review(const Review& r, Timestamp t);
  void schedule(Timestamp at, EventKind kind, std::uint32_t slot = 0, Cause cause = Cause::Author);

  SubmitOutcome submit_locked(UserId author, const std::string& text, bool has_picture,
                              std::optional<PostId> parent_id, Timestamp now);
  void delete_locked(UserId author, PostId id, Timestamp now);
  void publish(std::uint32_t slot, Timestamp t);
  void system_delete(std::uint32_t slot, Timestamp t, Cause cause);
  void condemn_chain(PostId chain, Timestamp t);
  bool charge(const Credential& viewer, Timestamp now);

  std::optional<std::uint32_t> slot_of(PostId id) const;
  bool visible_to(const PostState& s, const Credential& viewer) const;
  bool author_closed(const PostState& s) const;

  CensorPolicy policy_;
  Rng censor_rng_;
  Rng public_rng_;
  Timestamp clock_ = 0;
  std::uint64_t next_seq_ = 0;

  std::vector<PostState> posts_;
  std::vector<std::uint32_t> originals_;  // slots of regular posts, creation order
  std::unordered_map<UserId, UserState> users_;
  std::unordered_map<PostId, std::vector<std::uint32_t>> chains_;
  std::unordered_set<PostId> condemned_chains_;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::deque<Review> reviews_;
  std::int64_t review_hour_ = -1;
  std::uint32_t reviews_this_hour_ = 0;
  std::optional<Timestamp> wake_at_;

  Scenario script_;
  std::unordered_map<std::uint64_t, PostId> keys_;
  std::vector<ScriptOutcome> script_log_;

  std::vector<CensorAction> actions_;
  std::vector<GroundTruthEntry> ground_truth_;
  std::unordered_map<std::string, RateWindow> rate_;

  mutable std::mutex mu_;
};

}  // namespace velocity::sim
