#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "velocity/domain.hpp"
#include "velocity/fetch.hpp"
#include "velocity/storage.hpp"

namespace velocity::crawl {

struct CredentialBudget {
  Credential credential;
  std::uint32_t per_minute = 0;
};

struct CohortRules {
  std::uint32_t repost_threshold = 5;
  std::uint32_t deletion_threshold = 5;
  Seconds observation_window = 15 * kDay;
};

struct CrawlPlan {
  std::vector<UserId> tracked_users;
  Seconds user_poll_interval = kMinute;
  Seconds public_poll_interval = 4;
  std::vector<CredentialBudget> credentials;
  Timestamp start = 0;
  bool poll_public = true;
  // Fetch the parent of every newly seen repost so cohort growth can see
  // whose posts the tracked users repost.
  bool fetch_parents = false;
  std::optional<CohortRules> cohort;
  Seconds cohort_interval = kDay;
  std::size_t page_size = 50;
};

// Throws ValidationError naming the offending field.
void validate(const CrawlPlan& plan);
CrawlPlan plan_from_json(std::string_view text);
std::string plan_to_json(const CrawlPlan& plan);
CrawlPlan load_plan(const std::filesystem::path& path);

struct AccountClosedEvent {
  UserId user_id{};
  Timestamp detected_at = 0;
  std::vector<PostId> tracked_posts;
};

std::string to_json_line(const AccountClosedEvent& e);

struct CrawlReport {
  std::uint64_t posts_stored = 0;
  std::uint64_t public_posts_stored = 0;
  std::uint64_t system_deletions = 0;
  std::uint64_t general_deletions = 0;
  std::uint64_t user_polls = 0;
  std::uint64_t public_polls = 0;
  std::uint64_t probes = 0;
  std::uint64_t parent_fetches = 0;
  std::uint64_t deferrals = 0;
  std::uint64_t scrolled_out = 0;
  std::uint64_t accounts_closed = 0;
  std::vector<UserId> promoted;
  std::map<std::uint64_t, std::uint64_t> polls_per_user;
};

std::string report_to_json(const CrawlReport& report);

// Fixed-window token bucket: `capacity` tokens, refilled at each minute
// boundary of the virtual clock.
class TokenBucket {
 public:
  explicit TokenBucket(std::uint32_t per_minute) : capacity_(per_minute) {}
  bool try_take(Timestamp now);
  void drain(Timestamp now);
  std::uint32_t capacity() const { return capacity_; }

 private:
  void refill(Timestamp now);
  std::uint32_t capacity_;
  std::uint32_t tokens_ = 0;
  std::int64_t minute_ = -1;
};

enum class PollStatus { Completed, Deferred, AccountClosed };

struct PollResult {
  PollStatus status = PollStatus::Completed;
  std::vector<DeletionRecord> deletions;
  std::optional<AccountClosedEvent> closed;
};

// Stage 1: users whose posts were reposted more than `repost_threshold` times
// by the sensitive users. Parents must be present in `observed`.
std::vector<UserId> cohort_candidates(const CohortRules& rules, const store::PostLog& observed,
                                      const std::set<UserId>& sensitive);

// Stage 2: candidates with more than `deletion_threshold` deletions detected
// in (now - observation_window, now]. Returns the newly promoted users, in id
// order.
std::vector<UserId> grow_cohort(const CohortRules& rules, const store::PostLog& observed,
                                const std::vector<DeletionRecord>& deletions,
                                const std::set<UserId>& sensitive, Timestamp now);

struct CrawlSinks {
  store::JsonlWriter* deletions = nullptr;
  store::JsonlWriter* closures = nullptr;
  store::PostLog* public_corpus = nullptr;
};

// Polls timelines through any FetchBackend and turns disappearances inside
// the tracked window into classified DeletionRecords. Detector state is kept
// per user and serialized per user; storage appends are atomic.
class Crawler {
 public:
  Crawler(FetchBackend& backend, CrawlPlan plan, store::PostLog& posts, CrawlSinks sinks = {});

  PollResult poll_user(UserId target, Timestamp now);
  // Returns the number of new public posts stored, or nullopt when deferred.
  std::optional<std::size_t> poll_public(Timestamp now);

  CrawlReport run(Timestamp until);

  void track(UserId user);
  const std::vector<DeletionRecord>& deletions() const { return deletions_; }
  const std::vector<AccountClosedEvent>& closures() const { return closures_; }
  const std::set<UserId>& sensitive() const { return sensitive_; }
  const CrawlReport& report() const { return report_; }

 private:
  struct Seen {
    PostId id{};
    Timestamp created_at = 0;
  };

  struct UserState {
    std::vector<Seen> window;          // ids returned by the last timeline fetch
    std::deque<Seen> pending_probes;   // absent posts awaiting a probe
    bool closed = false;
    std::mutex mu;
  };

  const Credential* acquire(Timestamp now);
  void exhaust(const Credential& credential, Timestamp now);
  UserState& state(UserId user);
  bool drain_probes(UserId user, UserState& st, Timestamp now, std::vector<DeletionRecord>& out);
  void emit(const DeletionRecord& rec);
  void fetch_parent(PostId parent, Timestamp now);

  FetchBackend& backend_;
  CrawlPlan plan_;
  store::PostLog& posts_;
  CrawlSinks sinks_;
  store::PostLog own_public_;

  std::vector<TokenBucket> buckets_;
  std::size_t next_credential_ = 0;
  std::mutex bucket_mu_;

  std::unordered_map<UserId, std::unique_ptr<UserState>> users_;
  std::mutex users_mu_;

  std::set<UserId> sensitive_;
  std::vector<UserId> tracked_order_;
  std::vector<DeletionRecord> deletions_;
  std::vector<AccountClosedEvent> closures_;
  CrawlReport report_;
  std::mutex report_mu_;
};

}  // namespace velocity::crawl
