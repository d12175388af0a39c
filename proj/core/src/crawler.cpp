#include "velocity/crawler.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "json_detail.hpp"
#include "velocity/records.hpp"

namespace velocity::crawl {

using detail::field;
using detail::field_or;
using detail::Json;

void validate(const CrawlPlan& plan) {
  if (plan.user_poll_interval <= 0) throw ValidationError("user_poll_interval must be > 0");
  if (plan.public_poll_interval <= 0) throw ValidationError("public_poll_interval must be > 0");
  if (plan.credentials.empty()) throw ValidationError("credentials must list at least one entry");
  if (plan.cohort_interval <= 0) throw ValidationError("cohort_interval must be > 0");
  if (plan.page_size == 0) throw ValidationError("page_size must be >= 1");
  if (plan.cohort) {
    if (plan.cohort->repost_threshold < 1) throw ValidationError("cohort.repost_threshold must be >= 1");
    if (plan.cohort->deletion_threshold < 1) {
      throw ValidationError("cohort.deletion_threshold must be >= 1");
    }
    if (plan.cohort->observation_window <= 0) {
      throw ValidationError("cohort.observation_window must be > 0");
    }
  }
}

CrawlPlan plan_from_json(std::string_view text) {
  const Json j = detail::parse(text);
  if (!j.is_object()) throw ValidationError("plan must be an object");
  CrawlPlan plan;
  if (auto it = j.find("tracked_users"); it != j.end()) {
    for (const auto& u : *it) plan.tracked_users.push_back(UserId{u.get<std::uint64_t>()});
  }
  plan.user_poll_interval = field_or<Seconds>(j, "user_poll_interval", plan.user_poll_interval);
  plan.public_poll_interval = field_or<Seconds>(j, "public_poll_interval", plan.public_poll_interval);
  if (auto it = j.find("credentials"); it != j.end()) {
    for (const auto& c : *it) {
      CredentialBudget cb;
      cb.credential.name = field<std::string>(c, "name");
      if (auto acc = c.find("account"); acc != c.end() && !acc->is_null()) {
        cb.credential.account = UserId{acc->get<std::uint64_t>()};
      }
      cb.per_minute = field<std::uint32_t>(c, "per_minute");
      plan.credentials.push_back(std::move(cb));
    }
  }
  plan.start = field_or<Timestamp>(j, "start", 0);
  plan.poll_public = field_or<bool>(j, "poll_public", true);
  plan.fetch_parents = field_or<bool>(j, "fetch_parents", false);
  if (auto it = j.find("cohort"); it != j.end() && it->is_object()) {
    CohortRules rules;
    rules.repost_threshold = field_or<std::uint32_t>(*it, "repost_threshold", 5);
    rules.deletion_threshold = field_or<std::uint32_t>(*it, "deletion_threshold", 5);
    rules.observation_window = field_or<Seconds>(*it, "observation_window", rules.observation_window);
    plan.cohort = rules;
  }
  plan.cohort_interval = field_or<Seconds>(j, "cohort_interval", plan.cohort_interval);
  plan.page_size = field_or<std::size_t>(j, "page_size", plan.page_size);
  validate(plan);
  return plan;
}

std::string plan_to_json(const CrawlPlan& plan) {
  Json j;
  j["tracked_users"] = Json::array();
  for (auto u : plan.tracked_users) j["tracked_users"].push_back(raw(u));
  j["user_poll_interval"] = plan.user_poll_interval;
  j["public_poll_interval"] = plan.public_poll_interval;
  j["credentials"] = Json::array();
  for (const auto& c : plan.credentials) {
    j["credentials"].push_back(
        {{"name", c.credential.name},
         {"account", c.credential.account ? Json(raw(*c.credential.account)) : Json(nullptr)},
         {"per_minute", c.per_minute}});
  }
  j["start"] = plan.start;
  j["poll_public"] = plan.poll_public;
  j["fetch_parents"] = plan.fetch_parents;
  if (plan.cohort) {
    j["cohort"] = {{"repost_threshold", plan.cohort->repost_threshold},
                   {"deletion_threshold", plan.cohort->deletion_threshold},
                   {"observation_window", plan.cohort->observation_window}};
  } else {
    j["cohort"] = nullptr;
  }
  j["cohort_interval"] = plan.cohort_interval;
  j["page_size"] = plan.page_size;
  return j.dump(2);
}

CrawlPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read plan file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return plan_from_json(buf.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string to_json_line(const AccountClosedEvent& e) {
  Json j;
  j["user_id"] = raw(e.user_id);
  j["detected_at"] = e.detected_at;
  j["tracked_posts"] = Json::array();
  for (auto id : e.tracked_posts) j["tracked_posts"].push_back(raw(id));
  return j.dump();
}

std::string report_to_json(const CrawlReport& r) {
  Json j;
  j["posts_stored"] = r.posts_stored;
  j["public_posts_stored"] = r.public_posts_stored;
  j["system_deletions"] = r.system_deletions;
  j["general_deletions"] = r.general_deletions;
  j["user_polls"] = r.user_polls;
  j["public_polls"] = r.public_polls;
  j["probes"] = r.probes;
  j["parent_fetches"] = r.parent_fetches;
  j["deferrals"] = r.deferrals;
  j["scrolled_out"] = r.scrolled_out;
  j["accounts_closed"] = r.accounts_closed;
  j["promoted"] = Json::array();
  for (auto u : r.promoted) j["promoted"].push_back(raw(u));
  Json per_user = Json::object();
  for (const auto& [u, n] : r.polls_per_user) per_user[std::to_string(u)] = n;
  j["polls_per_user"] = per_user;
  return j.dump(2);
}

void TokenBucket::refill(Timestamp now) {
  const std::int64_t minute = now / kMinute;
  if (minute != minute_) {
    minute_ = minute;
    tokens_ = capacity_;
  }
}

bool TokenBucket::try_take(Timestamp now) {
  refill(now);
  if (tokens_ == 0) return false;
  --tokens_;
  return true;
}

void TokenBucket::drain(Timestamp now) {
  refill(now);
  tokens_ = 0;
}

std::vector<UserId> cohort_candidates(const CohortRules& rules, const store::PostLog& observed,
                                      const std::set<UserId>& sensitive) {
  std::map<std::uint64_t, std::uint32_t> reposted;
  for (const Post& p : observed.posts()) {
    if (!p.parent_id || sensitive.count(p.user_id) == 0) continue;
    auto parent = observed.find(*p.parent_id);
    if (!parent || sensitive.count(parent->user_id) != 0) continue;
    ++reposted[raw(parent->user_id)];
  }
  std::vector<UserId> out;
  for (const auto& [user, count] : reposted) {
    if (count > rules.repost_threshold) out.push_back(UserId{user});
  }
  return out;
}

std::vector<UserId> grow_cohort(const CohortRules& rules, const store::PostLog& observed,
                                const std::vector<DeletionRecord>& deletions,
                                const std::set<UserId>& sensitive, Timestamp now) {
  std::vector<UserId> promoted;
  const auto candidates = cohort_candidates(rules, observed, sensitive);
  if (candidates.empty()) return promoted;
  std::unordered_map<UserId, std::uint32_t> recent;
  for (const auto& d : deletions) {
    if (d.detected_at > now - rules.observation_window && d.detected_at <= now) ++recent[d.user_id];
  }
  for (UserId u : candidates) {
    auto it = recent.find(u);
    if (it != recent.end() && it->second > rules.deletion_threshold) promoted.push_back(u);
  }
  return promoted;
}

Crawler::Crawler(FetchBackend& backend, CrawlPlan plan, store::PostLog& posts, CrawlSinks sinks)
    : backend_(backend), plan_(std::move(plan)), posts_(posts), sinks_(sinks) {
  validate(plan_);
  for (const auto& c : plan_.credentials) buckets_.emplace_back(c.per_minute);
  for (UserId u : plan_.tracked_users) {
    sensitive_.insert(u);
    track(u);
  }
}

void Crawler::track(UserId user) {
  std::lock_guard lock(users_mu_);
  if (users_.count(user) != 0) return;
  users_.emplace(user, std::make_unique<UserState>());
  tracked_order_.push_back(user);
}

Crawler::UserState& Crawler::state(UserId user) {
  std::lock_guard lock(users_mu_);
  auto it = users_.find(user);
  if (it == users_.end()) {
    throw ValidationError("user " + std::to_string(raw(user)) + " is not tracked");
  }
  return *it->second;
}

const Credential* Crawler::acquire(Timestamp now) {
  std::lock_guard lock(bucket_mu_);
  const std::size_t n = buckets_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = (next_credential_ + i) % n;
    if (buckets_[idx].try_take(now)) {
      next_credential_ = (idx + 1) % n;
      return &plan_.credentials[idx].credential;
    }
  }
  return nullptr;
}

void Crawler::exhaust(const Credential& credential, Timestamp now) {
  std::lock_guard lock(bucket_mu_);
  for (std::size_t i = 0; i < buckets_.size(); ++i) {
    if (plan_.credentials[i].credential.name == credential.name) buckets_[i].drain(now);
  }
}

void Crawler::emit(const DeletionRecord& rec) {
  std::lock_guard lock(report_mu_);
  deletions_.push_back(rec);
  if (rec.kind == DeletionKind::SystemDeleted) {
    ++report_.system_deletions;
  } else {
    ++report_.general_deletions;
  }
  if (sinks_.deletions) sinks_.deletions->write(to_json_line(rec));
}

bool Crawler::drain_probes(UserId user, UserState& st, Timestamp now,
                           std::vector<DeletionRecord>& out) {
  while (!st.pending_probes.empty()) {
    const Seen target = st.pending_probes.front();
    const Credential* cred = acquire(now);
    if (cred == nullptr) {
      std::lock_guard lock(report_mu_);
      ++report_.deferrals;
      return false;
    }
    auto probe = backend_.post(target.id, *cred, now);
    if (!ok(probe)) {
      exhaust(*cred, now);
      std::lock_guard lock(report_mu_);
      ++report_.deferrals;
      return false;
    }
    {
      std::lock_guard lock(report_mu_);
      ++report_.probes;
    }
    st.pending_probes.pop_front();
    const auto code = std::get<Probe>(probe).code;
    const auto kind = classify(code);
    if (!kind) continue;  // still visible; it only left the page
    auto stored = posts_.find(target.id);
    Post post = stored ? *stored : Post{target.id, user, {}, false, target.created_at, {}, {}};
    const auto rec = make_deletion_record(post, *kind, now);
    emit(rec);
    out.push_back(rec);
  }
  return true;
}

void Crawler::fetch_parent(PostId parent, Timestamp now) {
  const Credential* cred = acquire(now);
  if (cred == nullptr) return;
  auto probe = backend_.post(parent, *cred, now);
  if (!ok(probe)) {
    exhaust(*cred, now);
    return;
  }
  const auto& p = std::get<Probe>(probe);
  std::lock_guard lock(report_mu_);
  ++report_.parent_fetches;
  if (p.code == ProbeCode::Visible && p.post) {
    if (posts_.append(*p.post) == store::AppendResult::Stored) ++report_.posts_stored;
  }
}

PollResult Crawler::poll_user(UserId target, Timestamp now) {
  UserState& st = state(target);
  std::lock_guard user_lock(st.mu);
  PollResult result;
  if (st.closed) {
    result.status = PollStatus::AccountClosed;
    return result;
  }
  if (!drain_probes(target, st, now, result.deletions)) {
    result.status = PollStatus::Deferred;
    return result;
  }

  const Credential* cred = acquire(now);
  if (cred == nullptr) {
    std::lock_guard lock(report_mu_);
    ++report_.deferrals;
    result.status = PollStatus::Deferred;
    return result;
  }
  auto fetched = backend_.user_timeline(target, *cred, now);
  if (!ok(fetched)) {
    const auto failure = std::get<FetchFailure>(fetched);
    if (failure == FetchFailure::AccountClosed) {
      st.closed = true;
      AccountClosedEvent ev{target, now, {}};
      for (const auto& s : st.window) ev.tracked_posts.push_back(s.id);
      std::lock_guard lock(report_mu_);
      ++report_.accounts_closed;
      closures_.push_back(ev);
      if (sinks_.closures) sinks_.closures->write(to_json_line(ev));
      result.status = PollStatus::AccountClosed;
      result.closed = std::move(ev);
      return result;
    }
    exhaust(*cred, now);
    std::lock_guard lock(report_mu_);
    ++report_.deferrals;
    result.status = PollStatus::Deferred;
    return result;
  }

  const Timeline& timeline = std::get<Timeline>(fetched);
  std::vector<Seen> fresh;
  fresh.reserve(timeline.size());
  std::vector<PostId> parents;
  std::uint64_t stored = 0;
  for (const PostRef& p : timeline) {
    fresh.push_back(Seen{p->post_id, p->created_at});
    if (posts_.append(*p) == store::AppendResult::Stored) {
      ++stored;
      if (plan_.fetch_parents && p->parent_id && !posts_.contains(*p->parent_id)) {
        parents.push_back(*p->parent_id);
      }
    }
  }

  auto older = [](const Seen& a, const Seen& b) {
    if (a.created_at != b.created_at) return a.created_at < b.created_at;
    return raw(a.id) < raw(b.id);
  };
  const bool full = fresh.size() >= plan_.page_size;
  std::optional<Seen> oldest;
  for (const auto& s : fresh) {
    if (!oldest || older(s, *oldest)) oldest = s;
  }
  std::unordered_map<PostId, bool> present;
  present.reserve(fresh.size() * 2);
  for (const auto& s : fresh) present.emplace(s.id, true);

  std::vector<Seen> absent;
  std::uint64_t scrolled = 0;
  for (const auto& prev : st.window) {
    if (present.count(prev.id) != 0) continue;
    if (full && oldest && older(prev, *oldest)) {
      ++scrolled;
    } else {
      absent.push_back(prev);
    }
  }
  std::sort(absent.begin(), absent.end(), older);
  for (const auto& s : absent) st.pending_probes.push_back(s);
  st.window = std::move(fresh);
  {
    std::lock_guard lock(report_mu_);
    ++report_.user_polls;
    ++report_.polls_per_user[raw(target)];
    report_.posts_stored += stored;
    report_.scrolled_out += scrolled;
  }

  drain_probes(target, st, now, result.deletions);
  for (PostId parent : parents) fetch_parent(parent, now);
  return result;
}

std::optional<std::size_t> Crawler::poll_public(Timestamp now) {
  const Credential* cred = acquire(now);
  if (cred == nullptr) {
    std::lock_guard lock(report_mu_);
    ++report_.deferrals;
    return std::nullopt;
  }
  auto fetched = backend_.public_timeline(*cred, now);
  if (!ok(fetched)) {
    exhaust(*cred, now);
    std::lock_guard lock(report_mu_);
    ++report_.deferrals;
    return std::nullopt;
  }
  store::PostLog& corpus = sinks_.public_corpus ? *sinks_.public_corpus : own_public_;
  std::size_t stored = 0;
  for (const PostRef& p : std::get<Timeline>(fetched)) {
    if (corpus.append(*p) == store::AppendResult::Stored) ++stored;
  }
  std::lock_guard lock(report_mu_);
  ++report_.public_polls;
  report_.public_posts_stored += stored;
  return stored;
}

namespace {

enum class TaskKind { User, Public, Cohort };

struct Task {
  Timestamp at = 0;
  Timestamp order = 0;  // original due time; keeps deferred tasks round-robin fair
  std::uint64_t seq = 0;
  TaskKind kind = TaskKind::User;
  UserId user{};
  bool operator>(const Task& o) const {
    if (at != o.at) return at > o.at;
    if (order != o.order) return order > o.order;
    return seq > o.seq;
  }
};

Timestamp next_minute(Timestamp t) { return (t / kMinute + 1) * kMinute; }

}  // namespace

CrawlReport Crawler::run(Timestamp until) {
  std::priority_queue<Task, std::vector<Task>, std::greater<>> tasks;
  std::uint64_t seq = 0;
  const auto n = static_cast<Timestamp>(tracked_order_.size());
  for (Timestamp i = 0; i < n; ++i) {
    const Timestamp at = plan_.start + (i * plan_.user_poll_interval) / n;
    tasks.push(Task{at, at, seq++, TaskKind::User, tracked_order_[static_cast<std::size_t>(i)]});
  }
  if (plan_.poll_public) tasks.push(Task{plan_.start, plan_.start, seq++, TaskKind::Public, {}});
  if (plan_.cohort) {
    const Timestamp at = plan_.start + plan_.cohort_interval;
    tasks.push(Task{at, at, seq++, TaskKind::Cohort, {}});
  }

  while (!tasks.empty() && tasks.top().at <= until) {
    Task t = tasks.top();
    tasks.pop();
    switch (t.kind) {
      case TaskKind::User: {
        const auto res = poll_user(t.user, t.at);
        if (res.status == PollStatus::Deferred) {
          tasks.push(Task{next_minute(t.at), t.order, t.seq, t.kind, t.user});
        } else if (res.status == PollStatus::Completed) {
          const Timestamp next = t.at + plan_.user_poll_interval;
          tasks.push(Task{next, next, seq++, t.kind, t.user});
        }
        break;
      }
      case TaskKind::Public: {
        if (!poll_public(t.at)) {
          tasks.push(Task{next_minute(t.at), t.order, t.seq, t.kind, {}});
        } else {
          const Timestamp next = t.at + plan_.public_poll_interval;
          tasks.push(Task{next, next, seq++, t.kind, {}});
        }
        break;
      }
      case TaskKind::Cohort: {
        for (UserId c : cohort_candidates(*plan_.cohort, posts_, sensitive_)) {
          bool fresh = false;
          {
            std::lock_guard lock(users_mu_);
            fresh = users_.count(c) == 0;
          }
          if (fresh) {
            track(c);
            tasks.push(Task{t.at, t.at, seq++, TaskKind::User, c});
          }
        }
        const auto promoted = grow_cohort(*plan_.cohort, posts_, deletions_, sensitive_, t.at);
        for (UserId u : promoted) {
          sensitive_.insert(u);
          std::lock_guard lock(report_mu_);
          report_.promoted.push_back(u);
        }
        const Timestamp next = t.at + plan_.cohort_interval;
        tasks.push(Task{next, next, seq++, t.kind, {}});
        break;
      }
    }
  }
  if (sinks_.deletions) sinks_.deletions->flush();
  if (sinks_.closures) sinks_.closures->flush();
  std::lock_guard lock(report_mu_);
  return report_;
}

}  // namespace velocity::crawl
