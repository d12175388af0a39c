#include "velocity/platform.hpp"

#include <algorithm>

#include "json_detail.hpp"
#include "velocity/utf8.hpp"

namespace velocity::sim {

std::optional<PostId> stored_id(const SubmitOutcome& outcome) {
  if (const auto* p = std::get_if<Published>(&outcome)) return p->post_id;
  if (const auto* h = std::get_if<HeldImplicit>(&outcome)) return h->post_id;
  if (const auto* c = std::get_if<CamouflagedPublished>(&outcome)) return c->post_id;
  return std::nullopt;
}

std::string_view to_string(Cause cause) {
  switch (cause) {
    case Cause::Author:
      return "author";
    case Cause::HoldReview:
      return "hold_review";
    case Cause::Watchlist:
      return "watchlist";
    case Cause::RetroSweep:
      return "retro_sweep";
    case Cause::ChainSweep:
      return "chain_sweep";
    case Cause::Release:
      return "release";
    case Cause::Closure:
      return "closure";
  }
  return "author";
}

Cause cause_from_string(std::string_view s) {
  for (Cause c : {Cause::Author, Cause::HoldReview, Cause::Watchlist, Cause::RetroSweep,
                  Cause::ChainSweep, Cause::Release, Cause::Closure}) {
    if (to_string(c) == s) return c;
  }
  throw ValidationError("unknown cause '" + std::string(s) + "'");
}

std::string to_json_line(const GroundTruthEntry& e) {
  detail::Json j;
  j["post_id"] = raw(e.post_id);
  j["kind"] = std::string(velocity::to_string(e.kind));
  j["true_deletion_time"] = e.true_deletion_time;
  j["user_id"] = raw(e.user_id);
  j["created_at"] = e.created_at;
  j["cause"] = std::string(to_string(e.cause));
  return j.dump();
}

GroundTruthEntry ground_truth_from_json(std::string_view line) {
  const auto j = detail::parse(line);
  GroundTruthEntry e;
  e.post_id = PostId{detail::field<std::uint64_t>(j, "post_id")};
  e.kind = deletion_kind_from_string(detail::field<std::string>(j, "kind"));
  e.true_deletion_time = detail::field<Timestamp>(j, "true_deletion_time");
  e.user_id = UserId{detail::field<std::uint64_t>(j, "user_id")};
  e.created_at = detail::field<Timestamp>(j, "created_at");
  e.cause = cause_from_string(detail::field_or<std::string>(j, "cause", "author"));
  return e;
}

Platform::Platform(CensorPolicy policy, std::uint64_t seed)
    : policy_(std::move(policy)),
      censor_rng_(Rng::stream(seed, "sim")),
      public_rng_(Rng::stream(seed, "sim.public")) {
  validate(policy_);
  for (std::uint32_t i = 0; i < policy_.retro_sweeps.size(); ++i) {
    schedule(policy_.retro_sweeps[i].fire_at, EventKind::SweepFire, i);
  }
}

void Platform::schedule(Timestamp at, EventKind kind, std::uint32_t slot, Cause cause) {
  events_.push(Event{at, next_seq_++, kind, slot, cause});
}

void Platform::add_user(const User& user) {
  std::lock_guard lock(mu_);
  if (users_.count(user.user_id) != 0) {
    throw ValidationError("user " + std::to_string(raw(user.user_id)) + " already exists");
  }
  UserState state;
  state.user = user;
  for (std::size_t i = 0; i < policy_.watchlist.size(); ++i) {
    if (policy_.watchlist[i].user_id == user.user_id) state.watch = i;
  }
  users_.emplace(user.user_id, std::move(state));
}

void Platform::load_scenario(const Scenario& scenario) {
  std::lock_guard lock(mu_);
  std::vector<std::size_t> order(scenario.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return event_time(scenario[a]) < event_time(scenario[b]);
  });
  for (std::size_t i : order) {
    const auto& ev = scenario[i];
    const Timestamp at = event_time(ev);
    if (at < clock_) {
      throw ValidationError("scenario event at " + std::to_string(at) +
                            " precedes the platform clock");
    }
    const auto index = static_cast<std::uint32_t>(script_.size());
    script_.push_back(ev);
    EventKind kind = EventKind::ScriptSubmit;
    if (std::holds_alternative<UserEvent>(ev)) kind = EventKind::ScriptUser;
    if (std::holds_alternative<DeleteEvent>(ev)) kind = EventKind::ScriptDelete;
    schedule(at, kind, index);
  }
}

void Platform::register_credential(const std::string& name, std::uint32_t per_minute) {
  std::lock_guard lock(mu_);
  rate_[name] = RateWindow{per_minute, -1, 0};
}

std::optional<std::uint32_t> Platform::slot_of(PostId id) const {
  const auto v = raw(id);
  if (v == 0 || v > posts_.size()) return std::nullopt;
  return static_cast<std::uint32_t>(v - 1);
}

bool Platform::author_closed(const PostState& s) const {
  auto it = users_.find(s.post->user_id);
  return it != users_.end() && it->second.user.status == AccountStatus::Closed;
}

bool Platform::visible_to(const PostState& s, const Credential& viewer) const {
  if (author_closed(s)) return false;
  if (s.vis == Visibility::Visible) return true;
  if (s.vis == Visibility::Camouflaged) return viewer.account == s.post->user_id;
  return false;
}

bool Platform::charge(const Credential& viewer, Timestamp now) {
  auto it = rate_.find(viewer.name);
  if (it == rate_.end()) return true;
  auto& w = it->second;
  const std::int64_t minute = now / kMinute;
  if (minute != w.minute) {
    w.minute = minute;
    w.used = 0;
  }
  if (w.used >= w.budget) return false;
  ++w.used;
  return true;
}

SubmitOutcome Platform::submit_post(UserId author, const std::string& text, bool has_picture,
                                    std::optional<PostId> parent_id, Timestamp now) {
  std::lock_guard lock(mu_);
  advance(now);
  return submit_locked(author, text, has_picture, parent_id, now);
}

SubmitOutcome Platform::submit_locked(UserId author, const std::string& text, bool has_picture,
                                      std::optional<PostId> parent_id, Timestamp now) {
  auto uit = users_.find(author);
  if (uit == users_.end()) {
    throw NotFoundError("user " + std::to_string(raw(author)) + " does not exist");
  }
  if (uit->second.user.status == AccountStatus::Closed) {
    throw AccountClosedError("account " + std::to_string(raw(author)) + " is closed");
  }
  if (utf8::length(text) > kMaxPostLength) {
    throw ValidationError("post text exceeds 140 characters");
  }
  std::optional<PostId> root;
  if (parent_id) {
    auto ps = slot_of(*parent_id);
    if (!ps || !visible_to(posts_[*ps], Credential{"", author})) {
      throw NotFoundError("parent post " + std::to_string(raw(*parent_id)) + " not found");
    }
    root = posts_[*ps].post->chain_key();
  }

  const KeywordRule* rule = nullptr;
  std::size_t rule_index = 0;
  for (std::size_t i = 0; i < policy_.keyword_rules.size(); ++i) {
    if (text.find(policy_.keyword_rules[i].pattern) != std::string::npos) {
      rule = &policy_.keyword_rules[i];
      rule_index = i;
      break;
    }
  }
  if (rule != nullptr && rule->action == RuleAction::Explicit) {
    return RejectedExplicit{rule->message};
  }

  const auto slot = static_cast<std::uint32_t>(posts_.size());
  auto post = std::make_shared<Post>();
  post->post_id = PostId{static_cast<std::uint64_t>(slot) + 1};
  post->user_id = author;
  post->text = text;
  post->has_picture = has_picture;
  post->created_at = now;
  post->parent_id = parent_id;
  post->repost_root_id = root;

  PostState state;
  state.post = post;
  if (rule == nullptr) {
    state.vis = Visibility::Visible;
  } else if (rule->action == RuleAction::Implicit) {
    state.vis = Visibility::Held;
    state.hold_rule = rule_index;
  } else {
    state.vis = Visibility::Camouflaged;
  }
  posts_.push_back(std::move(state));
  uit->second.posts.push_back(slot);
  if (root) {
    chains_[*root].push_back(slot);
  } else {
    originals_.push_back(slot);
  }

  const PostId id = post->post_id;
  if (rule != nullptr && rule->action == RuleAction::Implicit) {
    const Timestamp due = now + rule->review_delay;
    schedule(due, EventKind::HoldDue, slot);
    return HeldImplicit{id, due};
  }
  publish(slot, now);
  if (rule != nullptr) return CamouflagedPublished{id};
  return Published{id};
}

void Platform::publish(std::uint32_t slot, Timestamp t) {
  const PostState& s = posts_[slot];
  const auto& us = users_.at(s.post->user_id);
  if (us.watch) {
    schedule(t + policy_.watchlist[*us.watch].review_latency, EventKind::WatchDue, slot);
  }
  const PostId chain = s.post->chain_key();
  if (condemned_chains_.count(chain) != 0) condemn_chain(chain, t);
}

void Platform::user_delete_post(UserId author, PostId id, Timestamp now) {
  std::lock_guard lock(mu_);
  advance(now);
  delete_locked(author, id, now);
}

void Platform::delete_locked(UserId author, PostId id, Timestamp now) {
  auto slot = slot_of(id);
  if (!slot) throw NotFoundError("post " + std::to_string(raw(id)) + " not found");
  PostState& s = posts_[*slot];
  if (s.post->user_id != author) {
    throw NotOwnerError("post " + std::to_string(raw(id)) + " is not owned by user " +
                        std::to_string(raw(author)));
  }
  if (s.vis == Visibility::GeneralDeleted || s.vis == Visibility::SystemDeleted) {
    throw AlreadyDeletedError("post " + std::to_string(raw(id)) + " is already deleted");
  }
  s.vis = Visibility::GeneralDeleted;
  ground_truth_.push_back(GroundTruthEntry{id, author, DeletionKind::GeneralDeleted, now,
                                           s.post->created_at, Cause::Author});
  actions_.push_back(CensorAction{now, ActionKind::GeneralDelete, Cause::Author, id, author});
}

void Platform::system_delete(std::uint32_t slot, Timestamp t, Cause cause) {
  PostState& s = posts_[slot];
  s.delete_scheduled = false;
  if (s.vis == Visibility::GeneralDeleted || s.vis == Visibility::SystemDeleted) return;
  s.vis = Visibility::SystemDeleted;
  const UserId author = s.post->user_id;
  ground_truth_.push_back(GroundTruthEntry{s.post->post_id, author, DeletionKind::SystemDeleted, t,
                                           s.post->created_at, cause});
  actions_.push_back(CensorAction{t, ActionKind::SystemDelete, cause, s.post->post_id, author});

  auto& us = users_.at(author);
  ++us.system_deletions;
  if (policy_.account_closure_threshold && us.user.status == AccountStatus::Active &&
      us.system_deletions >= *policy_.account_closure_threshold) {
    us.user.status = AccountStatus::Closed;
    actions_.push_back(
        CensorAction{t, ActionKind::AccountClosed, Cause::Closure, std::nullopt, author});
  }
  if (policy_.chain_mass_delete) condemn_chain(s.post->chain_key(), t);
}

void Platform::condemn_chain(PostId chain, Timestamp t) {
  condemned_chains_.insert(chain);
  auto sweep = [&](std::uint32_t slot) {
    PostState& m = posts_[slot];
    if (m.delete_scheduled || m.vis == Visibility::GeneralDeleted ||
        m.vis == Visibility::SystemDeleted) {
      return;
    }
    m.delete_scheduled = true;
    const auto offset = censor_rng_.between(0, policy_.chain_delete_window);
    schedule(t + offset, EventKind::ScheduledDelete, slot, Cause::ChainSweep);
  };
  if (auto root = slot_of(chain)) sweep(*root);
  if (auto it = chains_.find(chain); it != chains_.end()) {
    for (std::uint32_t slot : it->second) sweep(slot);
  }
}

void Platform::drain_reviews(Timestamp t) {
  const std::int64_t hour = t / kHour;
  if (hour != review_hour_) {
    review_hour_ = hour;
    reviews_this_hour_ = 0;
  }
  const std::uint32_t capacity = policy_.hourly_reviewer_capacity[static_cast<std::size_t>(hour % 24)];
  while (!reviews_.empty()) {
    const Review r = reviews_.front();
    const PostState& s = posts_[r.slot];
    const bool live = r.hold ? s.vis == Visibility::Held
                             : (s.vis == Visibility::Visible || s.vis == Visibility::Camouflaged) &&
                                   !s.delete_scheduled;
    if (!live) {
      reviews_.pop_front();
      continue;
    }
    if (capacity != kUnlimitedCapacity && reviews_this_hour_ >= capacity) break;
    reviews_.pop_front();
    ++reviews_this_hour_;
    run_review(r, t);
  }
  if (!reviews_.empty()) {
    const Timestamp wake = (hour + 1) * kHour;
    if (wake_at_ != wake) {
      wake_at_ = wake;
      schedule(wake, EventKind::CapacityWake);
    }
  }
}

void Platform::run_review(const Review& r, Timestamp t) {
  PostState& s = posts_[r.slot];
  if (r.hold) {
    const auto& rule = policy_.keyword_rules[s.hold_rule];
    if (censor_rng_.bernoulli(rule.delete_probability)) {
      system_delete(r.slot, t, Cause::HoldReview);
    } else {
      s.vis = Visibility::Visible;
      actions_.push_back(CensorAction{t, ActionKind::HoldReleased, Cause::Release,
                                      s.post->post_id, s.post->user_id});
      publish(r.slot, t);
    }
    return;
  }
  const auto& us = users_.at(s.post->user_id);
  if (!us.watch) return;
  if (censor_rng_.bernoulli(policy_.watchlist[*us.watch].deletion_probability_per_review)) {
    system_delete(r.slot, t, Cause::Watchlist);
  }
}

void Platform::run_event(const Event& e) {
  switch (e.kind) {
    case EventKind::ScriptUser: {
      const auto& ev = std::get<UserEvent>(script_[e.slot]);
      if (users_.count(ev.user.user_id) == 0) {
        UserState state;
        state.user = ev.user;
        for (std::size_t i = 0; i < policy_.watchlist.size(); ++i) {
          if (policy_.watchlist[i].user_id == ev.user.user_id) state.watch = i;
        }
        users_.emplace(ev.user.user_id, std::move(state));
      }
      break;
    }
    case EventKind::ScriptSubmit: {
      const auto& ev = std::get<SubmitEvent>(script_[e.slot]);
      ScriptOutcome out{e.at, ev.key, std::nullopt, {}};
      try {
        std::optional<PostId> parent;
        if (ev.parent_key) {
          auto it = keys_.find(*ev.parent_key);
          if (it == keys_.end()) throw NotFoundError("parent key not found");
          parent = it->second;
        }
        const auto outcome = submit_locked(ev.author, ev.text, ev.has_picture, parent, e.at);
        out.post_id = stored_id(outcome);
        if (out.post_id) keys_[ev.key] = *out.post_id;
        if (std::holds_alternative<Published>(outcome)) out.result = "published";
        if (std::holds_alternative<HeldImplicit>(outcome)) out.result = "held";
        if (std::holds_alternative<CamouflagedPublished>(outcome)) out.result = "camouflaged";
        if (std::holds_alternative<RejectedExplicit>(outcome)) out.result = "rejected";
      } catch (const Error& err) {
        out.result = err.what();
      }
      script_log_.push_back(std::move(out));
      break;
    }
    case EventKind::ScriptDelete: {
      const auto& ev = std::get<DeleteEvent>(script_[e.slot]);
      ScriptOutcome out{e.at, ev.key, std::nullopt, "deleted"};
      try {
        auto it = keys_.find(ev.key);
        if (it == keys_.end()) throw NotFoundError("post key not found");
        out.post_id = it->second;
        delete_locked(ev.author, it->second, e.at);
      } catch (const Error& err) {
        out.result = err.what();
      }
      script_log_.push_back(std::move(out));
      break;
    }
    case EventKind::HoldDue:
      reviews_.push_back(Review{true, e.slot});
      drain_reviews(e.at);
      break;
    case EventKind::WatchDue:
      reviews_.push_back(Review{false, e.slot});
      drain_reviews(e.at);
      break;
    case EventKind::SweepFire: {
      const auto& sweep = policy_.retro_sweeps[e.slot];
      std::vector<std::uint32_t> hits;
      for (std::uint32_t slot = 0; slot < posts_.size(); ++slot) {
        const PostState& s = posts_[slot];
        if ((s.vis == Visibility::Visible || s.vis == Visibility::Camouflaged) &&
            !s.delete_scheduled && s.post->text.find(sweep.pattern) != std::string::npos) {
          hits.push_back(slot);
        }
      }
      const auto n = static_cast<std::int64_t>(hits.size());
      for (std::int64_t i = 0; i < n; ++i) {
        posts_[hits[i]].delete_scheduled = true;
        schedule(e.at + (i * sweep.completion_window) / n, EventKind::ScheduledDelete, hits[i],
                 Cause::RetroSweep);
      }
      break;
    }
    case EventKind::ScheduledDelete:
      system_delete(e.slot, e.at, e.cause);
      break;
    case EventKind::CapacityWake:
      if (wake_at_ == e.at) wake_at_.reset();
      drain_reviews(e.at);
      break;
  }
}

void Platform::advance(Timestamp until) {
  if (until < clock_) {
    throw ValidationError("time moves backward: " + std::to_string(until) + " < clock " +
                          std::to_string(clock_));
  }
  while (!events_.empty() && events_.top().at <= until) {
    const Event e = events_.top();
    events_.pop();
    clock_ = e.at;
    run_event(e);
  }
  clock_ = until;
}

std::vector<CensorAction> Platform::tick(Timestamp until) {
  std::lock_guard lock(mu_);
  const std::size_t before = actions_.size();
  advance(until);
  return {actions_.begin() + static_cast<std::ptrdiff_t>(before), actions_.end()};
}

Fetched<Timeline> Platform::user_timeline(UserId target, const Credential& viewer, Timestamp now) {
  std::lock_guard lock(mu_);
  advance(now);
  if (!charge(viewer, now)) return FetchFailure::RateLimited;
  Timeline out;
  auto it = users_.find(target);
  if (it == users_.end()) return out;
  if (it->second.user.status == AccountStatus::Closed) return FetchFailure::AccountClosed;
  const auto& slots = it->second.posts;
  for (auto rit = slots.rbegin(); rit != slots.rend() && out.size() < policy_.timeline_page;
       ++rit) {
    const PostState& s = posts_[*rit];
    if (visible_to(s, viewer)) out.push_back(s.post);
  }
  return out;
}

Fetched<Timeline> Platform::public_timeline(const Credential& viewer, Timestamp now) {
  std::lock_guard lock(mu_);
  advance(now);
  if (!charge(viewer, now)) return FetchFailure::RateLimited;
  Timeline out;
  auto sample_band = [&](Seconds min_age, Seconds max_age) {
    const Timestamp lo = now - max_age;
    const Timestamp hi = now - min_age;
    auto created = [&](std::uint32_t slot) { return posts_[slot].post->created_at; };
    auto first = std::lower_bound(originals_.begin(), originals_.end(), lo,
                                  [&](std::uint32_t s, Timestamp t) { return created(s) < t; });
    auto last = std::upper_bound(first, originals_.end(), hi,
                                 [&](Timestamp t, std::uint32_t s) { return t < created(s); });
    const auto n = static_cast<std::uint64_t>(last - first);
    const std::uint64_t k = std::min<std::uint64_t>(policy_.public_half_size, n);
    // Floyd's sampling of k distinct offsets out of n.
    std::vector<std::uint64_t> picked;
    picked.reserve(k);
    for (std::uint64_t j = n - k; j < n; ++j) {
      const std::uint64_t t = public_rng_.below(j + 1);
      if (std::find(picked.begin(), picked.end(), t) == picked.end()) {
        picked.push_back(t);
      } else {
        picked.push_back(j);
      }
    }
    for (std::uint64_t offset : picked) {
      const PostState& s = posts_[*(first + static_cast<std::ptrdiff_t>(offset))];
      if (s.vis == Visibility::Visible && !author_closed(s)) out.push_back(s.post);
    }
  };
  sample_band(policy_.public_recent_min_age, policy_.public_recent_max_age);
  sample_band(policy_.public_old_min_age, policy_.public_old_max_age);
  std::sort(out.begin(), out.end(), [](const PostRef& a, const PostRef& b) {
    if (a->created_at != b->created_at) return a->created_at > b->created_at;
    return raw(a->post_id) > raw(b->post_id);
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Fetched<Probe> Platform::post(PostId id, const Credential& viewer, Timestamp now) {
  std::lock_guard lock(mu_);
  advance(now);
  if (!charge(viewer, now)) return FetchFailure::RateLimited;
  auto slot = slot_of(id);
  if (!slot) return Probe{ProbeCode::PostDoesNotExist, nullptr};
  const PostState& s = posts_[*slot];
  if (s.vis == Visibility::SystemDeleted) return Probe{ProbeCode::PermissionDenied, nullptr};
  if (visible_to(s, viewer)) return Probe{ProbeCode::Visible, s.post};
  return Probe{ProbeCode::PostDoesNotExist, nullptr};
}

Fetched<std::vector<PostRef>> Platform::search(const std::string& term, const Credential& viewer,
                                               Timestamp now) {
  std::lock_guard lock(mu_);
  advance(now);
  if (!charge(viewer, now)) return FetchFailure::RateLimited;
  for (const auto& banned : policy_.banned_search_terms) {
    if (term.find(banned) != std::string::npos) return FetchFailure::Blocked;
  }
  std::vector<PostRef> out;
  if (term.empty()) return out;
  for (auto it = posts_.rbegin(); it != posts_.rend(); ++it) {
    if (visible_to(*it, viewer) && it->post->text.find(term) != std::string::npos) {
      out.push_back(it->post);
    }
  }
  return out;
}

Timestamp Platform::now() const {
  std::lock_guard lock(mu_);
  return clock_;
}

std::vector<GroundTruthEntry> Platform::ground_truth() const {
  std::lock_guard lock(mu_);
  return ground_truth_;
}

std::vector<CensorAction> Platform::actions() const {
  std::lock_guard lock(mu_);
  return actions_;
}

std::vector<ScriptOutcome> Platform::script_log() const {
  std::lock_guard lock(mu_);
  return script_log_;
}

std::vector<Post> Platform::all_posts() const {
  std::lock_guard lock(mu_);
  std::vector<Post> out;
  out.reserve(posts_.size());
  for (const auto& s : posts_) out.push_back(*s.post);
  return out;
}

std::vector<User> Platform::users() const {
  std::lock_guard lock(mu_);
  std::vector<User> out;
  out.reserve(users_.size());
  for (const auto& [id, s] : users_) out.push_back(s.user);
  std::sort(out.begin(), out.end(),
            [](const User& a, const User& b) { return raw(a.user_id) < raw(b.user_id); });
  return out;
}

std::optional<User> Platform::user(UserId id) const {
  std::lock_guard lock(mu_);
  auto it = users_.find(id);
  if (it == users_.end()) return std::nullopt;
  return it->second.user;
}

std::optional<PostId> Platform::post_for_key(std::uint64_t scenario_key) const {
  std::lock_guard lock(mu_);
  auto it = keys_.find(scenario_key);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

std::optional<Timestamp> Platform::next_event_time() const {
  std::lock_guard lock(mu_);
  if (events_.empty()) return std::nullopt;
  return events_.top().at;
}

}  // namespace velocity::sim
