#include "velocity/reference.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "velocity/utf8.hpp"

namespace velocity::reference {

namespace {

constexpr std::size_t kPoolSize = 600;

struct Planted {
  const char* sentence;
  std::size_t day;  // kEveryDay spreads the topic over the whole run
  int first_hour;
  int last_hour;
  std::size_t count;
};

constexpr std::size_t kEveryDay = 99;

// Topics that recur across many tracked-user posts, each with its own hours.
constexpr std::array<Planted, 8> kTopics{{
    {"北京特大暴雨遇难人数公布", 0, 8, 20, 420},
    {"房山区救援物资发放", 0, 14, 23, 300},
    {"头骨进京鸣冤冯出示的头骨", 1, 9, 22, 380},
    {"什邡钼铜项目群众聚集", 1, 5, 13, 300},
    {"钓鱼岛游行现场照片曝光", 2, 10, 21, 360},
    {"启东排污工程停建", 2, 6, 16, 300},
    {"天朝网友热议", kEveryDay, 18, 23, 300},
    {"奥运金牌榜更新", kEveryDay, 1, 9, 300},
}};

// Relative posting volume per hour of day.
constexpr std::array<double, 24> kHourWeight{
    0.6, 0.4, 0.25, 0.15, 0.1, 0.1, 0.2, 0.5, 0.9, 1.1, 1.2, 1.2,
    1.1, 1.1, 1.2, 1.2, 1.1, 1.1, 1.2, 1.3, 1.4, 1.4, 1.2, 0.9};

Timestamp draw_time(Rng& rng, std::size_t day) {
  static const double total = [] {
    double s = 0.0;
    for (double w : kHourWeight) s += w;
    return s;
  }();
  double u = rng.uniform() * total;
  std::size_t hour = 0;
  while (hour < 23 && u >= kHourWeight[hour]) u -= kHourWeight[hour++];
  return static_cast<Timestamp>(day) * kDay + static_cast<Timestamp>(hour) * kHour +
         rng.between(0, kHour - 1);
}

struct Draft {
  Timestamp at = 0;
  UserId author{};
  std::string text;
  bool picture = false;
  bool repost = false;
  bool rejectable = false;  // never stored, so never a parent
};

}  // namespace

std::string filler(Rng& rng, std::size_t min_len, std::size_t max_len) {
  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(min_len), static_cast<std::int64_t>(max_len)));
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && rng.bernoulli(0.06)) {
      utf8::append(out, rng.bernoulli(0.5) ? U'，' : U'。');
      continue;
    }
    utf8::append(out, static_cast<char32_t>(0x4E00 + 34 * rng.below(kPoolSize)));
  }
  return out;
}

Bundle make(const Options& o) {
  if (o.users == 0 || o.days == 0) throw ValidationError("reference workload needs users and days");
  if (o.tracked > o.users) throw ValidationError("tracked users exceed user count");
  Rng rng = Rng::stream(o.seed, "reference");
  Bundle b;

  auto& p = b.policy;
  p.keyword_rules.push_back({kExplicitKeyword, sim::RuleAction::Explicit, 0, 0.0,
                             "this content violates the community rules"});
  p.keyword_rules.push_back({kHoldKeyword, sim::RuleAction::Implicit, 20 * kMinute, 0.6, {}});
  p.keyword_rules.push_back({kCamouflageKeyword, sim::RuleAction::Camouflage, 0, 0.0, {}});
  if (o.days >= 3) {
    p.retro_sweeps.push_back({kSweepKeyword, 2 * kDay + 3 * kHour + 25 * kMinute, 5 * kMinute});
  }
  p.chain_mass_delete = true;
  p.banned_search_terms = {kSweepKeyword};
  p.account_closure_threshold = 40;
  for (std::size_t h = 0; h < 24; ++h) {
    p.hourly_reviewer_capacity[h] = h <= 6 ? 40 : (h <= 8 ? 250 : 500);
  }
  for (std::size_t i = 0; i < o.tracked; ++i) {
    p.watchlist.push_back({UserId{i + 1}, rng.between(5 * kMinute, 2 * kHour), 0.3});
  }
  for (std::size_t i = o.tracked; i < o.users; i += 10) {
    p.watchlist.push_back({UserId{i + 1}, rng.between(10 * kMinute, 6 * kHour), 0.3});
  }

  for (std::size_t i = 0; i < o.users; ++i) {
    User u;
    u.user_id = UserId{i + 1};
    u.followers_count = rng.below(100000);
    u.friends_count = rng.below(2001);
    u.posts_count = rng.below(20001);
    u.verified = rng.bernoulli(0.1);
    b.scenario.push_back(sim::UserEvent{0, u});
  }

  const std::size_t tracked = std::max<std::size_t>(o.tracked, 1);
  auto tracked_author = [&] { return UserId{1 + rng.below(std::min(tracked, o.users))}; };
  auto any_author = [&] {
    return rng.bernoulli(0.03) ? tracked_author() : UserId{1 + rng.below(o.users)};
  };

  std::vector<Draft> drafts;
  drafts.reserve(o.posts);
  for (const auto& t : kTopics) {
    if (t.day != kEveryDay && t.day >= o.days) continue;
    for (std::size_t i = 0; i < t.count && drafts.size() < o.posts; ++i) {
      Draft d;
      const std::size_t day = t.day == kEveryDay ? rng.below(o.days) : t.day;
      d.at = static_cast<Timestamp>(day) * kDay + t.first_hour * kHour +
             rng.between(0, (t.last_hour - t.first_hour) * kHour);
      d.author = tracked_author();
      d.text = filler(rng, 0, 12) + t.sentence + filler(rng, 0, 12);
      d.picture = rng.bernoulli(0.4);
      drafts.push_back(std::move(d));
    }
  }
  if (o.days >= 3) {
    for (std::size_t i = 0; i < 44 && drafts.size() < o.posts; ++i) {
      Draft d;
      d.at = rng.between(0, kDay - 1);
      d.author = tracked_author();
      d.text = filler(rng, 4, 20) + kSweepKeyword + filler(rng, 4, 20);
      drafts.push_back(std::move(d));
    }
  }
  const std::size_t special = o.posts / 200;
  for (std::size_t i = 0; i < special && drafts.size() < o.posts; ++i) {
    Draft d;
    d.at = draw_time(rng, rng.below(o.days));
    d.author = any_author();
    const bool banned = i % 2 == 0;
    d.text = filler(rng, 3, 20) + (banned ? kExplicitKeyword : kCamouflageKeyword) + filler(rng, 3, 20);
    d.rejectable = banned;
    drafts.push_back(std::move(d));
  }
  while (drafts.size() < o.posts) {
    Draft d;
    d.at = draw_time(rng, rng.below(o.days));
    d.author = any_author();
    d.picture = rng.bernoulli(0.3);
    d.repost = rng.bernoulli(0.3);
    d.text = d.repost ? "转发" + filler(rng, 0, 20) : filler(rng, 8, 80);
    drafts.push_back(std::move(d));
  }
  std::stable_sort(drafts.begin(), drafts.end(),
                   [](const Draft& a, const Draft& b) { return a.at < b.at; });

  std::vector<std::uint64_t> parents;  // keys eligible as repost parents, by time
  std::vector<sim::ScenarioEvent> deletes;
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const Draft& d = drafts[i];
    sim::SubmitEvent ev;
    ev.at = d.at;
    ev.key = i + 1;
    ev.author = d.author;
    ev.text = d.text;
    ev.has_picture = d.picture;
    if (d.repost && !parents.empty()) {
      const std::size_t recent = std::min<std::size_t>(parents.size(), 400);
      ev.parent_key = parents[parents.size() - 1 - rng.below(recent)];
    }
    if (!d.rejectable) parents.push_back(ev.key);
    if (!d.rejectable && rng.bernoulli(0.04)) {
      const double span = std::log(2.0 * kDay) - std::log(60.0);
      const auto delay = static_cast<Seconds>(std::exp(std::log(60.0) + rng.uniform() * span));
      deletes.push_back(sim::DeleteEvent{d.at + delay, d.author, ev.key});
    }
    b.scenario.push_back(std::move(ev));
  }
  b.scenario.insert(b.scenario.end(), deletes.begin(), deletes.end());
  std::stable_sort(b.scenario.begin(), b.scenario.end(),
                   [](const sim::ScenarioEvent& a, const sim::ScenarioEvent& c) {
                     return sim::event_time(a) < sim::event_time(c);
                   });

  b.end = static_cast<Timestamp>(o.days) * kDay + 6 * kHour;
  std::erase_if(b.scenario, [&](const sim::ScenarioEvent& e) { return sim::event_time(e) >= b.end; });

  auto& plan = b.plan;
  for (std::size_t i = 0; i < o.tracked; ++i) plan.tracked_users.push_back(UserId{i + 1});
  for (int c = 1; c <= 4; ++c) {
    plan.credentials.push_back({Credential{"crawler-" + std::to_string(c), std::nullopt}, 500});
  }
  plan.fetch_parents = true;
  plan.cohort = crawl::CohortRules{};
  return b;
}

}  // namespace velocity::reference
