#include <doctest.h>

#include <algorithm>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "support.hpp"
#include "velocity/crawler.hpp"
#include "velocity/platform.hpp"
#include "velocity/records.hpp"

using namespace velocity;
using namespace velocity::crawl;

namespace {

// Backend with hand-set pages and probe answers.
class FakeBackend final : public FetchBackend {
 public:
  std::map<std::uint64_t, Timeline> pages;
  std::map<std::uint64_t, ProbeCode> codes;
  Timeline public_page;
  std::uint64_t calls = 0;

  Fetched<Timeline> user_timeline(UserId target, const Credential&, Timestamp) override {
    ++calls;
    return pages[raw(target)];
  }
  Fetched<Timeline> public_timeline(const Credential&, Timestamp) override {
    ++calls;
    return public_page;
  }
  Fetched<Probe> post(PostId id, const Credential&, Timestamp) override {
    ++calls;
    auto it = codes.find(raw(id));
    return Probe{it == codes.end() ? ProbeCode::PostDoesNotExist : it->second, nullptr};
  }
};

PostRef ref(std::uint64_t id, std::uint64_t user, Timestamp at) {
  return std::make_shared<const Post>(
      Post{PostId{id}, UserId{user}, "p", false, at, std::nullopt, std::nullopt});
}

CrawlPlan plan_for(std::vector<UserId> users, std::uint32_t per_minute = 1000) {
  CrawlPlan plan;
  plan.tracked_users = std::move(users);
  plan.credentials.push_back({Credential{"c1", std::nullopt}, per_minute});
  plan.poll_public = false;
  return plan;
}

PostId publish(sim::Platform& p, std::uint64_t author, Timestamp at,
               std::optional<PostId> parent = std::nullopt) {
  const auto out = p.submit_post(UserId{author}, "text", false, parent, at);
  REQUIRE(sim::stored_id(out).has_value());
  return *sim::stored_id(out);
}

}  // namespace

TEST_CASE("token bucket refills at minute boundaries") {
  TokenBucket b(2);
  CHECK(b.try_take(0));
  CHECK(b.try_take(30));
  CHECK_FALSE(b.try_take(59));
  CHECK(b.try_take(60));
  b.drain(61);
  CHECK_FALSE(b.try_take(119));
  CHECK(b.try_take(120));
  TokenBucket empty(0);
  CHECK_FALSE(empty.try_take(0));
}

TEST_CASE("plan documents") {
  CrawlPlan plan = plan_for({UserId{1}, UserId{2}}, 30);
  plan.credentials.push_back({Credential{"as-user", UserId{9}}, 5});
  plan.cohort = CohortRules{6, 7, 3 * kDay};
  plan.fetch_parents = true;
  const auto text = plan_to_json(plan);
  const auto back = plan_from_json(text);
  CHECK(plan_to_json(back) == text);
  CHECK(back.credentials[1].credential.account == UserId{9});
  CHECK(back.cohort->deletion_threshold == 7);

  CHECK_THROWS_AS(plan_from_json(R"({"tracked_users": [1], "credentials": []})"), ValidationError);
  CHECK_THROWS_AS(plan_from_json(R"({"user_poll_interval": 0,
                                     "credentials": [{"name": "a", "per_minute": 1}]})"),
                  ValidationError);
  CHECK_THROWS_AS(plan_from_json(R"({"credentials": [{"name": "a", "per_minute": 1}],
                                     "cohort": {"repost_threshold": 0}})"),
                  ValidationError);
  velocity::testing::TempDir dir("plan");
  try {
    load_plan(dir / "absent.json");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("absent.json") != std::string::npos);
  }
}

TEST_CASE("disappearance inside the window is probed and classified") {
  FakeBackend be;
  be.pages[1] = {ref(3, 1, 300), ref(2, 1, 200), ref(1, 1, 100)};
  store::PostLog log;
  Crawler c(be, plan_for({UserId{1}}), log);
  CHECK(c.poll_user(UserId{1}, 400).deletions.empty());
  CHECK(log.size() == 3);

  be.pages[1] = {ref(3, 1, 300)};
  be.codes[2] = ProbeCode::PermissionDenied;
  be.codes[1] = ProbeCode::PostDoesNotExist;
  const auto res = c.poll_user(UserId{1}, 460);
  REQUIRE(res.deletions.size() == 2);
  // Oldest first.
  CHECK(res.deletions[0].post_id == PostId{1});
  CHECK(res.deletions[0].kind == DeletionKind::GeneralDeleted);
  CHECK(res.deletions[1].post_id == PostId{2});
  CHECK(res.deletions[1].kind == DeletionKind::SystemDeleted);
  CHECK(res.deletions[1].lifetime == doctest::Approx((460.0 - 200.0) / 60.0));
  CHECK(c.report().probes == 2);

  SUBCASE("a still-visible absentee is not a deletion") {
    be.pages[1] = {};
    be.codes[3] = ProbeCode::Visible;
    CHECK(c.poll_user(UserId{1}, 520).deletions.empty());
  }
  SUBCASE("untracked users are rejected") { CHECK_THROWS_AS(c.poll_user(UserId{5}, 500), ValidationError); }
}

TEST_CASE("posts pushed out of a full page are not probed") {
  FakeBackend be;
  Timeline first;
  for (std::uint64_t i = 10; i >= 1; --i) first.push_back(ref(i, 1, static_cast<Timestamp>(i)));
  be.pages[1] = first;
  store::PostLog log;
  Crawler c(be, plan_for({UserId{1}}), log);
  c.poll_user(UserId{1}, 100);

  Timeline second;
  for (std::uint64_t i = 61; i >= 12; --i) second.push_back(ref(i, 1, static_cast<Timestamp>(i)));
  REQUIRE(second.size() == 50);
  be.pages[1] = second;
  for (std::uint64_t i = 1; i <= 10; ++i) be.codes[i] = ProbeCode::PermissionDenied;
  const auto res = c.poll_user(UserId{1}, 160);
  CHECK(res.deletions.empty());
  CHECK(c.report().scrolled_out == 10);
  CHECK(c.report().probes == 0);
}

TEST_CASE("a short page still probes every absentee") {
  FakeBackend be;
  be.pages[1] = {ref(2, 1, 20), ref(1, 1, 10)};
  store::PostLog log;
  Crawler c(be, plan_for({UserId{1}}), log);
  c.poll_user(UserId{1}, 100);
  be.pages[1] = {ref(3, 1, 30), ref(2, 1, 20)};
  be.codes[1] = ProbeCode::PermissionDenied;
  const auto res = c.poll_user(UserId{1}, 160);
  REQUIRE(res.deletions.size() == 1);
  CHECK(res.deletions[0].post_id == PostId{1});
}

TEST_CASE("deferred probes are retried before the next fetch") {
  sim::CensorPolicy policy;
  policy.watchlist.push_back({UserId{1}, 90, 1.0});
  sim::Platform p(policy, 1);
  p.add_user(User{UserId{1}});
  p.register_credential("c1", 1);
  const PostId id = publish(p, 1, 0);

  store::PostLog log;
  Crawler c(p, plan_for({UserId{1}}, 1), log);
  CHECK(c.poll_user(UserId{1}, 30).status == PollStatus::Completed);
  const auto second = c.poll_user(UserId{1}, 120);  // fetch spends the only token
  CHECK(second.status == PollStatus::Completed);
  CHECK(second.deletions.empty());
  CHECK(c.report().deferrals == 1);
  CHECK(c.poll_user(UserId{1}, 150).status == PollStatus::Deferred);
  const auto third = c.poll_user(UserId{1}, 180);
  REQUIRE(third.deletions.size() == 1);
  CHECK(third.deletions[0].post_id == id);
  CHECK(third.deletions[0].detected_at == 180);
  CHECK(third.status == PollStatus::Deferred);  // the timeline fetch itself waits
}

TEST_CASE("zero budget defers everything without false deletions") {
  sim::CensorPolicy policy;
  policy.watchlist.push_back({UserId{1}, 10, 1.0});
  sim::Platform p(policy, 1);
  p.add_user(User{UserId{1}});
  for (int i = 0; i < 5; ++i) publish(p, 1, i);
  store::PostLog log;
  Crawler c(p, plan_for({UserId{1}}, 0), log);
  const auto report = c.run(600);
  CHECK(report.user_polls == 0);
  CHECK(report.deferrals > 0);
  CHECK(c.deletions().empty());
}

TEST_CASE("schedule arithmetic") {
  sim::Platform p({}, 1);
  std::vector<UserId> users;
  for (std::uint64_t i = 1; i <= 10; ++i) {
    p.add_user(User{UserId{i}});
    users.push_back(UserId{i});
  }

  SUBCASE("ten users polled about ten times in ten minutes") {
    store::PostLog log;
    Crawler c(p, plan_for(users), log);
    const auto report = c.run(600);
    for (UserId u : users) {
      const auto n = report.polls_per_user.at(raw(u));
      CHECK(n >= 9);
      CHECK(n <= 11);
    }
    CHECK(report.public_polls == 0);
  }
  SUBCASE("zero users means only public polls") {
    auto plan = plan_for({});
    plan.poll_public = true;
    store::PostLog log;
    Crawler c(p, plan, log);
    const auto report = c.run(600);
    CHECK(report.user_polls == 0);
    CHECK(report.public_polls == 600 / 4 + 1);
  }
  SUBCASE("one request a minute is shared round-robin") {
    store::PostLog log;
    Crawler c(p, plan_for(users, 1), log);
    const auto report = c.run(40 * kMinute - 1);
    CHECK(report.deferrals > 0);
    CHECK(report.user_polls == 40);
    std::uint64_t lo = ~0ull, hi = 0;
    for (UserId u : users) {
      const auto it = report.polls_per_user.find(raw(u));
      const std::uint64_t n = it == report.polls_per_user.end() ? 0 : it->second;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
    CHECK(lo == 4);
  }
}

TEST_CASE("crawl against the simulator matches ground truth") {
  sim::CensorPolicy policy;
  policy.watchlist.push_back({UserId{1}, 7 * kMinute, 0.5});
  policy.watchlist.push_back({UserId{2}, 3 * kMinute, 0.9});
  sim::Platform p(policy, 77);
  for (std::uint64_t u = 1; u <= 3; ++u) p.add_user(User{UserId{u}});

  sim::Scenario script;
  Rng rng(5);
  std::uint64_t key = 0;
  for (int i = 0; i < 120; ++i) {
    const Timestamp at = rng.between(0, 4 * kHour);
    const std::uint64_t author = 1 + rng.below(3);
    script.push_back(sim::SubmitEvent{at, ++key, UserId{author}, "x", false, std::nullopt});
    if (rng.bernoulli(0.2)) {
      script.push_back(sim::DeleteEvent{at + rng.between(2 * kMinute, 3 * kHour), UserId{author}, key});
    }
  }
  p.load_scenario(script);

  velocity::testing::TempDir dir("crawl");
  store::JsonlWriter sink(dir / "deletions.jsonl");
  store::PostLog log;
  Crawler c(p, plan_for({UserId{1}, UserId{2}, UserId{3}}), log, CrawlSinks{&sink, nullptr, nullptr});
  c.run(6 * kHour);

  std::unordered_map<std::uint64_t, sim::GroundTruthEntry> truth;
  for (const auto& g : p.ground_truth()) truth.emplace(raw(g.post_id), g);
  REQUIRE(!c.deletions().empty());
  for (const auto& d : c.deletions()) {
    auto it = truth.find(raw(d.post_id));
    REQUIRE(it != truth.end());
    CHECK(it->second.kind == d.kind);
    CHECK(d.detected_at >= it->second.true_deletion_time);
    CHECK(d.detected_at - it->second.true_deletion_time <= 2 * kMinute);
  }
  // Every post stays inside the window and outlives one poll, so every
  // deletion before the end is found.
  std::size_t due = 0;
  for (const auto& [id, g] : truth) due += g.true_deletion_time <= 6 * kHour - 2 * kMinute;
  CHECK(c.deletions().size() >= due);
  const auto lines = store::read_all<DeletionRecord>(dir / "deletions.jsonl", deletion_from_json);
  CHECK(lines == c.deletions());
}

TEST_CASE("closed accounts raise an event instead of deletions") {
  sim::CensorPolicy policy;
  policy.account_closure_threshold = 1;
  policy.watchlist.push_back({UserId{1}, 90, 1.0});
  sim::Platform p(policy, 1);
  p.add_user(User{UserId{1}});
  const PostId a = publish(p, 1, 0);
  const PostId b = publish(p, 1, 10);

  velocity::testing::TempDir dir("closure");
  store::JsonlWriter closures(dir / "closures.jsonl");
  store::PostLog log;
  Crawler c(p, plan_for({UserId{1}}), log, CrawlSinks{nullptr, &closures, nullptr});
  CHECK(c.poll_user(UserId{1}, 60).status == PollStatus::Completed);
  const auto res = c.poll_user(UserId{1}, 120);
  CHECK(res.status == PollStatus::AccountClosed);
  CHECK(res.deletions.empty());
  REQUIRE(res.closed.has_value());
  CHECK(res.closed->tracked_posts == std::vector<PostId>{b, a});
  CHECK(c.poll_user(UserId{1}, 180).status == PollStatus::AccountClosed);
  CHECK(c.report().accounts_closed == 1);
  closures.flush();
  CHECK(velocity::testing::slurp(dir / "closures.jsonl") == to_json_line(*res.closed) + "\n");
}

TEST_CASE("public timeline polling deduplicates") {
  FakeBackend be;
  auto plan = plan_for({});
  store::PostLog corpus;
  Crawler c(be, plan, corpus, CrawlSinks{nullptr, nullptr, &corpus});
  for (std::uint64_t i = 1; i <= 200; ++i) be.public_page.push_back(ref(i, 1, 0));
  CHECK(c.poll_public(0) == 200u);
  CHECK(c.poll_public(4) == 0u);
  be.public_page.clear();
  for (std::uint64_t i = 151; i <= 350; ++i) be.public_page.push_back(ref(i, 1, 0));
  CHECK(c.poll_public(8) == 150u);
  CHECK(corpus.size() == 350);
}

TEST_CASE("cohort growth thresholds are strict") {
  const std::set<UserId> sensitive{UserId{1}, UserId{2}};
  const CohortRules rules{};
  store::PostLog log;
  std::uint64_t id = 0;
  auto original = [&](std::uint64_t author) {
    log.append(Post{PostId{++id}, UserId{author}, "o", false, 0, std::nullopt, std::nullopt});
    return PostId{id};
  };
  auto repost = [&](std::uint64_t by, PostId parent) {
    log.append(Post{PostId{++id}, UserId{by}, "r", false, 1, parent, parent});
  };
  const PostId six = original(10);
  const PostId five = original(11);
  for (int i = 0; i < 6; ++i) repost(1 + i % 2, six);
  for (int i = 0; i < 5; ++i) repost(1, five);
  const PostId outsider = original(12);
  for (int i = 0; i < 9; ++i) repost(30, outsider);  // not by sensitive users
  const PostId inner = original(2);
  for (int i = 0; i < 9; ++i) repost(1, inner);  // already sensitive

  CHECK(cohort_candidates(rules, log, sensitive) == std::vector<UserId>{UserId{10}});

  std::vector<DeletionRecord> dels;
  auto deleted = [&](std::uint64_t user, int count, Timestamp at) {
    for (int i = 0; i < count; ++i) {
      dels.push_back({PostId{1000 + dels.size()}, UserId{user}, DeletionKind::SystemDeleted, 0, at, 0});
    }
  };
  const Timestamp now = 20 * kDay;
  deleted(10, 5, now - kDay);
  CHECK(grow_cohort(rules, log, dels, sensitive, now).empty());
  deleted(10, 1, now - 16 * kDay);  // outside the observation window
  CHECK(grow_cohort(rules, log, dels, sensitive, now).empty());
  deleted(10, 1, now);
  CHECK(grow_cohort(rules, log, dels, sensitive, now) == std::vector<UserId>{UserId{10}});
}

TEST_CASE("cohort task tracks candidates during a run") {
  sim::Platform p({}, 1);
  for (std::uint64_t u = 1; u <= 3; ++u) p.add_user(User{UserId{u}});
  const PostId root = publish(p, 3, 0);
  for (int i = 0; i < 6; ++i) publish(p, 1, 10 + i, root);

  auto plan = plan_for({UserId{1}});
  plan.fetch_parents = true;
  plan.cohort = CohortRules{};
  plan.cohort_interval = 10 * kMinute;
  plan.start = kMinute;
  store::PostLog log;
  Crawler c(p, plan, log);
  const auto report = c.run(30 * kMinute);
  CHECK(log.contains(root));
  CHECK(report.parent_fetches >= 1);
  CHECK(report.polls_per_user.count(3) == 1);
  CHECK(c.sensitive().count(UserId{3}) == 0);  // reposted, but no deletions yet
}

TEST_CASE("report serialization") {
  CrawlReport r;
  r.system_deletions = 3;
  r.polls_per_user[7] = 2;
  r.promoted = {UserId{4}};
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j.at("system_deletions") == 3);
  CHECK(j.at("polls_per_user").at("7") == 2);
  CHECK(j.at("promoted") == nlohmann::json::array({4}));
}
