#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "velocity/platform.hpp"
#include "velocity/reference.hpp"

using namespace velocity;
using namespace velocity::sim;

namespace {

const Credential kCrawler{"crawler", std::nullopt};

void add_users(Platform& p, std::size_t users) {
  for (std::size_t i = 1; i <= users; ++i) p.add_user(User{UserId{i}});
}

PostId publish(Platform& p, std::uint64_t author, const std::string& text, Timestamp at,
               std::optional<PostId> parent = std::nullopt) {
  const auto out = p.submit_post(UserId{author}, text, false, parent, at);
  REQUIRE(stored_id(out).has_value());
  return *stored_id(out);
}

ProbeCode probe(Platform& p, PostId id, Timestamp at, const Credential& viewer = kCrawler) {
  const auto f = p.post(id, viewer, at);
  REQUIRE(ok(f));
  return std::get<Probe>(f).code;
}

Timeline timeline(Platform& p, std::uint64_t user, Timestamp at,
                  const Credential& viewer = kCrawler) {
  auto f = p.user_timeline(UserId{user}, viewer, at);
  REQUIRE(ok(f));
  return std::get<Timeline>(f);
}

double stddev(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("submission outcomes follow the first matching rule") {
  CensorPolicy policy;
  policy.keyword_rules.push_back({"falun", RuleAction::Explicit, 0, 0, "sorry"});
  policy.keyword_rules.push_back({"cgc", RuleAction::Implicit, 300 * kMinute, 0.0, {}});
  policy.keyword_rules.push_back({"hide", RuleAction::Camouflage, 0, 0, {}});
  Platform p(policy, 1);
  add_users(p, 2);

  CHECK(std::holds_alternative<Published>(p.submit_post(UserId{1}, "hello", false, {}, 0)));
  const auto rejected = p.submit_post(UserId{1}, "about falun", false, {}, 0);
  REQUIRE(std::holds_alternative<RejectedExplicit>(rejected));
  CHECK(std::get<RejectedExplicit>(rejected).message == "sorry");
  CHECK_FALSE(stored_id(rejected).has_value());

  SUBCASE("precedence is list order") {
    CHECK(std::holds_alternative<RejectedExplicit>(
        p.submit_post(UserId{1}, "hide cgc falun", false, {}, 0)));
    CHECK(std::holds_alternative<HeldImplicit>(p.submit_post(UserId{1}, "hide cgc", false, {}, 0)));
  }

  SUBCASE("implicit hold stays invisible for its review delay") {
    const auto held = p.submit_post(UserId{1}, "cgc news", false, {}, 100);
    REQUIRE(std::holds_alternative<HeldImplicit>(held));
    const auto h = std::get<HeldImplicit>(held);
    CHECK(h.release_or_delete_at == 100 + 300 * kMinute);
    const Credential other{"other", UserId{2}};
    const Credential author{"author", UserId{1}};
    for (Timestamp t : {Timestamp{101}, Timestamp{100 + 150 * kMinute}, h.release_or_delete_at - 1}) {
      CHECK(probe(p, h.post_id, t, other) == ProbeCode::PostDoesNotExist);
      CHECK(probe(p, h.post_id, t, author) == ProbeCode::PostDoesNotExist);
    }
    CHECK(probe(p, h.post_id, h.release_or_delete_at, other) == ProbeCode::Visible);
    const auto acts = p.actions();
    CHECK(std::count_if(acts.begin(), acts.end(), [](const CensorAction& a) {
            return a.kind == ActionKind::HoldReleased;
          }) == 1);
  }

  SUBCASE("camouflaged posts are visible only to their author") {
    const PostId id = publish(p, 1, "hide this", 10);
    const Credential author{"me", UserId{1}};
    const Credential other{"you", UserId{2}};
    CHECK(probe(p, id, 11, author) == ProbeCode::Visible);
    CHECK(probe(p, id, 11, other) == ProbeCode::PostDoesNotExist);
    auto mine = timeline(p, 1, 12, author);
    auto theirs = timeline(p, 1, 12, other);
    CHECK(std::any_of(mine.begin(), mine.end(), [&](const PostRef& x) { return x->post_id == id; }));
    CHECK(std::none_of(theirs.begin(), theirs.end(),
                       [&](const PostRef& x) { return x->post_id == id; }));
  }
}

TEST_CASE("submission errors") {
  CensorPolicy policy;
  policy.account_closure_threshold = 1;
  policy.watchlist.push_back({UserId{1}, 60, 1.0});
  Platform p(policy, 1);
  add_users(p, 2);
  CHECK_THROWS_AS(p.submit_post(UserId{9}, "x", false, {}, 0), NotFoundError);
  CHECK_THROWS_AS(p.submit_post(UserId{2}, "x", false, PostId{77}, 0), NotFoundError);
  CHECK_THROWS_AS(p.submit_post(UserId{2}, std::string(141, 'a'), false, {}, 0), ValidationError);
  publish(p, 1, "watched", 0);
  p.tick(60);
  REQUIRE(p.user(UserId{1})->status == AccountStatus::Closed);
  CHECK_THROWS_AS(p.submit_post(UserId{1}, "again", false, {}, 61), AccountClosedError);
  CHECK_THROWS_AS(p.tick(10), ValidationError);
}

TEST_CASE("repost lineage") {
  Platform p({}, 1);
  add_users(p, 3);
  const PostId root = publish(p, 1, "root", 0);
  const PostId child = publish(p, 2, "child", 1, root);
  const PostId grandchild = publish(p, 3, "grandchild", 2, child);
  const auto posts = p.all_posts();
  CHECK(posts[1].repost_root_id == root);
  CHECK(posts[1].parent_id == root);
  CHECK(posts[2].repost_root_id == root);
  CHECK(posts[2].parent_id == child);
  CHECK(posts[0].chain_key() == root);
  for (const auto& post : posts) CHECK_NOTHROW(validate(post));
  CHECK(grandchild == PostId{3});
}

TEST_CASE("user timelines") {
  CensorPolicy policy;
  Platform p(policy, 1);
  add_users(p, 2);
  CHECK(timeline(p, 1, 0).empty());
  for (int i = 0; i < 3; ++i) publish(p, 1, "post " + std::to_string(i), i * 10);
  auto t = timeline(p, 1, 100);
  REQUIRE(t.size() == 3);
  CHECK(t[0]->created_at == 20);
  CHECK(t[2]->created_at == 0);

  for (int i = 3; i < 60; ++i) publish(p, 1, "post " + std::to_string(i), 100 + i * 10);
  t = timeline(p, 1, 1000);
  REQUIRE(t.size() == 50);
  CHECK(t.front()->created_at == 690);
  CHECK(t.back()->created_at == 200);
  CHECK(timeline(p, 42, 1000).empty());
}

TEST_CASE("public timeline") {
  CensorPolicy policy;
  Platform p(policy, 1);
  add_users(p, 3);
  CHECK(std::get<Timeline>(p.public_timeline(kCrawler, 0)).empty());

  for (int i = 0; i < 2000; ++i) publish(p, 1 + i % 3, "x" + std::to_string(i), i * 10);
  const Timestamp now = 20000;
  const auto page = std::get<Timeline>(p.public_timeline(kCrawler, now));
  // 25 posts fall in the recent band, well over 100 in the older one.
  CHECK(page.size() == 25 + policy.public_half_size);
  std::size_t recent = 0;
  for (const auto& post : page) {
    const Seconds age = now - post->created_at;
    const bool in_recent = age >= kMinute && age <= 5 * kMinute;
    const bool in_old = age >= kHour && age <= 6 * kHour;
    CHECK((in_recent || in_old));
    recent += in_recent;
  }
  CHECK(recent == 25);
  CHECK(std::is_sorted(page.begin(), page.end(), [](const PostRef& a, const PostRef& b) {
    return a->created_at > b->created_at;
  }));
}

TEST_CASE("probes report the mandated codes") {
  CensorPolicy policy;
  policy.watchlist.push_back({UserId{2}, 30, 1.0});
  Platform p(policy, 1);
  add_users(p, 2);
  CHECK(probe(p, PostId{999}, 0) == ProbeCode::PostDoesNotExist);

  const PostId mine = publish(p, 1, "mine", 0);
  CHECK(probe(p, mine, 1) == ProbeCode::Visible);
  CHECK_THROWS_AS(p.user_delete_post(UserId{2}, mine, 2), NotOwnerError);
  p.user_delete_post(UserId{1}, mine, 3);
  CHECK(probe(p, mine, 4) == ProbeCode::PostDoesNotExist);
  CHECK_THROWS_AS(p.user_delete_post(UserId{1}, mine, 5), AlreadyDeletedError);

  const PostId watched = publish(p, 2, "watched", 10);
  CHECK(probe(p, watched, 39) == ProbeCode::Visible);
  CHECK(probe(p, watched, 40) == ProbeCode::PermissionDenied);
  CHECK_THROWS_AS(p.user_delete_post(UserId{2}, watched, 41), AlreadyDeletedError);

  SUBCASE("probe consistency and visibility monotonicity") {
    for (Timestamp t = 50; t < 5000; t += 500) {
      for (const auto& g : p.ground_truth()) {
        const auto expected = g.kind == DeletionKind::SystemDeleted ? ProbeCode::PermissionDenied
                                                                    : ProbeCode::PostDoesNotExist;
        CHECK(probe(p, g.post_id, t) == expected);
      }
    }
  }
  const auto gt = p.ground_truth();
  REQUIRE(gt.size() == 2);
  CHECK(gt[0].kind == DeletionKind::GeneralDeleted);
  CHECK(gt[0].true_deletion_time == 3);
  CHECK(gt[1].kind == DeletionKind::SystemDeleted);
  CHECK(gt[1].cause == Cause::Watchlist);
}

TEST_CASE("search") {
  CensorPolicy policy;
  policy.banned_search_terms = {"37人"};
  Platform p(policy, 1);
  add_users(p, 1);
  const PostId id = publish(p, 1, "rain in beijing", 0);
  CHECK(std::get<FetchFailure>(p.search("about 37人 today", kCrawler, 1)) == FetchFailure::Blocked);
  CHECK(std::get<std::vector<PostRef>>(p.search("snow", kCrawler, 1)).empty());
  const auto hits = std::get<std::vector<PostRef>>(p.search("beijing", kCrawler, 1));
  REQUIRE(hits.size() == 1);
  CHECK(hits[0]->post_id == id);
}

TEST_CASE("empty policy produces no actions") {
  Platform p({}, 1);
  add_users(p, 5);
  for (int i = 0; i < 50; ++i) publish(p, 1 + i % 5, "plain", i);
  CHECK(p.tick(10 * kDay).empty());
  CHECK(p.ground_truth().empty());
  CHECK_FALSE(p.next_event_time().has_value());
}

TEST_CASE("chain mass deletion") {
  CensorPolicy policy;
  policy.chain_mass_delete = true;
  policy.watchlist.push_back({UserId{1}, 10 * kMinute, 1.0});
  Platform p(policy, 1);
  add_users(p, 10);
  const PostId root = publish(p, 1, "root", 0);
  PostId parent = root;
  for (std::uint64_t i = 2; i <= 10; ++i) {
    parent = publish(p, i, "repost " + std::to_string(i), static_cast<Timestamp>(i * 5), parent);
  }
  const auto actions = p.tick(kHour);
  CHECK(actions.size() == 10);
  const auto gt = p.ground_truth();
  REQUIRE(gt.size() == 10);
  std::vector<double> times;
  for (const auto& g : gt) {
    CHECK(g.kind == DeletionKind::SystemDeleted);
    times.push_back(static_cast<double>(g.true_deletion_time));
    CHECK(g.true_deletion_time >= 10 * kMinute);
    CHECK(g.true_deletion_time <= 10 * kMinute + policy.chain_delete_window);
  }
  CHECK(stddev(times) < 300.0);
}

TEST_CASE("retro sweep spreads deletions over its window") {
  CensorPolicy policy;
  const Timestamp fire = 6 * kDay;
  policy.retro_sweeps.push_back({"37人", fire, 5 * kMinute});
  Platform p(policy, 1);
  add_users(p, 44);
  Rng rng(3);
  for (std::uint64_t i = 1; i <= 44; ++i) {
    const Timestamp created = fire - rng.between(2 * kDay, 5 * kDay);
    p.tick(std::max(p.now(), created));
    publish(p, i, "about 37人 case", std::max(p.now(), created));
  }
  publish(p, 1, "unrelated", p.now());
  p.tick(fire + 5 * kMinute);
  const auto gt = p.ground_truth();
  REQUIRE(gt.size() == 44);
  for (const auto& g : gt) {
    CHECK(g.cause == Cause::RetroSweep);
    CHECK(g.true_deletion_time >= fire);
    CHECK(g.true_deletion_time < fire + 5 * kMinute);
  }
}

TEST_CASE("reviewer capacity queues reviews FIFO") {
  CensorPolicy policy;
  policy.hourly_reviewer_capacity = CensorPolicy::filled_capacity(1);
  policy.watchlist.push_back({UserId{1}, 0, 1.0});
  Platform p(policy, 1);
  add_users(p, 1);
  publish(p, 1, "a", 10);
  publish(p, 1, "b", 20);
  publish(p, 1, "c", 30);
  p.tick(4 * kHour);
  const auto gt = p.ground_truth();
  REQUIRE(gt.size() == 3);
  CHECK(gt[0].true_deletion_time == 10);
  CHECK(gt[1].true_deletion_time == kHour);
  CHECK(gt[2].true_deletion_time == 2 * kHour);
  CHECK(gt[0].post_id == PostId{1});
  CHECK(gt[2].post_id == PostId{3});
}

TEST_CASE("zero capacity hours defer all reviews") {
  CensorPolicy policy;
  for (std::size_t h = 0; h < 24; ++h) policy.hourly_reviewer_capacity[h] = h < 7 ? 0 : 100;
  policy.watchlist.push_back({UserId{1}, 0, 1.0});
  Platform p(policy, 1);
  add_users(p, 1);
  for (int i = 0; i < 5; ++i) publish(p, 1, "night", kHour + i);
  p.tick(kDay);
  for (const auto& g : p.ground_truth()) CHECK(g.true_deletion_time == 7 * kHour);
}

TEST_CASE("account closure after repeated system deletions") {
  CensorPolicy policy;
  policy.account_closure_threshold = 2;
  policy.watchlist.push_back({UserId{1}, 60, 1.0});
  Platform p(policy, 1);
  add_users(p, 2);
  const PostId a = publish(p, 1, "one", 0);
  publish(p, 1, "two", 10);
  p.tick(65);
  CHECK(p.user(UserId{1})->status == AccountStatus::Active);
  const auto acts = p.tick(400);
  CHECK(p.user(UserId{1})->status == AccountStatus::Closed);
  CHECK(std::any_of(acts.begin(), acts.end(),
                    [](const CensorAction& x) { return x.kind == ActionKind::AccountClosed; }));
  CHECK(std::get<FetchFailure>(p.user_timeline(UserId{1}, kCrawler, 400)) ==
        FetchFailure::AccountClosed);
  CHECK(probe(p, a, 400) == ProbeCode::PermissionDenied);
}

TEST_CASE("rate limiting per credential") {
  Platform p({}, 1);
  add_users(p, 1);
  p.register_credential("limited", 3);
  const Credential limited{"limited", std::nullopt};
  for (int i = 0; i < 3; ++i) CHECK(ok(p.user_timeline(UserId{1}, limited, 10)));
  for (Timestamp t : {10, 30, 59}) {
    auto f = p.user_timeline(UserId{1}, limited, t);
    REQUIRE_FALSE(ok(f));
    CHECK(std::get<FetchFailure>(f) == FetchFailure::RateLimited);
    CHECK_FALSE(ok(p.post(PostId{1}, limited, t)));
  }
  CHECK(ok(p.user_timeline(UserId{1}, limited, 60)));
  CHECK(ok(p.user_timeline(UserId{1}, kCrawler, 60)));

  p.register_credential("zero", 0);
  CHECK_FALSE(ok(p.public_timeline(Credential{"zero", std::nullopt}, 100)));
}

TEST_CASE("scenario scripts run at their timestamps") {
  Scenario s;
  s.push_back(UserEvent{0, User{UserId{1}}});
  s.push_back(UserEvent{0, User{UserId{2}}});
  s.push_back(SubmitEvent{100, 1, UserId{1}, "root", false, std::nullopt});
  s.push_back(SubmitEvent{200, 2, UserId{2}, "child", true, 1});
  s.push_back(DeleteEvent{300, UserId{1}, 1});
  s.push_back(DeleteEvent{400, UserId{2}, 99});
  Platform p({}, 1);
  p.load_scenario(s);
  p.tick(1000);
  REQUIRE(p.post_for_key(1).has_value());
  REQUIRE(p.post_for_key(2).has_value());
  CHECK(p.all_posts()[1].parent_id == p.post_for_key(1));
  CHECK(p.all_posts()[1].has_picture);
  const auto log = p.script_log();
  REQUIRE(log.size() == 4);
  CHECK(log[0].result == "published");
  CHECK(log[2].result == "deleted");
  CHECK(log[3].result.find("not found") != std::string::npos);
  REQUIRE(p.ground_truth().size() == 1);
  CHECK(p.ground_truth()[0].true_deletion_time == 300);

  velocity::testing::TempDir dir("scenario");
  save_scenario(dir / "s.jsonl", s);
  const auto back = load_scenario(dir / "s.jsonl");
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(to_json_line(back[i]) == to_json_line(s[i]));
}

TEST_CASE("policy documents round-trip and validate") {
  const auto ref = reference::make({.seed = 3, .users = 50, .posts = 500, .days = 3, .tracked = 10});
  const auto text = policy_to_json(ref.policy);
  CHECK(policy_to_json(policy_from_json(text)) == text);

  CHECK_THROWS_AS(policy_from_json(R"({"hourly_reviewer_capacity": [1,2,3]})"), ValidationError);
  CHECK_THROWS_AS(policy_from_json(R"({"keyword_rules": [{"pattern": "", "action": "explicit"}]})"),
                  ValidationError);
  CHECK_THROWS_AS(policy_from_json(R"({"keyword_rules": [{"pattern": "x", "action": "magic"}]})"),
                  ValidationError);
  try {
    policy_from_json(R"({"watchlist": [{"user_id": 1, "review_latency": -5,
                         "deletion_probability_per_review": 0.5}]})");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("review_latency") != std::string::npos);
  }
  const auto unlimited = policy_from_json(R"({"hourly_reviewer_capacity": [
      "unlimited",1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21,22,23]})");
  CHECK(unlimited.hourly_reviewer_capacity[0] == kUnlimitedCapacity);
  CHECK(unlimited.hourly_reviewer_capacity[23] == 23);
}

TEST_CASE("ground truth is deterministic for a seed") {
  const auto ref = reference::make({.seed = 5, .users = 200, .posts = 3000, .days = 3, .tracked = 20});
  auto run = [&](std::uint64_t seed) {
    Platform p(ref.policy, seed);
    p.load_scenario(ref.scenario);
    p.tick(ref.end);
    std::string out;
    for (const auto& g : p.ground_truth()) out += to_json_line(g) + "\n";
    return out;
  };
  const auto a = run(11);
  CHECK(!a.empty());
  CHECK(a == run(11));
  CHECK(a != run(12));
}

TEST_CASE("ground truth lines round-trip") {
  GroundTruthEntry e{PostId{3}, UserId{4}, DeletionKind::SystemDeleted, 500, 100, Cause::ChainSweep};
  CHECK(ground_truth_from_json(to_json_line(e)) == e);
  CHECK_THROWS_AS(cause_from_string("weather"), ValidationError);
}
