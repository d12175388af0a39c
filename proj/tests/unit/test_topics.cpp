#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <json.hpp>

#include "velocity/reference.hpp"
#include "velocity/rng.hpp"
#include "velocity/topics.hpp"
#include "velocity/utf8.hpp"

using namespace velocity;
using namespace velocity::topics;

namespace {

Trigram tri(const char* s) { return trigram_from_utf8(s); }

ScoredTrigram scored(const char* s, double score, std::uint64_t count = 30) {
  return ScoredTrigram{tri(s), count, score};
}

std::vector<std::string> texts(const std::vector<TopicPhrase>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.text);
  return out;
}

Post make_post(std::uint64_t id, Timestamp at, std::string text) {
  return Post{PostId{id}, UserId{1}, std::move(text), false, at, std::nullopt, std::nullopt};
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

TEST_CASE("trigram extraction respects segment boundaries") {
  CHECK(extract_trigrams("ABCD") == std::vector<Trigram>{tri("ABC"), tri("BCD")});
  CHECK(extract_trigrams("AB").empty());
  CHECK(extract_trigrams("AB CDE") == std::vector<Trigram>{tri("CDE")});
  CHECK(extract_trigrams("").empty());
  CHECK(to_utf8(tri("启-东")) == "启-东");
  CHECK_THROWS_AS(trigram_from_utf8("ABCD"), ValidationError);
}

TEST_CASE("normalization") {
  SUBCASE("urls are removed and split segments") {
    const auto s = segments("看这个http://t.cn/zWk3 好消息");
    REQUIRE(s.size() == 2);
    CHECK(utf8::encode(s[0]) == "看这个");
    CHECK(utf8::encode(s[1]) == "好消息");
  }
  SUBCASE("emoji, joiners and variation selectors vanish without splitting") {
    const auto s = segments("北京\U0001F600暴‍雨️了");
    REQUIRE(s.size() == 1);
    CHECK(utf8::encode(s[0]) == "北京暴雨了");
  }
  SUBCASE("punctuation stays inside a segment") {
    CHECK(extract_trigrams("启-东") == std::vector<Trigram>{tri("启-东")});
  }
  SUBCASE("ideographic space is whitespace") {
    CHECK(segments("天朝　网友").size() == 2);
  }
}

TEST_CASE("trigram conservation") {
  Rng rng(5);
  std::vector<Post> posts;
  std::size_t expected = 0;
  for (std::uint64_t i = 0; i < 300; ++i) {
    std::string text;
    const auto parts = 1 + rng.below(4);
    for (std::uint64_t k = 0; k < parts; ++k) {
      if (k > 0) text += rng.bernoulli(0.5) ? " " : " http://x.y/z ";
      text += reference::filler(rng, 0, 15);
    }
    posts.push_back(make_post(i, 0, text));
    for (const auto& seg : segments(text)) expected += seg.size() > 2 ? seg.size() - 2 : 0;
  }
  std::uint64_t total = 0;
  for (const auto& [t, c] : count_trigrams(posts)) total += c;
  CHECK(total == expected);
}

TEST_CASE("tf*idf") {
  CHECK(tfidf(25, 10000, 100) == doctest::Approx(115.129254649702).epsilon(1e-12));
  CHECK(tfidf(0, 10000, 3) == 0.0);
  CHECK(tfidf(25, 10000, 0) == doctest::Approx(25.0 * std::log(10000.0)));
  CHECK_THROWS_AS(tfidf(1, 0, 0), ValidationError);
  CHECK_THROWS_AS(IdfTable::build({}), ValidationError);

  const auto idf = IdfTable::build({make_post(1, 0, "ABCD"), make_post(2, 0, "ABCABC"),
                                    make_post(3, 0, "XYZ")});
  CHECK(idf.total_posts() == 3);
  CHECK(idf.frequency(tri("ABC")) == 3);
  CHECK(idf.frequency(tri("QQQ")) == 0);
  CHECK(idf.score(tri("XYZ"), 4) == doctest::Approx(4.0 * std::log(3.0)));
}

TEST_CASE("selection thresholds and tie rule") {
  SUBCASE("exactly min_daily occurrences is excluded") {
    const auto top = select_top({scored("ABC", 9.0, 20), scored("BCD", 1.0, 21)}, 20, 1000);
    REQUIRE(top.size() == 1);
    CHECK(top[0].trigram == tri("BCD"));
  }
  SUBCASE("everything eligible fits under k") {
    std::vector<ScoredTrigram> all;
    for (char32_t c = 0x4E00; c < 0x4E00 + 999; ++c) all.push_back({Trigram{c, c, c}, 25, 1.0});
    CHECK(select_top(all).size() == 999);
  }
  SUBCASE("equal scores are ranked lexicographically") {
    std::vector<ScoredTrigram> all;
    for (char32_t c = 0x4E00 + 1000; c >= 0x4E00; --c) all.push_back({Trigram{c, U'a', U'b'}, 25, 2.0});
    const auto top = select_top(all);
    REQUIRE(top.size() == 1000);
    CHECK(top.back().trigram[0] == 0x4E00 + 999);
    CHECK(std::is_sorted(top.begin(), top.end(), [](const auto& a, const auto& b) {
      return a.trigram < b.trigram;
    }));
    auto shuffled = all;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto again = select_top(shuffled);
    for (std::size_t i = 0; i < top.size(); ++i) CHECK(again[i].trigram == top[i].trigram);
  }
  SUBCASE("count breaks score ties before the trigram") {
    const auto top = select_top({scored("AAA", 3.0, 30), scored("ZZZ", 3.0, 40)}, 20, 1);
    CHECK(top[0].trigram == tri("ZZZ"));
  }
  SUBCASE("score day joins counts and idf") {
    TrigramCounts day{{tri("ABC"), 25}};
    const auto idf = IdfTable::build({make_post(1, 0, "XYZ")});
    const auto s = score_day(day, idf);
    REQUIRE(s.size() == 1);
    CHECK(s[0].score == doctest::Approx(0.0));
  }
}

TEST_CASE("connector") {
  CHECK(texts(connect({scored("ABC", 1), scored("BCD", 1)})) == std::vector<std::string>{"ABCD"});
  const auto branch = connect({scored("ABC", 1), scored("BCD", 1), scored("BCE", 1)});
  CHECK(texts(branch) == std::vector<std::string>{"ABCD", "ABCE"});
  const auto cycle = connect({scored("ABC", 1), scored("BCA", 1), scored("CAB", 1)});
  REQUIRE(cycle.size() == 1);
  CHECK(cycle[0].members.size() == 3);
  CHECK(cycle[0].text == "ABCAB");
  CHECK(connect({}).empty());

  SUBCASE("higher-scoring children come first") {
    const auto ps = connect({scored("ABC", 1), scored("BCD", 1), scored("BCE", 5)});
    CHECK(texts(ps) == std::vector<std::string>{"ABCE", "ABCD"});
    CHECK(ps[0].score == 6.0);
  }
  SUBCASE("a lone trigram is its own phrase") {
    CHECK(texts(connect({scored("XYZ", 2)})) == std::vector<std::string>{"XYZ"});
  }
}

TEST_CASE("connector output re-decomposes into its members") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::set<Trigram> set;
    const auto n = 1 + rng.below(25);
    for (std::uint64_t i = 0; i < n; ++i) {
      set.insert(Trigram{static_cast<char32_t>('A' + rng.below(4)),
                         static_cast<char32_t>('A' + rng.below(4)),
                         static_cast<char32_t>('A' + rng.below(4))});
    }
    std::vector<ScoredTrigram> sel;
    for (const auto& t : set) sel.push_back({t, 30, static_cast<double>(rng.below(5))});
    const auto phrases = connect(sel);
    std::set<Trigram> covered;
    for (const auto& p : phrases) {
      CHECK(extract_trigrams(p.text) == p.members);
      CHECK(utf8::length(p.text) == p.members.size() + 2);
      for (std::size_t i = 1; i < p.members.size(); ++i) {
        CHECK(p.members[i - 1][1] == p.members[i][0]);
        CHECK(p.members[i - 1][2] == p.members[i][1]);
      }
      covered.insert(p.members.begin(), p.members.end());
    }
    CHECK(covered == set);
    CHECK(phrases.size() <= set.size());
  }
}

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::fabs(cosine_similarity({1, 2, 3}, {2, 4, 6}) - 1.0) <= 1e-9);
  CHECK(std::fabs(cosine_similarity({1, 0, 0, 2}, {0, 3, 1, 0})) <= 1e-9);
  CHECK(cosine_similarity({1, 1}, {-2, -2}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 2}), UndefinedSimilarity);
  CHECK_THROWS_AS(cosine_similarity({1}, {1, 2}), ValidationError);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(24), b(24);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double c = cosine_similarity(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("hourly matrix counts occurrences") {
  const std::vector<Post> corpus{make_post(1, 5 * kHour + 10, "暴雨暴雨"),
                                 make_post(2, 5 * kHour + 20, "暴雨"),
                                 make_post(3, 30 * kHour, "北京暴雨"),
                                 make_post(4, 49 * kHour, "暴雨"),
                                 make_post(5, 7 * kHour, "aaaa")};
  const auto x = hourly_matrix({"暴雨", "缺席", "aa"}, 0, 2, corpus);
  CHECK(x.rows() == 3);
  CHECK(x.cols() == 48);
  CHECK(x(0, 5) == 3.0);
  CHECK(x(0, 30) == 1.0);
  CHECK(x.row(0).sum() == 4.0);  // the post past the span is ignored
  CHECK(x.row(1).isZero());
  CHECK(x(2, 7) == 2.0);  // non-overlapping
  CHECK_THROWS_AS(hourly_matrix({"a"}, 0, 0, corpus), ValidationError);
  CHECK_THROWS_AS(hourly_matrix({}, 0, 1, corpus), ValidationError);
}

TEST_CASE("phrase validation by endpoint similarity") {
  std::unordered_map<Trigram, std::vector<double>, TrigramHash> series{
      {tri("ABC"), {1, 2, 0}}, {tri("BCD"), {2, 4, 0}}, {tri("CDE"), {0, 0, 5}},
      {tri("XYZ"), {0, 0, 0}}, {tri("YZW"), {1, 1, 1}}};
  std::vector<TopicPhrase> ps(4);
  ps[0].members = {tri("ABC"), tri("BCD")};
  ps[1].members = {tri("ABC"), tri("BCD"), tri("CDE")};
  ps[2].members = {tri("QQQ")};
  ps[3].members = {tri("XYZ"), tri("YZW")};
  validate_phrases(ps, series, 0.7);
  CHECK(ps[0].accepted);
  CHECK(*ps[0].endpoint_similarity == doctest::Approx(1.0));
  CHECK_FALSE(ps[1].accepted);
  CHECK(*ps[1].endpoint_similarity == doctest::Approx(0.0));
  CHECK(ps[2].accepted);
  CHECK_FALSE(ps[2].endpoint_similarity.has_value());
  CHECK_FALSE(ps[3].accepted);
}

TEST_CASE("trigram series are hourly over the span") {
  const std::vector<Post> corpus{make_post(1, 3600, "ABCABC"), make_post(2, 7300, "ABC"),
                                 make_post(3, kDay + 10, "ABC")};
  const auto s = trigram_series({tri("ABC"), tri("QQQ")}, corpus, 0, 1);
  REQUIRE(s.at(tri("ABC")).size() == 24);
  CHECK(s.at(tri("ABC"))[1] == 2.0);
  CHECK(s.at(tri("ABC"))[2] == 1.0);
  CHECK(s.at(tri("QQQ")) == std::vector<double>(24, 0.0));
}

TEST_CASE("planted phrase recovery") {
  Rng rng(77);
  const std::string planted = "北京特大暴雨遇难人数公布";
  std::vector<Post> deleted, month;
  std::uint64_t id = 0;
  for (int i = 0; i < 50; ++i) {
    deleted.push_back(make_post(++id, rng.between(8 * kHour, 20 * kHour),
                                reference::filler(rng, 0, 10) + planted + reference::filler(rng, 0, 10)));
  }
  for (int i = 0; i < 5000; ++i) {
    const auto text = reference::filler(rng, 10, 60);
    if (i % 10 == 0) deleted.push_back(make_post(++id, rng.between(0, kDay - 1), text));
    month.push_back(make_post(++id, rng.between(0, kDay - 1), text));
  }
  const auto days = daily_topics(deleted, month);
  REQUIRE(days.size() == 1);
  const auto& ps = days[0].phrases;
  REQUIRE(!ps.empty());
  bool found = false;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ps.size()); ++i) {
    found = found || ps[i].text.find(planted) != std::string::npos;
  }
  CHECK(found);
  CHECK(ps[0].accepted);

  const auto csv = topics_csv(days);
  CHECK(csv.rfind("day,rank,phrase,score,endpoint_similarity,accepted\n", 0) == 0);
  CHECK(csv.find(planted) != std::string::npos);
}

TEST_CASE("ica recovers unmixed sources") {
  const int t = 2000;
  Eigen::MatrixXd s(2, t);
  Rng rng(4);
  for (int i = 0; i < t; ++i) {
    s(0, i) = std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);            // uniform, unit variance
    s(1, i) = (rng.bernoulli(0.5) ? 1.0 : -1.0) * -std::log(rng.uniform() + 1e-300) / std::sqrt(2.0);
  }
  const auto r = ica(s, 2, 9);
  CHECK(r.component_count == 2);
  CHECK(r.sources.rows() == 2);
  CHECK(r.mixing.rows() == 2);
  for (int k = 0; k < 2; ++k) {
    const double best = std::max(std::fabs(correlation(r.sources.row(k).transpose(), s.row(0).transpose())),
                                 std::fabs(correlation(r.sources.row(k).transpose(), s.row(1).transpose())));
    CHECK(best > 0.999);
  }
  CHECK(std::fabs(correlation(r.sources.row(0).transpose(), r.sources.row(1).transpose())) <= 1e-6);

  SUBCASE("deterministic for a seed") {
    const auto again = ica(s, 2, 9);
    CHECK(again.sources == r.sources);
    CHECK(again.mixing == r.mixing);
  }
  SUBCASE("reconstruction on the retained subspace") {
    const Eigen::MatrixXd centered = s.colwise() - s.rowwise().mean();
    const Eigen::MatrixXd approx = r.mixing * r.sources;
    CHECK((approx - centered).norm() / centered.norm() < 1e-8);
  }
}

TEST_CASE("ica rank errors") {
  Eigen::MatrixXd x(3, 200);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    x(0, i) = rng.uniform();
    x(1, i) = rng.uniform();
    x(2, i) = x(0, i) + 2.0 * x(1, i);
  }
  CHECK_NOTHROW(ica(x, 2, 1));
  CHECK_THROWS_AS(ica(x, 3, 1), RankDeficiency);
  CHECK_THROWS_AS(ica(x, 4, 1), RankDeficiency);
  CHECK_THROWS_AS(ica(x, 0, 1), Error);
}

TEST_CASE("theme words") {
  const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  IcaResult r;
  SUBCASE("block-diagonal mixing has disjoint lists") {
    r.mixing.setZero(6, 2);
    r.mixing.block(0, 0, 3, 1) << 3, -2, 1;
    r.mixing.block(3, 1, 3, 1) << 1, 2, -3;
    const auto th = theme_words(r, words, 3);
    CHECK(th.per_component[0] == std::vector<std::string>{"a", "b", "c"});
    CHECK(th.per_component[1] == std::vector<std::string>{"f", "e", "d"});
    CHECK(th.cross_cutting.empty());
  }
  SUBCASE("a word loaded everywhere is cross-cutting") {
    r.mixing.setZero(6, 3);
    r.mixing.col(0) << 9, 1, 0, 0, 0, 0;
    r.mixing.col(1) << 9, 0, 1, 0, 0, 0;
    r.mixing.col(2) << 9, 0, 0, 0, 1, 0;
    const auto th = theme_words(r, words, 2);
    CHECK(th.cross_cutting == std::vector<std::string>{"a"});
  }
  SUBCASE("per_component beyond the vocabulary lists every word") {
    r.mixing = Eigen::MatrixXd::Random(6, 2);
    const auto th = theme_words(r, words, 10);
    for (const auto& list : th.per_component) CHECK(list.size() == 6);
    CHECK(th.cross_cutting.size() == 6);
  }
  r.mixing.setOnes(6, 2);
  CHECK_THROWS_AS(theme_words(r, {"a"}, 3), ValidationError);

  r.sources.setZero(2, 4);
  const auto j = nlohmann::json::parse(themes_to_json(theme_words(r, words, 2), words, r));
  CHECK(j.is_object());
}
