#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "velocity/domain.hpp"

namespace velocity::topics {

// Three Unicode scalar values. Ordering is code-point lexicographic, which
// matches UTF-8 byte order.
using Trigram = std::array<char32_t, 3>;

struct TrigramHash {
  std::size_t operator()(const Trigram& t) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(t[0]) << 42) ^
                                      (static_cast<std::uint64_t>(t[1]) << 21) ^ t[2]);
  }
};

using TrigramCounts = std::unordered_map<Trigram, std::uint64_t, TrigramHash>;
using TrigramSet = std::unordered_set<Trigram, TrigramHash>;

std::string to_utf8(const Trigram& t);
// Throws ValidationError unless `s` holds exactly three scalars.
Trigram trigram_from_utf8(std::string_view s);

// Normalized boundary-free segments: URLs removed, whitespace splits, emoji,
// joiners, variation selectors and control characters dropped.
std::vector<std::u32string> segments(std::string_view text);

std::vector<Trigram> extract_trigrams(std::string_view text);

// Occurrence counts over a corpus.
TrigramCounts count_trigrams(const std::vector<Post>& posts);

// f_day * ln(n_month / max(f_month, 1)). Throws ValidationError when the
// month corpus is empty.
double tfidf(std::uint64_t f_day, std::uint64_t n_month, std::uint64_t f_month);

// Background statistics from the month corpus.
class IdfTable {
 public:
  static IdfTable build(const std::vector<Post>& month_corpus);

  double score(const Trigram& t, std::uint64_t f_day) const;
  std::uint64_t frequency(const Trigram& t) const;
  std::uint64_t total_posts() const { return total_posts_; }

 private:
  std::uint64_t total_posts_ = 0;
  TrigramCounts counts_;
};

struct ScoredTrigram {
  Trigram trigram{};
  std::uint64_t count = 0;
  double score = 0.0;
};

std::vector<ScoredTrigram> score_day(const TrigramCounts& day, const IdfTable& idf);

// Keeps count > min_daily, then the k best by (score desc, count desc,
// trigram asc).
std::vector<ScoredTrigram> select_top(std::vector<ScoredTrigram> scored,
                                      std::uint64_t min_daily = 20, std::size_t k = 1000);

struct TopicPhrase {
  std::string text;
  std::vector<Trigram> members;
  double score = 0.0;
  std::optional<double> endpoint_similarity;
  bool accepted = true;
};

// Depth-first over the two-scalar-overlap graph with a global visited set;
// one phrase per root-to-leaf path of the traversal.
std::vector<TopicPhrase> connect(const std::vector<ScoredTrigram>& selected);

class UndefinedSimilarity : public Error {
 public:
  using Error::Error;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Hourly occurrence series of each trigram over [span_start, span_start +
// days * 24h), by post creation time.
std::unordered_map<Trigram, std::vector<double>, TrigramHash> trigram_series(
    const TrigramSet& wanted, const std::vector<Post>& corpus, Timestamp span_start, std::size_t days);

// Sets endpoint_similarity and accepted. Single-trigram phrases have no
// endpoints to compare and stay accepted.
void validate_phrases(std::vector<TopicPhrase>& phrases,
                      const std::unordered_map<Trigram, std::vector<double>, TrigramHash>& series,
                      double threshold = 0.7);

// Row i counts non-overlapping occurrences of words[i] per hour.
Eigen::MatrixXd hourly_matrix(const std::vector<std::string>& words, Timestamp span_start,
                              std::size_t days, const std::vector<Post>& corpus);

struct TopicOptions {
  std::uint64_t min_daily = 20;
  std::size_t top_k = 1000;
  double cos_threshold = 0.7;
};

struct DayTopics {
  std::int64_t day = 0;  // created_at / 86400
  std::vector<ScoredTrigram> selected;
  std::vector<TopicPhrase> phrases;  // score desc, then text
};

// Day corpora are the deleted posts grouped by creation day.
std::vector<DayTopics> daily_topics(const std::vector<Post>& deleted, const std::vector<Post>& month,
                                    const TopicOptions& options = {});

std::string topics_csv(const std::vector<DayTopics>& days);

// ---- ICA -------------------------------------------------------------------

struct IcaResult {
  Eigen::MatrixXd sources;  // k x T, unit variance rows
  Eigen::MatrixXd mixing;   // m x k
  std::size_t component_count = 0;
  int iterations = 0;
};

class RankDeficiency : public Error {
 public:
  using Error::Error;
};

class IcaNoConvergence : public Error {
 public:
  IcaNoConvergence(const std::string& what, IcaResult last) : Error(what), last_(std::move(last)) {}
  const IcaResult& last_iterate() const { return last_; }

 private:
  IcaResult last_;
};

struct IcaOptions {
  double tolerance = 1e-8;
  int max_iterations = 1000;
};

// Symmetric FastICA with the log-cosh contrast on the whitened, centered
// rows of X.
IcaResult ica(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed,
              const IcaOptions& options = {});

struct Themes {
  std::vector<std::vector<std::string>> per_component;
  std::vector<std::string> cross_cutting;
};

// Cross-cutting words appear in at least k-1 lists (all k lists when k < 3).
Themes theme_words(const IcaResult& result, const std::vector<std::string>& words,
                   std::size_t per_component = 10);

std::string themes_to_json(const Themes& themes, const std::vector<std::string>& words,
                           const IcaResult& result);

}  // namespace velocity::topics
