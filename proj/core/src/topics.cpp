#include "velocity/topics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json_detail.hpp"
#include "velocity/rng.hpp"
#include "velocity/utf8.hpp"

namespace velocity::topics {

namespace {

bool is_space(char32_t c) {
  return c == U' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_dropped(char32_t c) {
  return c < 0x20 || (c >= 0x7F && c <= 0x9F) ||   // controls
         (c >= 0x200B && c <= 0x200D) ||          // zero-width space and joiners
         (c >= 0xFE00 && c <= 0xFE0F) ||          // variation selectors
         (c >= 0xE0000 && c <= 0xE01EF) ||        // tags, supplementary selectors
         (c >= 0x1F000 && c <= 0x1FAFF) ||        // emoji and pictographs
         (c >= 0x2600 && c <= 0x27BF) ||          // symbols and dingbats
         (c >= 0x2B00 && c <= 0x2BFF) || c == 0xFFFD;
}

bool url_at(const std::u32string& s, std::size_t i) {
  auto match = [&](std::u32string_view prefix) {
    if (i + prefix.size() > s.size()) return false;
    for (std::size_t k = 0; k < prefix.size(); ++k) {
      char32_t c = s[i + k];
      if (c >= U'A' && c <= U'Z') c += 32;
      if (c != prefix[k]) return false;
    }
    return true;
  };
  return match(U"http://") || match(U"https://");
}

std::size_t count_occurrences(std::string_view text, std::string_view word) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(word); pos != std::string_view::npos;
       pos = text.find(word, pos + word.size())) {
    ++n;
  }
  return n;
}

bool better(const ScoredTrigram& a, const ScoredTrigram& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.count != b.count) return a.count > b.count;
  return a.trigram < b.trigram;
}

}  // namespace

std::string to_utf8(const Trigram& t) { return utf8::encode(std::u32string_view(t.data(), 3)); }

Trigram trigram_from_utf8(std::string_view s) {
  const auto scalars = utf8::decode(s);
  if (scalars.size() != 3) throw ValidationError("trigram must hold three characters: '" + std::string(s) + "'");
  return {scalars[0], scalars[1], scalars[2]};
}

std::vector<std::u32string> segments(std::string_view text) {
  const std::u32string s = utf8::decode(text);
  std::vector<std::u32string> out;
  std::u32string current;
  auto cut = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < s.size();) {
    if (url_at(s, i)) {
      cut();
      while (i < s.size() && !is_space(s[i])) ++i;
      continue;
    }
    const char32_t c = s[i++];
    if (is_space(c)) {
      cut();
    } else if (!is_dropped(c)) {
      current.push_back(c);
    }
  }
  cut();
  return out;
}

std::vector<Trigram> extract_trigrams(std::string_view text) {
  std::vector<Trigram> out;
  for (const auto& seg : segments(text)) {
    for (std::size_t i = 0; i + 3 <= seg.size(); ++i) out.push_back({seg[i], seg[i + 1], seg[i + 2]});
  }
  return out;
}

TrigramCounts count_trigrams(const std::vector<Post>& posts) {
  TrigramCounts counts;
  for (const auto& p : posts) {
    for (const auto& t : extract_trigrams(p.text)) ++counts[t];
  }
  return counts;
}

double tfidf(std::uint64_t f_day, std::uint64_t n_month, std::uint64_t f_month) {
  if (n_month == 0) throw ValidationError("IDF is undefined for an empty month corpus");
  if (f_day == 0) return 0.0;
  return static_cast<double>(f_day) *
         std::log(static_cast<double>(n_month) / static_cast<double>(std::max<std::uint64_t>(f_month, 1)));
}

IdfTable IdfTable::build(const std::vector<Post>& month_corpus) {
  if (month_corpus.empty()) throw ValidationError("IDF is undefined for an empty month corpus");
  IdfTable t;
  t.total_posts_ = month_corpus.size();
  t.counts_ = count_trigrams(month_corpus);
  return t;
}

std::uint64_t IdfTable::frequency(const Trigram& t) const {
  auto it = counts_.find(t);
  return it == counts_.end() ? 0 : it->second;
}

double IdfTable::score(const Trigram& t, std::uint64_t f_day) const {
  return tfidf(f_day, total_posts_, frequency(t));
}

std::vector<ScoredTrigram> score_day(const TrigramCounts& day, const IdfTable& idf) {
  std::vector<ScoredTrigram> out;
  out.reserve(day.size());
  for (const auto& [t, count] : day) out.push_back(ScoredTrigram{t, count, idf.score(t, count)});
  std::sort(out.begin(), out.end(), better);
  return out;
}

std::vector<ScoredTrigram> select_top(std::vector<ScoredTrigram> scored, std::uint64_t min_daily,
                                      std::size_t k) {
  std::erase_if(scored, [&](const ScoredTrigram& s) { return s.count <= min_daily; });
  std::sort(scored.begin(), scored.end(), better);
  if (scored.size() > k) scored.resize(k);
  return scored;
}

std::vector<TopicPhrase> connect(const std::vector<ScoredTrigram>& selected) {
  std::map<Trigram, double> score;
  for (const auto& s : selected) score[s.trigram] = s.score;

  std::map<std::pair<char32_t, char32_t>, std::vector<Trigram>> by_prefix;
  for (const auto& [t, _] : score) by_prefix[{t[0], t[1]}].push_back(t);
  std::map<Trigram, std::vector<Trigram>> children;
  std::map<Trigram, std::size_t> indegree;
  for (const auto& [t, _] : score) indegree[t];
  for (const auto& [t, _] : score) {
    auto it = by_prefix.find({t[1], t[2]});
    if (it == by_prefix.end()) continue;
    auto& kids = children[t];
    for (const auto& v : it->second) {
      if (v == t) continue;
      kids.push_back(v);
      ++indegree[v];
    }
    std::sort(kids.begin(), kids.end(), [&](const Trigram& a, const Trigram& b) {
      const double sa = score[a];
      const double sb = score[b];
      return sa != sb ? sa > sb : a < b;
    });
  }

  std::vector<TopicPhrase> phrases;
  std::set<Trigram> visited;
  std::vector<Trigram> path;
  auto emit = [&] {
    TopicPhrase p;
    p.members = path;
    std::u32string text(path.front().begin(), path.front().end());
    for (std::size_t i = 1; i < path.size(); ++i) text.push_back(path[i][2]);
    p.text = utf8::encode(text);
    for (const auto& t : path) p.score += score[t];
    phrases.push_back(std::move(p));
  };
  std::function<void(const Trigram&)> dfs = [&](const Trigram& node) {
    path.push_back(node);
    bool expanded = false;
    auto it = children.find(node);
    if (it != children.end()) {
      for (const auto& child : it->second) {
        if (!visited.insert(child).second) continue;
        expanded = true;
        dfs(child);
      }
    }
    if (!expanded) emit();
    path.pop_back();
  };

  for (const auto& [t, deg] : indegree) {
    if (deg == 0 && visited.insert(t).second) dfs(t);
  }
  for (const auto& [t, _] : score) {
    if (visited.insert(t).second) dfs(t);
  }
  return phrases;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("series lengths differ");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarity("cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::unordered_map<Trigram, std::vector<double>, TrigramHash> trigram_series(
    const TrigramSet& wanted, const std::vector<Post>& corpus, Timestamp span_start, std::size_t days) {
  std::unordered_map<Trigram, std::vector<double>, TrigramHash> out;
  const std::size_t hours = days * 24;
  for (const auto& t : wanted) out.emplace(t, std::vector<double>(hours, 0.0));
  for (const auto& p : corpus) {
    if (p.created_at < span_start) continue;
    const auto hour = static_cast<std::size_t>((p.created_at - span_start) / kHour);
    if (hour >= hours) continue;
    for (const auto& t : extract_trigrams(p.text)) {
      auto it = out.find(t);
      if (it != out.end()) it->second[hour] += 1.0;
    }
  }
  return out;
}

void validate_phrases(std::vector<TopicPhrase>& phrases,
                      const std::unordered_map<Trigram, std::vector<double>, TrigramHash>& series,
                      double threshold) {
  for (auto& p : phrases) {
    p.endpoint_similarity.reset();
    p.accepted = true;
    if (p.members.size() < 2) continue;
    auto first = series.find(p.members.front());
    auto last = series.find(p.members.back());
    if (first == series.end() || last == series.end()) {
      p.accepted = false;
      continue;
    }
    try {
      p.endpoint_similarity = cosine_similarity(first->second, last->second);
      p.accepted = *p.endpoint_similarity >= threshold;
    } catch (const UndefinedSimilarity&) {
      p.accepted = false;
    }
  }
}

Eigen::MatrixXd hourly_matrix(const std::vector<std::string>& words, Timestamp span_start,
                              std::size_t days, const std::vector<Post>& corpus) {
  if (words.empty()) throw ValidationError("hourly_matrix needs at least one word");
  if (days == 0) throw ValidationError("hourly_matrix span is empty");
  for (const auto& w : words) {
    if (w.empty()) throw ValidationError("hourly_matrix words must be nonempty");
  }
  const auto hours = static_cast<Eigen::Index>(days * 24);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(words.size()), hours);
  for (const auto& p : corpus) {
    if (p.created_at < span_start) continue;
    const auto hour = static_cast<Eigen::Index>((p.created_at - span_start) / kHour);
    if (hour >= hours) continue;
    for (std::size_t i = 0; i < words.size(); ++i) {
      x(static_cast<Eigen::Index>(i), hour) += static_cast<double>(count_occurrences(p.text, words[i]));
    }
  }
  return x;
}

std::vector<DayTopics> daily_topics(const std::vector<Post>& deleted, const std::vector<Post>& month,
                                    const TopicOptions& options) {
  const IdfTable idf = IdfTable::build(month);
  std::map<std::int64_t, std::vector<Post>> by_day;
  for (const auto& p : deleted) by_day[p.created_at / kDay].push_back(p);
  std::vector<DayTopics> out;
  if (by_day.empty()) return out;

  TrigramSet endpoints;
  for (auto& [day, posts] : by_day) {
    DayTopics d;
    d.day = day;
    d.selected = select_top(score_day(count_trigrams(posts), idf), options.min_daily, options.top_k);
    d.phrases = connect(d.selected);
    for (const auto& p : d.phrases) {
      if (p.members.size() < 2) continue;
      endpoints.insert(p.members.front());
      endpoints.insert(p.members.back());
    }
    out.push_back(std::move(d));
  }
  const std::int64_t first_day = by_day.begin()->first;
  const auto days = static_cast<std::size_t>(by_day.rbegin()->first - first_day + 1);
  const auto series = trigram_series(endpoints, deleted, first_day * kDay, days);
  for (auto& d : out) {
    validate_phrases(d.phrases, series, options.cos_threshold);
    std::sort(d.phrases.begin(), d.phrases.end(), [](const TopicPhrase& a, const TopicPhrase& b) {
      return a.score != b.score ? a.score > b.score : a.text < b.text;
    });
  }
  return out;
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string topics_csv(const std::vector<DayTopics>& days) {
  std::ostringstream out;
  out << "day,rank,phrase,score,endpoint_similarity,accepted\n";
  for (const auto& d : days) {
    std::size_t rank = 0;
    for (const auto& p : d.phrases) {
      out << d.day << ',' << ++rank << ',' << csv_quote(p.text) << ',' << number(p.score) << ','
          << (p.endpoint_similarity ? number(*p.endpoint_similarity) : std::string()) << ','
          << (p.accepted ? "true" : "false") << '\n';
    }
  }
  return out.str();
}

// ---- ICA -------------------------------------------------------------------

namespace {

Eigen::MatrixXd decorrelate(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().array().max(1e-300).rsqrt();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * w;
}

}  // namespace

IcaResult ica(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed, const IcaOptions& options) {
  const Eigen::Index m = x.rows();
  const Eigen::Index t = x.cols();
  const auto kk = static_cast<Eigen::Index>(k);
  if (k == 0) throw ValidationError("component count must be >= 1");
  if (kk > m || kk > t) {
    throw RankDeficiency("k = " + std::to_string(k) + " exceeds min(rows, columns) = " +
                         std::to_string(std::min(m, t)));
  }
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Eigen::MatrixXd xc = x.colwise() - mean;
  const Eigen::MatrixXd cov = xc * xc.transpose() / static_cast<double>(t);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // Eigenvalues ascending; keep the k largest.
  const Eigen::VectorXd evals = es.eigenvalues();
  const double top = evals(m - 1);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (evals(i) > std::max(top, 0.0) * 1e-10 && evals(i) > 0.0) ++rank;
  }
  if (rank < kk) {
    throw RankDeficiency("k = " + std::to_string(k) + " exceeds the data rank " + std::to_string(rank));
  }
  const Eigen::MatrixXd e = es.eigenvectors().rightCols(kk);
  const Eigen::VectorXd d = evals.tail(kk);
  const Eigen::MatrixXd whiten = d.array().rsqrt().matrix().asDiagonal() * e.transpose();
  const Eigen::MatrixXd z = whiten * xc;

  Rng rng = Rng::stream(seed, "ica");
  Eigen::MatrixXd w(kk, kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    for (Eigen::Index j = 0; j < kk; ++j) w(i, j) = rng.normal();
  }
  w = decorrelate(w);

  auto finish = [&](const Eigen::MatrixXd& wf, int iterations) {
    IcaResult r;
    r.component_count = k;
    r.iterations = iterations;
    r.sources = wf * z;
    r.mixing = e * d.array().sqrt().matrix().asDiagonal() * wf.transpose();
    for (Eigen::Index c = 0; c < kk; ++c) {
      Eigen::Index arg = 0;
      r.mixing.col(c).cwiseAbs().maxCoeff(&arg);
      if (r.mixing(arg, c) < 0.0) {
        r.mixing.col(c) *= -1.0;
        r.sources.row(c) *= -1.0;
      }
    }
    return r;
  };

  const double inv_t = 1.0 / static_cast<double>(t);
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::ArrayXXd g = (w * z).array().tanh();
    const Eigen::VectorXd g_prime = (1.0 - g.square()).rowwise().mean();
    Eigen::MatrixXd next = g.matrix() * z.transpose() * inv_t - g_prime.asDiagonal() * w;
    next = decorrelate(next);
    const double change = ((next * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = next;
    if (change < options.tolerance) return finish(w, it);
  }
  throw IcaNoConvergence("ICA did not converge in " + std::to_string(options.max_iterations) +
                             " iterations",
                         finish(w, options.max_iterations));
}

Themes theme_words(const IcaResult& result, const std::vector<std::string>& words,
                   std::size_t per_component) {
  const auto m = static_cast<std::size_t>(result.mixing.rows());
  if (words.size() != m) {
    throw ValidationError("theme_words: " + std::to_string(words.size()) + " words for " +
                          std::to_string(m) + " mixing rows");
  }
  Themes out;
  std::vector<std::size_t> appearances(m, 0);
  for (Eigen::Index c = 0; c < result.mixing.cols(); ++c) {
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::fabs(result.mixing(static_cast<Eigen::Index>(a), c)) >
             std::fabs(result.mixing(static_cast<Eigen::Index>(b), c));
    });
    order.resize(std::min(per_component, m));
    std::vector<std::string> list;
    for (std::size_t i : order) {
      list.push_back(words[i]);
      ++appearances[i];
    }
    out.per_component.push_back(std::move(list));
  }
  const std::size_t k = out.per_component.size();
  const std::size_t need = k >= 3 ? k - 1 : k;
  for (std::size_t i = 0; i < m; ++i) {
    if (k > 0 && appearances[i] >= need) out.cross_cutting.push_back(words[i]);
  }
  return out;
}

std::string themes_to_json(const Themes& themes, const std::vector<std::string>& words,
                           const IcaResult& result) {
  detail::Json j;
  j["component_count"] = result.component_count;
  j["iterations"] = result.iterations;
  j["words"] = words;
  j["components"] = detail::Json::array();
  for (std::size_t c = 0; c < themes.per_component.size(); ++c) {
    j["components"].push_back({{"index", c}, {"words", themes.per_component[c]}});
  }
  j["cross_cutting"] = themes.cross_cutting;
  return j.dump(2);
}

}  // namespace velocity::topics
