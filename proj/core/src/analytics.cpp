#include "velocity/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "json_detail.hpp"
#include "velocity/topics.hpp"

namespace velocity::analytics {

using detail::Json;

namespace {

std::unordered_map<PostId, const Post*> index_posts(const std::vector<Post>& posts) {
  std::unordered_map<PostId, const Post*> idx;
  idx.reserve(posts.size());
  for (const auto& p : posts) idx.emplace(p.post_id, &p);
  return idx;
}

std::int64_t floor_div(double value, double width) {
  return static_cast<std::int64_t>(std::floor(value / width));
}

}  // namespace

std::string format_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

HistogramReport histogram(const std::vector<DeletionRecord>& records, double bin_width_min) {
  if (!(bin_width_min > 0.0)) throw ValidationError("bin_width must be > 0");
  HistogramReport out;
  out.histogram.bin_width = bin_width_min;
  std::array<std::uint64_t, 4> within{};
  constexpr std::array<double, 4> thresholds{5.0, 8.0, 30.0, 24.0 * 60.0};
  for (const auto& r : records) {
    ++out.histogram.counts[floor_div(r.lifetime, bin_width_min)];
    ++out.histogram.total;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (r.lifetime <= thresholds[i]) ++within[i];
    }
  }
  if (out.histogram.total > 0) {
    const auto n = static_cast<double>(out.histogram.total);
    out.fractions.within_5min = static_cast<double>(within[0]) / n;
    out.fractions.within_8min = static_cast<double>(within[1]) / n;
    out.fractions.within_30min = static_cast<double>(within[2]) / n;
    out.fractions.within_24h = static_cast<double>(within[3]) / n;
  }
  return out;
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<Cohort> cohort_median_lifetimes(const std::vector<DeletionRecord>& records) {
  std::map<std::uint64_t, std::vector<double>> by_user;
  for (const auto& r : records) by_user[raw(r.user_id)].push_back(r.lifetime);
  std::map<std::uint64_t, std::pair<std::uint64_t, std::vector<double>>> by_count;
  for (auto& [user, lifetimes] : by_user) {
    auto& slot = by_count[lifetimes.size()];
    ++slot.first;
    slot.second.insert(slot.second.end(), lifetimes.begin(), lifetimes.end());
  }
  std::vector<Cohort> out;
  for (auto& [count, slot] : by_count) {
    auto& values = slot.second;
    std::sort(values.begin(), values.end());
    out.push_back(Cohort{count, slot.first, quantile(values, 0.5), quantile(values, 0.25),
                         quantile(values, 0.75)});
  }
  return out;
}

double population_stddev(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

SyncReport repost_sync(const std::vector<DeletionRecord>& records, const std::vector<Post>& posts,
                       double bin_width_min) {
  if (!(bin_width_min > 0.0)) throw ValidationError("bin_width must be > 0");
  const auto idx = index_posts(posts);
  std::map<std::uint64_t, std::vector<double>> chains;
  for (const auto& r : records) {
    if (r.kind != DeletionKind::SystemDeleted) continue;
    auto it = idx.find(r.post_id);
    const PostId key = it == idx.end() ? r.post_id : it->second->chain_key();
    chains[raw(key)].push_back(static_cast<double>(r.detected_at));
  }
  SyncReport out;
  out.bin_width = bin_width_min;
  std::uint64_t below = 0;
  for (const auto& [key, times] : chains) {
    if (times.size() < 2) continue;
    const double sd = population_stddev(times);
    out.chains.push_back(ChainSync{PostId{key}, times.size(), sd});
    ++out.bins[floor_div(sd / 60.0, bin_width_min)];
    if (sd < 5.0 * 60.0) ++below;
  }
  if (!out.chains.empty()) {
    out.fraction_below_5min = static_cast<double>(below) / static_cast<double>(out.chains.size());
  }
  return out;
}

DiurnalReport diurnal(const std::vector<DeletionRecord>& records) {
  DiurnalReport out;
  std::array<std::vector<double>, 24> lifetimes;
  for (const auto& r : records) {
    auto hour = (r.detected_at / kHour) % 24;
    if (hour < 0) hour += 24;
    ++out.counts[static_cast<std::size_t>(hour)];
    lifetimes[static_cast<std::size_t>(hour)].push_back(r.lifetime);
  }
  for (std::size_t h = 0; h < 24; ++h) {
    if (lifetimes[h].empty()) continue;
    std::sort(lifetimes[h].begin(), lifetimes[h].end());
    out.median_lifetime[h] = quantile(lifetimes[h], 0.5);
  }
  return out;
}

// ---- regression ------------------------------------------------------------

std::vector<std::string> feature_names(Family family) {
  if (family == Family::Regular) return {"has_picture", "friends_count", "posts_count"};
  return {"parent_has_picture", "parent_friends_count", "parent_posts_count", "parent_verified"};
}

Design build_design(const std::vector<DeletionRecord>& records, const std::vector<Post>& posts,
                    const std::vector<User>& users, Family family) {
  const auto pidx = index_posts(posts);
  std::unordered_map<UserId, const User*> uidx;
  for (const auto& u : users) uidx.emplace(u.user_id, &u);

  Design d;
  d.names = feature_names(family);
  std::vector<std::array<double, 4>> rows;
  std::vector<double> ys;
  for (const auto& r : records) {
    auto pit = pidx.find(r.post_id);
    if (pit == pidx.end()) continue;
    const Post& post = *pit->second;
    std::array<double, 4> row{};
    if (family == Family::Regular) {
      if (post.is_repost()) continue;
      auto uit = uidx.find(post.user_id);
      if (uit == uidx.end()) continue;
      row = {post.has_picture ? 1.0 : 0.0, static_cast<double>(uit->second->friends_count),
             static_cast<double>(uit->second->posts_count), 0.0};
    } else {
      if (!post.is_repost()) continue;
      auto parent = pidx.find(*post.parent_id);
      if (parent == pidx.end()) continue;
      auto uit = uidx.find(parent->second->user_id);
      if (uit == uidx.end()) continue;
      row = {parent->second->has_picture ? 1.0 : 0.0,
             static_cast<double>(uit->second->friends_count),
             static_cast<double>(uit->second->posts_count), uit->second->verified ? 1.0 : 0.0};
    }
    rows.push_back(row);
    ys.push_back(static_cast<double>(std::max<long long>(0, std::llround(r.lifetime))));
  }
  const auto p = static_cast<Eigen::Index>(d.names.size());
  d.x.resize(static_cast<Eigen::Index>(rows.size()), p);
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) d.x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    d.y(i) = ys[static_cast<std::size_t>(i)];
  }
  return d;
}

namespace {

Eigen::VectorXd means_of(const Eigen::MatrixXd& xi, const Eigen::VectorXd& beta) {
  return (xi * beta).array().min(700.0).exp().matrix();
}

double theta_score(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double g = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    g += boost::math::digamma(y(i) + theta) - boost::math::digamma(theta) +
         std::log(theta / (theta + mu(i))) + (mu(i) - y(i)) / (theta + mu(i));
  }
  return g;
}

double theta_curvature(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double tm = theta + mu(i);
    h += boost::math::trigamma(y(i) + theta) - boost::math::trigamma(theta) + 1.0 / theta - 1.0 / tm -
         (mu(i) - y(i)) / (tm * tm);
  }
  return h;
}

// Newton on log(theta), which stays positive without constraints.
double update_theta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double phi = std::log(theta);
  for (int it = 0; it < 100; ++it) {
    const double t = std::exp(phi);
    const double g = t * theta_score(y, mu, t);
    const double h = t * t * theta_curvature(y, mu, t) + g;
    double step = h < 0.0 ? -g / h : (g > 0.0 ? 0.5 : -0.5);
    step = std::clamp(step, -2.0, 2.0);
    phi = std::clamp(phi + step, std::log(1e-8), std::log(1e8));
    if (std::fabs(step) < 1e-12) break;
  }
  return std::exp(phi);
}

// One Fisher-scoring step for fixed theta, halved until the likelihood does
// not decrease.
Eigen::VectorXd irls_step(const Eigen::MatrixXd& xi, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta, double theta, double ll) {
  const Eigen::VectorXd eta = xi * beta;
  const Eigen::VectorXd mu = means_of(xi, beta);
  const Eigen::ArrayXd w = mu.array() / (1.0 + mu.array() / theta);
  const Eigen::VectorXd z = eta.array() + (y - mu).array() / mu.array();
  const Eigen::ArrayXd sw = w.sqrt();
  const Eigen::MatrixXd wx = xi.array().colwise() * sw;
  const Eigen::VectorXd wz = (z.array() * sw).matrix();
  Eigen::VectorXd next = wx.colPivHouseholderQr().solve(wz);
  Eigen::VectorXd delta = next - beta;
  for (int half = 0; half < 30; ++half) {
    const Eigen::VectorXd cand = beta + delta;
    if (nb2_log_likelihood(xi, y, cand, theta) >= ll - 1e-12 * std::fabs(ll)) return cand;
    delta *= 0.5;
  }
  return beta;
}

}  // namespace

double nb2_log_likelihood(const Eigen::MatrixXd& xi, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta, double theta) {
  const Eigen::VectorXd mu = means_of(xi, beta);
  const double lg_theta = std::lgamma(theta);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double tm = theta + mu(i);
    ll += std::lgamma(y(i) + theta) - lg_theta - std::lgamma(y(i) + 1.0) + theta * std::log(theta / tm);
    if (y(i) > 0.0) ll += y(i) * std::log(mu(i) / tm);
  }
  return ll;
}

Eigen::VectorXd nb2_gradient(const Eigen::MatrixXd& xi, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& beta, double theta) {
  const Eigen::VectorXd mu = means_of(xi, beta);
  const Eigen::VectorXd r = ((y - mu).array() * theta / (theta + mu.array())).matrix();
  Eigen::VectorXd g(beta.size() + 1);
  g.head(beta.size()) = xi.transpose() * r;
  g(beta.size()) = theta_score(y, mu, theta);
  return g;
}

LifetimeModel fit_nb2(const Design& design, const FitOptions& options) {
  const Eigen::Index n = design.x.rows();
  const Eigen::Index p = design.x.cols();
  if (static_cast<Eigen::Index>(design.names.size()) != p) {
    throw ValidationError("design has " + std::to_string(p) + " columns but " +
                          std::to_string(design.names.size()) + " names");
  }
  if (design.y.size() != n) throw ValidationError("design rows and counts differ in length");
  if (n < 10 * std::max<Eigen::Index>(p, 1)) {
    throw ValidationError("need at least 10 records per feature: have " + std::to_string(n) +
                          " records for " + std::to_string(p) + " features");
  }
  if ((design.y.array() < 0.0).any()) throw ValidationError("counts must be nonnegative");
  const double mean = design.y.mean();
  if (!(mean > 0.0)) throw ValidationError("all lifetimes are zero");

  std::vector<Eigen::Index> active;
  std::vector<double> scale;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = design.x.col(j).cwiseAbs().maxCoeff();
    if (m > 0.0) {
      active.push_back(j);
      scale.push_back(m);
    }
  }
  const auto q = static_cast<Eigen::Index>(active.size()) + 1;
  Eigen::MatrixXd xi(n, q);
  xi.col(0).setOnes();
  for (Eigen::Index k = 1; k < q; ++k) {
    const auto a = static_cast<std::size_t>(k - 1);
    xi.col(k) = design.x.col(active[a]) / scale[a];
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xi);
    qr.setThreshold(1e-10);
    if (qr.rank() < q) {
      throw DegenerateDesign("design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                             " of " + std::to_string(q) + " columns)");
    }
  }

  const double var = (design.y.array() - mean).square().sum() / static_cast<double>(n);
  double theta = var > mean ? mean * mean / (var - mean) : 100.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  beta(0) = std::log(mean);

  auto make_model = [&](int iterations, double ll) {
    LifetimeModel m;
    m.intercept = beta(0);
    m.dispersion = theta;
    m.log_likelihood = ll;
    m.iterations = iterations;
    m.feature_order = design.names;
    const Eigen::VectorXd mu = means_of(xi, beta);
    const Eigen::ArrayXd w = mu.array() / (1.0 + mu.array() / theta);
    const Eigen::MatrixXd info = xi.transpose() * (xi.array().colwise() * w).matrix();
    const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
    for (const auto& name : design.names) {
      m.coefficients[name] = 0.0;
      m.std_errors[name] = 0.0;
      m.p_values[name] = 1.0;
      m.significance[name] = false;
    }
    for (Eigen::Index k = 1; k < q; ++k) {
      const auto a = static_cast<std::size_t>(k - 1);
      const auto& name = design.names[static_cast<std::size_t>(active[a])];
      const double coef = beta(k) / scale[a];
      const double se = std::sqrt(std::max(cov(k, k), 0.0)) / scale[a];
      const double pv = se > 0.0 ? std::erfc(std::fabs(coef / se) / std::sqrt(2.0)) : 1.0;
      m.coefficients[name] = coef;
      m.std_errors[name] = se;
      m.p_values[name] = pv;
      m.significance[name] = pv < options.significance_level;
    }
    return m;
  };

  double ll = nb2_log_likelihood(xi, design.y, beta, theta);
  for (int it = 1; it <= options.max_iterations; ++it) {
    for (int inner = 0; inner < 50; ++inner) {
      const Eigen::VectorXd next = irls_step(xi, design.y, beta, theta, ll);
      const double step = (next - beta).cwiseAbs().maxCoeff();
      beta = next;
      ll = nb2_log_likelihood(xi, design.y, beta, theta);
      if (step < 1e-10) break;
    }
    theta = update_theta(design.y, means_of(xi, beta), theta);
    const double next_ll = nb2_log_likelihood(xi, design.y, beta, theta);
    const bool done = std::fabs(next_ll - ll) <= options.tolerance * (1.0 + std::fabs(next_ll));
    ll = next_ll;
    if (done) return make_model(it, ll);
  }
  throw NoConvergence("negative binomial fit did not converge in " +
                          std::to_string(options.max_iterations) + " iterations",
                      make_model(options.max_iterations, ll));
}

LifetimeModel fit_lifetime_model(const std::vector<DeletionRecord>& records,
                                 const std::vector<Post>& posts, const std::vector<User>& users,
                                 Family family, const FitOptions& options) {
  return fit_nb2(build_design(records, posts, users, family), options);
}

double predict_lifetime(const LifetimeModel& model, const std::map<std::string, double>& features) {
  double eta = model.intercept;
  for (const auto& [name, coef] : model.coefficients) {
    auto it = features.find(name);
    if (it == features.end()) throw ValidationError("missing feature '" + name + "'");
    eta += coef * it->second;
  }
  return std::exp(eta);
}

Eigen::VectorXd sample_nb2(const LifetimeModel& model, const Design& design, Rng& rng) {
  Eigen::VectorXd y(design.x.rows());
  for (Eigen::Index i = 0; i < design.x.rows(); ++i) {
    double eta = model.intercept;
    for (Eigen::Index j = 0; j < design.x.cols(); ++j) {
      auto it = model.coefficients.find(design.names[static_cast<std::size_t>(j)]);
      if (it != model.coefficients.end()) eta += it->second * design.x(i, j);
    }
    const double mu = std::exp(eta);
    const double lambda = mu * rng.gamma(model.dispersion) / model.dispersion;
    y(i) = static_cast<double>(rng.poisson(lambda));
  }
  return y;
}

namespace {

LifetimeModel reference_model(Family family, double intercept, std::vector<double> coefs) {
  LifetimeModel m;
  m.intercept = intercept;
  m.feature_order = feature_names(family);
  for (std::size_t i = 0; i < coefs.size(); ++i) {
    m.coefficients[m.feature_order[i]] = coefs[i];
    m.significance[m.feature_order[i]] = true;
  }
  return m;
}

}  // namespace

LifetimeModel reference_regular_model() {
  return reference_model(Family::Regular, 7.41, {-4.07e-1, -2.42e-4, -5.23e-5});
}

LifetimeModel reference_child_model() {
  return reference_model(Family::Child, 6.27, {-1.01e-1, -4.76e-5, 6.84e-6, 2.01e-1});
}

RefitCheck refit_check(const LifetimeModel& truth, std::size_t n, std::uint64_t seed, double theta) {
  RefitCheck out;
  out.truth = truth;
  out.truth.dispersion = theta;
  Rng rng = Rng::stream(seed, "refit");
  Design d;
  d.names = truth.feature_order;
  const auto rows = static_cast<Eigen::Index>(n);
  d.x.resize(rows, static_cast<Eigen::Index>(d.names.size()));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d.names.size(); ++j) {
      const auto& name = d.names[j];
      double v = 0.0;
      if (name.find("picture") != std::string::npos || name.find("verified") != std::string::npos) {
        v = rng.bernoulli(0.3) ? 1.0 : 0.0;
      } else if (name.find("friends") != std::string::npos) {
        v = static_cast<double>(rng.between(0, 2000));
      } else if (name.find("posts") != std::string::npos) {
        v = static_cast<double>(rng.between(0, 20000));
      } else {
        v = rng.uniform();
      }
      d.x(i, static_cast<Eigen::Index>(j)) = v;
    }
  }
  d.y = sample_nb2(out.truth, d, rng);
  out.fitted = fit_nb2(d);
  out.passed = true;
  const bool intercept_ok = std::fabs(out.fitted.intercept - truth.intercept) <= 0.05;
  out.within_tolerance["intercept"] = intercept_ok;
  out.passed = intercept_ok;
  for (const auto& [name, coef] : truth.coefficients) {
    const bool ok = std::fabs(out.fitted.coefficients[name] - coef) <= 0.1 * std::fabs(coef);
    out.within_tolerance[name] = ok;
    out.passed = out.passed && ok;
  }
  return out;
}

std::string model_to_json(const LifetimeModel& model) {
  Json j;
  j["intercept"] = model.intercept;
  j["dispersion"] = model.dispersion;
  j["log_likelihood"] = model.log_likelihood;
  j["iterations"] = model.iterations;
  j["significance_rule"] = "Wald p < 0.001 (convention)";
  j["coefficients"] = Json::array();
  for (const auto& name : model.feature_order) {
    auto get = [&](const std::map<std::string, double>& m, double fallback) {
      auto it = m.find(name);
      return it == m.end() ? fallback : it->second;
    };
    auto sig = model.significance.find(name);
    j["coefficients"].push_back({{"name", name},
                                 {"coef", get(model.coefficients, 0.0)},
                                 {"std_error", get(model.std_errors, 0.0)},
                                 {"p_value", get(model.p_values, 1.0)},
                                 {"significant", sig != model.significance.end() && sig->second}});
  }
  return j.dump(2);
}

// ---- sweeps ----------------------------------------------------------------

namespace {

struct Candidate {
  Timestamp at = 0;
  PostId post{};
  UserId user{};
  PostId chain{};
};

std::vector<std::string> mine_patterns(const std::vector<DeletionRecord>& records,
                                       const std::unordered_map<PostId, const Post*>& idx,
                                       const SweepOptions& options) {
  std::map<std::string, std::uint64_t> post_counts;
  for (const auto& r : records) {
    if (r.kind != DeletionKind::SystemDeleted) continue;
    auto it = idx.find(r.post_id);
    if (it == idx.end() || r.detected_at - it->second->created_at < options.min_age) continue;
    std::set<std::string> seen;
    for (const auto& t : topics::extract_trigrams(it->second->text)) seen.insert(topics::to_utf8(t));
    for (const auto& s : seen) ++post_counts[s];
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked;
  for (auto& [s, c] : post_counts) {
    if (c >= options.min_count) ranked.emplace_back(s, c);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < options.mined_patterns; ++i) {
    out.push_back(ranked[i].first);
  }
  return out;
}

}  // namespace

std::vector<SweepEvent> detect_sweeps(const std::vector<DeletionRecord>& records,
                                      const std::vector<Post>& posts, const SweepOptions& options) {
  if (options.window <= 0) throw ValidationError("sweep window must be > 0");
  if (options.min_count == 0) throw ValidationError("sweep min_count must be >= 1");
  const auto idx = index_posts(posts);
  const auto patterns = options.patterns.empty() ? mine_patterns(records, idx, options) : options.patterns;

  std::vector<SweepEvent> events;
  std::unordered_set<PostId> claimed;
  for (const auto& pattern : patterns) {
    if (pattern.empty()) continue;
    std::vector<Candidate> cands;
    for (const auto& r : records) {
      if (r.kind != DeletionKind::SystemDeleted || claimed.count(r.post_id) != 0) continue;
      auto it = idx.find(r.post_id);
      if (it == idx.end()) continue;
      const Post& p = *it->second;
      if (r.detected_at - p.created_at < options.min_age) continue;
      if (p.text.find(pattern) == std::string::npos) continue;
      cands.push_back(Candidate{r.detected_at, r.post_id, p.user_id, p.chain_key()});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.at != b.at ? a.at < b.at : raw(a.post) < raw(b.post);
    });
    {
      std::unordered_set<PostId> chains;
      std::vector<Candidate> unique;
      for (const auto& c : cands) {
        if (chains.insert(c.chain).second) unique.push_back(c);
      }
      cands = std::move(unique);
    }

    while (cands.size() >= options.min_count) {
      std::size_t best_start = 0;
      std::size_t best_len = 0;
      std::size_t j = 0;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        j = std::max(j, i);
        while (j + 1 < cands.size() && cands[j + 1].at - cands[i].at <= options.window) ++j;
        if (j - i + 1 > best_len) {
          best_len = j - i + 1;
          best_start = i;
        }
      }
      if (best_len < options.min_count) break;
      const auto first = cands.begin() + static_cast<std::ptrdiff_t>(best_start);
      const auto last = first + static_cast<std::ptrdiff_t>(best_len);
      std::unordered_set<UserId> users;
      for (auto it = first; it != last; ++it) users.insert(it->user);
      if (users.size() >= 2) {
        SweepEvent ev;
        ev.pattern = pattern;
        ev.window_start = first->at;
        ev.window_end = (last - 1)->at;
        ev.min_post_age = options.min_age;
        for (auto it = first; it != last; ++it) {
          ev.member_post_ids.push_back(it->post);
          claimed.insert(it->post);
        }
        events.push_back(std::move(ev));
      }
      cands.erase(first, last);
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const SweepEvent& a, const SweepEvent& b) {
    return a.window_start < b.window_start;
  });
  return events;
}

std::string sweeps_to_json(const std::vector<SweepEvent>& events) {
  Json j = Json::array();
  for (const auto& e : events) {
    Json members = Json::array();
    for (auto id : e.member_post_ids) members.push_back(raw(id));
    j.push_back({{"pattern", e.pattern},
                 {"window_start", e.window_start},
                 {"window_end", e.window_end},
                 {"min_post_age", e.min_post_age},
                 {"members", members.size()},
                 {"member_post_ids", members}});
  }
  return j.dump(2);
}

std::optional<Seconds> topic_response_time(const std::vector<Post>& topic_posts,
                                           const std::vector<DeletionRecord>& records,
                                           double heavy_fraction, Seconds window) {
  if (topic_posts.empty()) throw ValidationError("topic_posts must be nonempty");
  if (window <= 0) throw ValidationError("window must be > 0");
  std::unordered_set<PostId> ids;
  std::vector<Timestamp> created;
  for (const auto& p : topic_posts) {
    ids.insert(p.post_id);
    created.push_back(p.created_at);
  }
  std::sort(created.begin(), created.end());
  std::vector<Timestamp> deleted;
  for (const auto& r : records) {
    if (ids.count(r.post_id) != 0) deleted.push_back(r.detected_at);
  }
  std::sort(deleted.begin(), deleted.end());
  std::size_t end = 0;
  for (std::size_t i = 0; i < deleted.size(); ++i) {
    const Timestamp close = deleted[i] + window;
    end = std::max(end, i);
    while (end < deleted.size() && deleted[end] < close) ++end;
    const auto in_window = static_cast<double>(end - i);
    const auto seen = static_cast<double>(
        std::lower_bound(created.begin(), created.end(), close) - created.begin());
    if (seen > 0.0 && in_window >= heavy_fraction * seen) return deleted[i] - created.front();
  }
  return std::nullopt;
}

// ---- CSV -------------------------------------------------------------------

std::string histogram_csv(const HistogramReport& report) {
  std::ostringstream out;
  out << "bin_index,bin_start_min,bin_end_min,count,cumulative_fraction\n";
  const auto& h = report.histogram;
  std::uint64_t running = 0;
  for (const auto& [bin, count] : h.counts) {
    running += count;
    out << bin << ',' << format_number(static_cast<double>(bin) * h.bin_width) << ','
        << format_number(static_cast<double>(bin + 1) * h.bin_width) << ',' << count << ','
        << format_number(static_cast<double>(running) / static_cast<double>(h.total)) << '\n';
  }
  return out.str();
}

std::string cohorts_csv(const std::vector<Cohort>& cohorts) {
  std::ostringstream out;
  out << "deletion_count,users,q25_min,median_min,q75_min\n";
  for (const auto& c : cohorts) {
    out << c.deletion_count << ',' << c.users << ',' << format_number(c.q25) << ','
        << format_number(c.median) << ',' << format_number(c.q75) << '\n';
  }
  return out.str();
}

std::string sync_csv(const SyncReport& report) {
  std::ostringstream out;
  out << "bin_index,stddev_start_min,stddev_end_min,chains,fraction_below_5min\n";
  const std::string fraction =
      report.fraction_below_5min ? format_number(*report.fraction_below_5min) : "";
  for (const auto& [bin, count] : report.bins) {
    out << bin << ',' << format_number(static_cast<double>(bin) * report.bin_width) << ','
        << format_number(static_cast<double>(bin + 1) * report.bin_width) << ',' << count << ','
        << fraction << '\n';
  }
  return out.str();
}

std::string diurnal_counts_csv(const DiurnalReport& report) {
  std::ostringstream out;
  out << "hour,deletions\n";
  const auto total = std::accumulate(report.counts.begin(), report.counts.end(), std::uint64_t{0});
  if (total == 0) return out.str();
  for (std::size_t h = 0; h < 24; ++h) out << h << ',' << report.counts[h] << '\n';
  return out.str();
}

std::string diurnal_lifetime_csv(const DiurnalReport& report) {
  std::ostringstream out;
  out << "hour,median_lifetime_min,deletions\n";
  const auto total = std::accumulate(report.counts.begin(), report.counts.end(), std::uint64_t{0});
  if (total == 0) return out.str();
  for (std::size_t h = 0; h < 24; ++h) {
    out << h << ','
        << (report.median_lifetime[h] ? format_number(*report.median_lifetime[h]) : std::string())
        << ',' << report.counts[h] << '\n';
  }
  return out.str();
}

}  // namespace velocity::analytics
