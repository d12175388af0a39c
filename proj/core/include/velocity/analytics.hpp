#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "velocity/domain.hpp"
#include "velocity/rng.hpp"

namespace velocity::analytics {

// ---- lifetime distribution -------------------------------------------------

struct LifetimeHistogram {
  double bin_width = 5.0;  // minutes
  std::map<std::int64_t, std::uint64_t> counts;
  std::uint64_t total = 0;
};

// Fractions of lifetimes <= the threshold; absent for empty input.
struct CumulativeFractions {
  std::optional<double> within_5min;
  std::optional<double> within_8min;
  std::optional<double> within_30min;
  std::optional<double> within_24h;
};

struct HistogramReport {
  LifetimeHistogram histogram;
  CumulativeFractions fractions;
};

// Bins are half-open: index = floor(lifetime / bin_width).
HistogramReport histogram(const std::vector<DeletionRecord>& records, double bin_width_min = 5.0);

// ---- cohorts ---------------------------------------------------------------

struct Cohort {
  std::uint64_t deletion_count = 0;  // deletions per user in this cohort
  std::uint64_t users = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

// Ordered by deletion_count.
std::vector<Cohort> cohort_median_lifetimes(const std::vector<DeletionRecord>& records);

// Linear-interpolation quantile (Hyndman-Fan type 7). `sorted` must be
// ascending and nonempty.
double quantile(const std::vector<double>& sorted, double q);

// ---- repost-chain synchrony -----------------------------------------------

struct ChainSync {
  PostId chain{};
  std::size_t size = 0;
  double stddev_seconds = 0.0;
};

struct SyncReport {
  double bin_width = 1.0;  // minutes of standard deviation
  std::vector<ChainSync> chains;  // chain id order
  std::map<std::int64_t, std::uint64_t> bins;
  std::optional<double> fraction_below_5min;
};

// Chains are SystemDeleted records sharing a chain key, size >= 2.
SyncReport repost_sync(const std::vector<DeletionRecord>& records, const std::vector<Post>& posts,
                       double bin_width_min = 1.0);

double population_stddev(const std::vector<double>& values);

// ---- time of day -----------------------------------------------------------

struct DiurnalReport {
  std::array<std::uint64_t, 24> counts{};
  std::array<std::optional<double>, 24> median_lifetime;
};

// Keyed by the virtual hour of detection, (t / 3600) mod 24.
DiurnalReport diurnal(const std::vector<DeletionRecord>& records);

// ---- negative binomial regression -----------------------------------------

class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

enum class Family { Regular, Child };

std::vector<std::string> feature_names(Family family);

struct LifetimeModel {
  double intercept = 0.0;
  std::map<std::string, double> coefficients;
  double dispersion = 1.0;  // theta in Var = mu + mu^2 / theta
  std::map<std::string, bool> significance;
  std::map<std::string, double> std_errors;
  std::map<std::string, double> p_values;
  std::vector<std::string> feature_order;
  double log_likelihood = 0.0;
  int iterations = 0;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, LifetimeModel last) : Error(what), last_(std::move(last)) {}
  const LifetimeModel& last_iterate() const { return last_; }

 private:
  LifetimeModel last_;
};

struct FitOptions {
  int max_iterations = 200;
  double tolerance = 1e-9;
  double significance_level = 1e-3;
};

// Design without the intercept column; counts are whole minutes.
struct Design {
  std::vector<std::string> names;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

// Joins records with their posts and authors. Regular uses original posts,
// Child uses reposts with features taken from the parent and its author.
// Records whose post, parent or author is unknown are skipped.
Design build_design(const std::vector<DeletionRecord>& records, const std::vector<Post>& posts,
                    const std::vector<User>& users, Family family);

LifetimeModel fit_nb2(const Design& design, const FitOptions& options = {});

LifetimeModel fit_lifetime_model(const std::vector<DeletionRecord>& records,
                                 const std::vector<Post>& posts, const std::vector<User>& users,
                                 Family family, const FitOptions& options = {});

// exp(intercept + sum coef * feature). Throws ValidationError naming a
// missing feature.
double predict_lifetime(const LifetimeModel& model, const std::map<std::string, double>& features);

// `xi` includes the intercept column.
double nb2_log_likelihood(const Eigen::MatrixXd& xi, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta, double theta);
// d/d(beta) followed by d/d(theta).
Eigen::VectorXd nb2_gradient(const Eigen::MatrixXd& xi, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& beta, double theta);

// Draws one NB2 count per design row from the model.
Eigen::VectorXd sample_nb2(const LifetimeModel& model, const Design& design, Rng& rng);

// Coefficients of the reference regular-post model.
LifetimeModel reference_regular_model();
LifetimeModel reference_child_model();

struct RefitCheck {
  LifetimeModel truth;
  LifetimeModel fitted;
  std::map<std::string, bool> within_tolerance;  // includes "intercept"
  bool passed = false;
};

// Generates `n` synthetic records from `truth`, refits, and compares:
// intercept within +-0.05 absolute, coefficients within 10% relative.
RefitCheck refit_check(const LifetimeModel& truth, std::size_t n, std::uint64_t seed,
                       double theta = 1.5);

std::string model_to_json(const LifetimeModel& model);

// ---- sweeps ----------------------------------------------------------------

struct SweepEvent {
  std::string pattern;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::vector<PostId> member_post_ids;
  Seconds min_post_age = 0;
};

struct SweepOptions {
  Seconds window = 5 * kMinute;
  std::size_t min_count = 10;
  Seconds min_age = kDay;
  // Empty: mine the most frequent trigrams of old deleted posts instead.
  std::vector<std::string> patterns;
  std::size_t mined_patterns = 20;
};

// SystemDeleted records only. One member per chain; a post joins at most one
// event. Within a pattern the densest window is taken first.
std::vector<SweepEvent> detect_sweeps(const std::vector<DeletionRecord>& records,
                                      const std::vector<Post>& posts, const SweepOptions& options = {});

std::string sweeps_to_json(const std::vector<SweepEvent>& events);

// ---- topic response --------------------------------------------------------

// Windows start at each deletion of a topic post. The first window whose
// deletion count reaches heavy_fraction of the topic posts created before the
// window ends marks the start of heavy deletion.
std::optional<Seconds> topic_response_time(const std::vector<Post>& topic_posts,
                                           const std::vector<DeletionRecord>& records,
                                           double heavy_fraction = 0.2, Seconds window = kHour);

// ---- CSV -------------------------------------------------------------------

std::string histogram_csv(const HistogramReport& report);
std::string cohorts_csv(const std::vector<Cohort>& cohorts);
std::string sync_csv(const SyncReport& report);
std::string diurnal_counts_csv(const DiurnalReport& report);
std::string diurnal_lifetime_csv(const DiurnalReport& report);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace velocity::analytics
