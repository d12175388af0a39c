#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "velocity/analytics.hpp"
#include "velocity/crawler.hpp"
#include "velocity/platform.hpp"
#include "velocity/records.hpp"
#include "velocity/reference.hpp"
#include "velocity/storage.hpp"
#include "velocity/topics.hpp"

namespace velocity::cli {

using Json = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ValidationError("missing input '" + path.string() + "'");
}

// Wall-clock data is confined to this sidecar so every other output is a
// pure function of the inputs.
void write_meta(const fs::path& dir, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  Json meta = fs::exists(dir / kMetaFile) ? Json::parse(read_text(dir / kMetaFile)) : Json::object();
  meta[command] = {{"written_at", ts.str()}};
  write_text(dir / kMetaFile, meta.dump(2));
}

struct RunInfo {
  std::uint64_t seed = 0;
  Timestamp end = 0;
};

RunInfo read_run(const fs::path& run) {
  require_file(run / kRunFile);
  const Json j = Json::parse(read_text(run / kRunFile));
  return RunInfo{j.at("seed").get<std::uint64_t>(), j.at("end").get<Timestamp>()};
}

std::vector<Post> read_posts(const fs::path& path) {
  require_file(path);
  return store::read_all<Post>(path, post_from_json);
}

std::vector<DeletionRecord> read_deletions(const fs::path& path) {
  require_file(path);
  return store::read_all<DeletionRecord>(path, deletion_from_json);
}

std::string fraction_json(const std::optional<double>& v) {
  return v ? analytics::format_number(*v) : "null";
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw LockedError("output directory '" + dir.string() + "' is in use (remove '" +
                      path_.string() + "' if no other command is running)");
  }
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return kValidation;
  if (dynamic_cast<const ParseError*>(&e) != nullptr) return kValidation;
  if (dynamic_cast<const topics::RankDeficiency*>(&e) != nullptr) return kValidation;
  if (dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) return kValidation;
  return kRuntime;
}

int cmd_generate(const GenerateConfig& c, std::ostream& log) {
  reference::Options o;
  o.seed = c.seed;
  o.users = c.users;
  o.posts = c.posts;
  o.days = c.days;
  o.tracked = c.tracked;
  const auto bundle = reference::make(o);
  DirectoryLock lock(c.out);
  write_text(c.out / kPolicyCopy, sim::policy_to_json(bundle.policy));
  sim::save_scenario(c.out / kScenarioCopy, bundle.scenario);
  write_text(c.out / kPlanCopy, crawl::plan_to_json(bundle.plan));
  log << "generated " << bundle.scenario.size() << " scenario events in " << c.out.string() << '\n';
  return kOk;
}

int cmd_simulate(const SimulateConfig& c, std::ostream& log, fs::path* run_dir) {
  const auto policy = sim::load_policy(c.policy);
  const auto scenario = sim::load_scenario(c.scenario);
  const fs::path sibling = c.scenario.parent_path() / kPlanCopy;
  std::optional<crawl::CrawlPlan> plan;
  if (c.plan) {
    plan = crawl::load_plan(*c.plan);
  } else if (fs::is_regular_file(sibling)) {
    plan = crawl::load_plan(sibling);
  }
  Timestamp last = 0;
  for (const auto& ev : scenario) last = std::max(last, sim::event_time(ev));
  const Timestamp end = c.until.value_or(last + 6 * kHour);
  if (end < 0) throw ValidationError("--until must be >= 0");

  sim::Platform platform(policy, c.seed);
  platform.load_scenario(scenario);
  platform.tick(end);

  const fs::path dir = c.out / store::run_directory_name(c.seed, end);
  DirectoryLock lock(dir);
  write_text(dir / kPolicyCopy, sim::policy_to_json(policy));
  sim::save_scenario(dir / kScenarioCopy, scenario);
  if (plan) write_text(dir / kPlanCopy, crawl::plan_to_json(*plan));
  write_text(dir / kRunFile, Json{{"seed", c.seed}, {"end", end}}.dump(2));
  store::write_all(dir / store::kPostsFile, platform.all_posts(),
                   [](const Post& p) { return to_json_line(p); });
  store::write_all(dir / kUsersFile, platform.users(), [](const User& u) { return to_json_line(u); });
  const auto truth = platform.ground_truth();
  store::write_all(dir / store::kGroundTruthFile, truth,
                   [](const sim::GroundTruthEntry& g) { return sim::to_json_line(g); });
  write_meta(dir, "simulate");
  if (run_dir != nullptr) *run_dir = dir;
  log << "simulated " << platform.all_posts().size() << " posts, " << truth.size()
      << " deletions; run directory " << dir.string() << '\n';
  return kOk;
}

int cmd_crawl(const CrawlConfig& c, std::ostream& log) {
  const RunInfo info = read_run(c.run);
  const fs::path plan_path = c.plan.value_or(c.run / kPlanCopy);
  const auto plan = crawl::load_plan(plan_path);
  const auto policy = sim::load_policy(c.run / kPolicyCopy);
  const auto scenario = sim::load_scenario(c.run / kScenarioCopy);

  DirectoryLock lock(c.run);
  sim::Platform platform(policy, info.seed);
  platform.load_scenario(scenario);
  for (const auto& cred : plan.credentials) platform.register_credential(cred.credential.name, cred.per_minute);

  store::PostLog posts;
  posts.attach(c.run / kCrawledPostsFile);
  store::PostLog public_corpus;
  public_corpus.attach(c.run / store::kPublicFile);
  store::JsonlWriter deletions(c.run / store::kDeletionsFile);
  store::JsonlWriter closures(c.run / kClosuresFile);

  crawl::Crawler crawler(platform, plan, posts, {&deletions, &closures, &public_corpus});
  const auto report = crawler.run(info.end);
  platform.tick(info.end);
  posts.flush();
  public_corpus.flush();
  deletions.flush();
  closures.flush();
  if (plan_path != c.run / kPlanCopy) write_text(c.run / kPlanCopy, crawl::plan_to_json(plan));
  write_text(c.run / kCrawlReportFile, crawl::report_to_json(report));
  write_meta(c.run, "crawl");
  log << "crawled " << report.user_polls << " user polls, " << report.public_polls
      << " public polls; detected " << report.system_deletions << " system and "
      << report.general_deletions << " general deletions";
  if (report.deferrals > 0) log << "; " << report.deferrals << " requests deferred by rate limits";
  log << '\n';
  return kOk;
}

int cmd_analyze(const AnalyzeConfig& c, std::ostream& log) {
  read_run(c.run);
  const auto records = read_deletions(c.run / store::kDeletionsFile);
  const auto posts = read_posts(c.run / kCrawledPostsFile);
  require_file(c.run / kUsersFile);
  const auto users = store::read_all<User>(c.run / kUsersFile, user_from_json);
  const fs::path out = c.out.value_or(c.run / "analysis");
  DirectoryLock lock(out);

  std::vector<DeletionRecord> system;
  for (const auto& r : records) {
    if (r.kind == DeletionKind::SystemDeleted) system.push_back(r);
  }

  const auto hist = analytics::histogram(records, c.bin_width_min);
  const auto cohorts = analytics::cohort_median_lifetimes(records);
  const auto sync = analytics::repost_sync(records, posts);
  const auto day = analytics::diurnal(records);
  write_text(out / "fig1_hist.csv", analytics::histogram_csv(hist));
  write_text(out / "fig2_cohorts.csv", analytics::cohorts_csv(cohorts));
  write_text(out / "fig3_sync.csv", analytics::sync_csv(sync));
  write_text(out / "fig4_diurnal_counts.csv", analytics::diurnal_counts_csv(day));
  write_text(out / "fig5_diurnal_lifetime.csv", analytics::diurnal_lifetime_csv(day));

  Json report;
  report["records"] = records.size();
  report["system_deleted"] = system.size();
  report["general_deleted"] = records.size() - system.size();
  report["lifetime_fractions"] = {{"within_5min", optional_json(hist.fractions.within_5min)},
                                  {"within_8min", optional_json(hist.fractions.within_8min)},
                                  {"within_30min", optional_json(hist.fractions.within_30min)},
                                  {"within_24h", optional_json(hist.fractions.within_24h)}};
  report["chains"] = sync.chains.size();
  report["chain_fraction_below_5min"] = optional_json(sync.fraction_below_5min);

  Json models = Json::object();
  for (auto [family, name] : {std::pair{analytics::Family::Regular, "regular"},
                              std::pair{analytics::Family::Child, "child"}}) {
    const fs::path file = out / (std::string("model_") + name + ".json");
    try {
      const auto model = analytics::fit_lifetime_model(system, posts, users, family);
      write_text(file, analytics::model_to_json(model));
      models[name] = {{"file", file.filename().string()}};
    } catch (const analytics::NoConvergence& e) {
      write_text(file, analytics::model_to_json(e.last_iterate()));
      models[name] = {{"file", file.filename().string()}, {"error", e.what()}};
    } catch (const Error& e) {
      write_text(file, Json{{"error", e.what()}}.dump(2));
      models[name] = {{"error", e.what()}};
    }
  }
  report["models"] = models;

  analytics::SweepOptions so;
  so.window = static_cast<Seconds>(c.sweep_window_min * 60.0);
  so.min_count = c.sweep_min_count;
  so.min_age = static_cast<Seconds>(c.sweep_min_age_hours * 3600.0);
  so.patterns = c.sweep_patterns;
  const auto sweeps = analytics::detect_sweeps(records, posts, so);
  write_text(out / "sweeps.json", analytics::sweeps_to_json(sweeps));
  report["sweeps"] = sweeps.size();

  Json responses = Json::array();
  for (const auto& topic : c.topics) {
    std::vector<Post> topic_posts;
    for (const auto& p : posts) {
      if (p.text.find(topic) != std::string::npos) topic_posts.push_back(p);
    }
    Json entry{{"topic", topic}, {"posts", topic_posts.size()}};
    if (topic_posts.empty()) {
      entry["response_seconds"] = nullptr;
    } else {
      const auto rt = analytics::topic_response_time(topic_posts, records);
      entry["response_seconds"] = rt ? Json(*rt) : Json(nullptr);
    }
    responses.push_back(entry);
  }
  report["topic_response"] = responses;

  std::uint64_t binned = 0;
  for (const auto& [bin, n] : hist.histogram.counts) binned += n;
  std::uint64_t chain_binned = 0;
  for (const auto& [bin, n] : sync.bins) chain_binned += n;
  bool quartiles_ok = true;
  for (const auto& co : cohorts) quartiles_ok = quartiles_ok && co.q25 <= co.median && co.median <= co.q75;
  Json checks{{"histogram_conservation", binned == records.size()},
              {"quartile_order", quartiles_ok},
              {"sync_conservation", chain_binned == sync.chains.size()}};

  if (c.refit_check) {
    const auto refit = analytics::refit_check(analytics::reference_regular_model(), c.refit_records, 1);
    Json verdict{{"records", c.refit_records}, {"passed", refit.passed}};
    verdict["fitted"] = Json::parse(analytics::model_to_json(refit.fitted));
    verdict["within_tolerance"] = refit.within_tolerance;
    report["refit_check"] = verdict;
    checks["refit_check"] = refit.passed;
  }
  report["self_checks"] = checks;
  write_text(out / "analysis_report.json", report.dump(2));
  write_meta(c.run, "analyze");

  bool all_ok = true;
  for (const auto& [k, v] : checks.items()) all_ok = all_ok && v.get<bool>();
  log << "analyzed " << records.size() << " deletions (" << system.size() << " system); "
      << sweeps.size() << " sweep events; fraction within 30 min "
      << fraction_json(hist.fractions.within_30min) << "; outputs in " << out.string() << '\n';
  if (!all_ok) {
    log << "self-check failed; see analysis_report.json\n";
    return kSelfCheck;
  }
  return kOk;
}

int cmd_topics(const TopicsConfig& c, std::ostream& log) {
  const RunInfo info = read_run(c.run);
  const auto records = read_deletions(c.run / store::kDeletionsFile);
  const auto posts = read_posts(c.run / kCrawledPostsFile);
  const auto month = read_posts(c.run / store::kPublicFile);
  const fs::path out = c.out.value_or(c.run / "topics");

  std::unordered_set<PostId> deleted_ids;
  for (const auto& r : records) {
    if (r.kind == DeletionKind::SystemDeleted) deleted_ids.insert(r.post_id);
  }
  std::vector<Post> deleted;
  for (const auto& p : posts) {
    if (deleted_ids.count(p.post_id) != 0) deleted.push_back(p);
  }

  topics::TopicOptions opts;
  opts.min_daily = c.min_daily;
  opts.top_k = c.top_k;
  opts.cos_threshold = c.cos_threshold;
  if (month.empty()) {
    throw ValidationError("background corpus '" + (c.run / store::kPublicFile).string() +
                          "' is empty; IDF is undefined");
  }
  const auto days = topics::daily_topics(deleted, month, opts);
  DirectoryLock lock(out);
  write_text(out / "topics_daily.csv", topics::topics_csv(days));

  // Round-robin over phrases by score so every topic contributes words before
  // any topic contributes a second one.
  std::vector<const topics::TopicPhrase*> ranked;
  for (const auto& d : days) {
    for (const auto& p : d.phrases) {
      if (p.accepted) ranked.push_back(&p);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto* a, const auto* b) { return a->score > b->score; });
  std::vector<std::string> words;
  std::set<std::string> taken;
  for (std::size_t round = 0; words.size() < c.words; ++round) {
    bool any = false;
    for (const auto* p : ranked) {
      if (round >= p->members.size() || words.size() >= c.words) continue;
      any = true;
      auto word = topics::to_utf8(p->members[round]);
      if (taken.insert(word).second) words.push_back(std::move(word));
    }
    if (!any) break;
  }
  if (words.size() < c.ica_k) {
    throw topics::RankDeficiency("only " + std::to_string(words.size()) +
                                 " topic words are available for --ica-k " + std::to_string(c.ica_k) +
                                 "; lower --ica-k or relax --min-daily");
  }

  const auto& corpus = c.matrix_from_public ? month : deleted;
  Timestamp lo = corpus.front().created_at;
  Timestamp hi = lo;
  for (const auto& p : corpus) {
    lo = std::min(lo, p.created_at);
    hi = std::max(hi, p.created_at);
  }
  const Timestamp start = (lo / kDay) * kDay;
  const auto span_days = static_cast<std::size_t>(hi / kDay - lo / kDay + 1);
  const auto x = topics::hourly_matrix(words, start, span_days, corpus);
  topics::IcaResult result;
  try {
    result = topics::ica(x, c.ica_k, info.seed);
  } catch (const topics::RankDeficiency& e) {
    throw topics::RankDeficiency(std::string(e.what()) + "; lower --ica-k");
  }
  const auto themes = topics::theme_words(result, words);
  write_text(out / "ica_themes.json", topics::themes_to_json(themes, words, result));
  write_meta(c.run, "topics");

  std::size_t phrases = 0;
  for (const auto& d : days) phrases += d.phrases.size();
  log << "extracted " << phrases << " phrases over " << days.size() << " days from " << deleted.size()
      << " deleted posts; " << c.ica_k << " ICA components over " << words.size()
      << " words; outputs in " << out.string() << '\n';
  return kOk;
}

}  // namespace velocity::cli
