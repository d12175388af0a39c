#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace cli = velocity::cli;

int main(int argc, char** argv) {
  CLI::App app{"velocity: censorship-velocity simulator, crawler and analyses"};
  app.require_subcommand(1);

  cli::GenerateConfig gen;
  auto* g = app.add_subcommand("generate", "Write the reference policy, scenario and crawl plan");
  g->add_option("--seed", gen.seed, "Workload seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--users", gen.users, "Number of users");
  g->add_option("--posts", gen.posts, "Number of submissions");
  g->add_option("--days", gen.days, "Virtual days covered");
  g->add_option("--tracked", gen.tracked, "Size of the tracked cohort");

  cli::SimulateConfig simc;
  std::int64_t until = -1;
  auto* s = app.add_subcommand("simulate", "Run the platform simulator over a scenario");
  s->add_option("--seed", simc.seed, "Platform seed");
  s->add_option("--policy", simc.policy, "Censor policy (JSON)")->required();
  s->add_option("--scenario", simc.scenario, "Scenario (JSONL)")->required();
  s->add_option("--out", simc.out, "Parent directory of the run directory")->required();
  std::string sim_plan;
  s->add_option("--plan", sim_plan, "Crawl plan to copy into the run (default: plan.json beside the scenario)");
  s->add_option("--until", until, "Virtual end time in seconds (default: last event + 6h)");

  cli::CrawlConfig crawlc;
  std::string plan;
  auto* c = app.add_subcommand("crawl", "Crawl a simulated run and log detected deletions");
  c->add_option("--run", crawlc.run, "Run directory written by simulate")->required();
  c->add_option("--plan", plan, "Crawl plan (JSON); default <run>/plan.json");

  cli::AnalyzeConfig an;
  std::string analyze_out;
  auto* a = app.add_subcommand("analyze", "Lifetime, cohort, synchrony, diurnal, regression and sweep analyses");
  a->add_option("--run", an.run, "Run directory")->required();
  a->add_option("--out", analyze_out, "Output directory; default <run>/analysis");
  a->add_option("--bin-width-min", an.bin_width_min, "Histogram bin width in minutes");
  a->add_option("--sweep-window-min", an.sweep_window_min, "Sweep window in minutes");
  a->add_option("--sweep-min-count", an.sweep_min_count, "Minimum posts per sweep");
  a->add_option("--sweep-min-age-h", an.sweep_min_age_hours, "Minimum post age at deletion, hours");
  a->add_option("--sweep-pattern", an.sweep_patterns, "Watch-list substring (repeatable)");
  a->add_option("--topic", an.topics, "Topic substring for response time (repeatable)");
  a->add_flag("--refit-check", an.refit_check, "Generate-and-refit check of the regression");
  a->add_option("--refit-records", an.refit_records, "Records for the refit check");

  cli::TopicsConfig tc;
  std::string topics_out;
  auto* t = app.add_subcommand("topics", "Daily trigram topics and ICA themes of deleted posts");
  t->add_option("--run", tc.run, "Run directory")->required();
  t->add_option("--out", topics_out, "Output directory; default <run>/topics");
  t->add_option("--ica-k", tc.ica_k, "Independent components");
  t->add_option("--cos-threshold", tc.cos_threshold, "Endpoint cosine acceptance threshold");
  t->add_option("--words", tc.words, "Words in the hourly matrix");
  t->add_option("--min-daily", tc.min_daily, "Trigram must occur more than this many times a day");
  t->add_option("--top-k", tc.top_k, "Trigrams kept per day");
  t->add_flag("--matrix-from-public", tc.matrix_from_public,
              "Build the hourly matrix from the public timeline instead of deleted posts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kValidation;
  }

  try {
    if (*g) return cli::cmd_generate(gen, std::cout);
    if (*s) {
      if (until >= 0) simc.until = until;
      if (!sim_plan.empty()) simc.plan = sim_plan;
      return cli::cmd_simulate(simc, std::cout);
    }
    if (*c) {
      if (!plan.empty()) crawlc.plan = plan;
      return cli::cmd_crawl(crawlc, std::cout);
    }
    if (*a) {
      if (!analyze_out.empty()) an.out = analyze_out;
      return cli::cmd_analyze(an, std::cout);
    }
    if (*t) {
      if (!topics_out.empty()) tc.out = topics_out;
      return cli::cmd_topics(tc, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
  return cli::kOk;
}
