#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <csignal>
#include <iostream>

#include "rslab/harness.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> paths;
  std::optional<std::int64_t> horizon;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config file (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", f.seed, "base seed override");
  cmd->add_option("--paths", f.paths, "path count override");
  cmd->add_option("--horizon", f.horizon, "horizon override");
  cmd->add_option("--out", f.out, "output directory override");
  cmd->add_option("--threads", f.threads, "worker count (0 = all cores)");
}

rslab::ExperimentConfig load_with_overrides(const CommonFlags& f) {
  rslab::ExperimentConfig cfg = rslab::load_config_file(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.paths) cfg.paths = *f.paths;
  if (f.horizon) cfg.horizon = *f.horizon;
  if (f.out) cfg.out_dir = *f.out;
  if (f.threads) cfg.threads = *f.threads;
  if (const char* env = std::getenv("RSLAB_OUT"); env && !f.out) cfg.out_dir = env;
  return cfg;
}

int run_bundle(const CommonFlags& f, std::initializer_list<rslab::ExperimentKind> allowed) {
  rslab::ExperimentConfig cfg = load_with_overrides(f);
  bool ok_kind = false;
  for (auto k : allowed) ok_kind = ok_kind || cfg.kind == k;
  if (!ok_kind) {
    std::cerr << "config kind '" << rslab::to_string(cfg.kind)
              << "' does not match this subcommand\n";
    return 2;
  }
  rslab::OutputBundle bundle = rslab::run_experiment(cfg);
  for (const auto& v : bundle.verdicts)
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << v.id << " — " << v.detail << "\n";
  std::cout << "bundle: " << bundle.dir << " (" << bundle.wall_seconds << " s"
            << (bundle.partial ? ", partial" : "") << ")\n";
  return bundle.all_pass() && !bundle.partial ? 0 : 1;
}

void on_sigint(int) { rslab::g_cancel_requested = true; }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  CLI::App app{"numerical laboratory for almost-supermartingale recursions, "
               "skeleton-timescale stochastic approximation, and linear Q-learning"};
  app.require_subcommand(1);

  CommonFlags sim_f, skel_f, q_f, an_f;
  auto* sim = app.add_subcommand("simulate", "run a scalar-process ensemble experiment");
  add_common(sim, sim_f);
  auto* skel = app.add_subcommand("skeleton", "build and check a skeleton timescale");
  add_common(skel, skel_f);
  auto* qlearn = app.add_subcommand("qlearn", "run a linear Q-learning ensemble");
  add_common(qlearn, q_f);
  auto* analyze = app.add_subcommand("analyze", "rate / envelope / moment analysis");
  add_common(analyze, an_f);

  std::string verify_only;
  int verify_threads = 0;
  auto* verify = app.add_subcommand("verify", "run the full acceptance suite");
  verify->add_option("--only", verify_only, "run a single named check");
  verify->add_option("--threads", verify_threads, "worker count (0 = all cores)");

  auto* corpus = app.add_subcommand("corpus", "list or generate built-in MDPs");
  std::string corpus_name, corpus_out;
  int corpus_states = 5, corpus_actions = 2, corpus_dim = 3;
  double corpus_gamma = 0.9;
  std::uint64_t corpus_seed = 7;
  corpus->add_option("--name", corpus_name, "builtin name: random | baird");
  corpus->add_option("--out", corpus_out, "write the instance to this file");
  corpus->add_option("--states", corpus_states, "random builtin: state count");
  corpus->add_option("--actions", corpus_actions, "random builtin: action count");
  corpus->add_option("--gamma", corpus_gamma, "random builtin: discount");
  corpus->add_option("--dim", corpus_dim, "random builtin: feature dimension");
  corpus->add_option("--seed", corpus_seed, "random builtin: generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed())
      return run_bundle(sim_f, {rslab::ExperimentKind::RsSpecial, rslab::ExperimentKind::Example1,
                                rslab::ExperimentKind::RsGeneral, rslab::ExperimentKind::SaGeneric});
    if (skel->parsed()) return run_bundle(skel_f, {rslab::ExperimentKind::Skeleton});
    if (qlearn->parsed()) return run_bundle(q_f, {rslab::ExperimentKind::LinearQ});
    if (analyze->parsed()) return run_bundle(an_f, {rslab::ExperimentKind::Analyze});

    if (verify->parsed()) {
      auto results = rslab::run_acceptance(verify_threads, verify_only);
      bool all = true;
      for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << " — " << r.name << " ("
                  << r.seconds << " s) " << r.detail << "\n";
        all = all && r.pass;
      }
      if (results.empty()) {
        std::cerr << "no matching check\n";
        return 2;
      }
      std::cout << (all ? "all checks passed\n" : "some checks FAILED\n");
      return all ? 0 : 1;
    }

    if (corpus->parsed()) {
      if (corpus_name.empty()) {
        std::cout << "built-in MDPs:\n"
                  << "  random  — seeded dense random MDP (all transitions positive)\n"
                  << "  baird   — 7-state star with two-block features, a classic\n"
                  << "            divergence stress test for off-policy bootstrapping\n";
        return 0;
      }
      rslab::MDP mdp;
      rslab::FeatureMap fm;
      if (corpus_name == "baird") {
        mdp = rslab::MDP::baird();
        fm = rslab::FeatureMap::baird();
      } else if (corpus_name == "random") {
        mdp = rslab::MDP::random(corpus_states, corpus_actions, corpus_gamma, corpus_seed);
        fm = rslab::FeatureMap::random(corpus_states, corpus_actions, corpus_dim,
                                       corpus_seed + 1, 0.8);
      } else {
        std::cerr << "unknown builtin '" << corpus_name << "'\n";
        return 2;
      }
      if (corpus_out.empty()) {
        std::cout << mdp.describe() << " " << fm.describe() << "\n";
      } else {
        mdp.save(corpus_out, fm);
        std::cout << "wrote " << corpus_out << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
