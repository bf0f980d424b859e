#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rslab/harness.hpp"

using namespace rslab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  try {
    validate_config(R"({"experiment":"rs_special","schedule":{"kind":"lr1","nu":0.5}})");
    CHECK(false);
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("schedule.nu") != std::string::npos);
    CHECK(msg.find("(2/3, 1]") != std::string::npos);
  }
  try {
    validate_config(R"({"experiment":"linear_q","policy":{"epsilon":1.0}})");
    CHECK(false);
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("policy.epsilon") != std::string::npos);
    CHECK(msg.find("(0, 1)") != std::string::npos);
  }
  CHECK_THROWS(validate_config("{not json"));
  CHECK_THROWS(validate_config(R"({"horizon":100})"));  // missing experiment kind
}

TEST_CASE("minimal config gets every default populated") {
  ExperimentConfig c = validate_config(R"({"experiment":"rs_special"})");
  CHECK(c.kind == ExperimentKind::RsSpecial);
  CHECK(c.schedule.kind == ScheduleKind::LR1);
  CHECK(c.horizon == 100000);
  CHECK(c.paths == 100);
  CHECK(c.seed == 20250801ULL);
  CHECK(c.policy.epsilon == 0.1);
  CHECK(c.analysis.rate_eta == 0.5);
  CHECK(!c.out_dir.empty());
  // The canonical form re-validates to the same fingerprint.
  ExperimentConfig c2 = validate_config(c.canonical_json());
  CHECK(c2.fingerprint() == c.fingerprint());
}

TEST_CASE("run_experiment reproduces byte-identical csv output") {
  const std::string cfg_text = R"({
    "experiment": "rs_special",
    "process": {"alpha": 1.0, "xi": 1.0, "sigma": 0.5, "noise": "bounded_multiplicative",
                 "t_seq": {"kind": "power_law", "c": 1.0, "p": 0.75, "offset": 1.0}},
    "horizon": 100000,
    "paths": 40,
    "seed": 99,
    "out": "bundle_a"
  })";
  ExperimentConfig a = validate_config(cfg_text);
  OutputBundle ba = run_experiment(a);
  CHECK(ba.all_pass());

  ExperimentConfig b = a;
  b.out_dir = "bundle_b";
  b.threads = 1;  // different worker count must not change any number
  OutputBundle bb = run_experiment(b);

  for (const auto& name : ba.files) {
    CHECK(slurp("bundle_a/" + name) == slurp("bundle_b/" + name));
  }
  CHECK(std::filesystem::exists("bundle_a/manifest.json"));
  CHECK(std::filesystem::exists("bundle_a/summary.json"));
  std::filesystem::remove_all("bundle_a");
  std::filesystem::remove_all("bundle_b");
}

TEST_CASE("skeleton experiment bundle") {
  ExperimentConfig c = validate_config(R"({
    "experiment": "skeleton",
    "schedule": {"kind": "lr2", "c_alpha": 2.0, "nu": 0.5},
    "horizon": 100000,
    "out": "bundle_skel"
  })");
  OutputBundle b = run_experiment(c);
  CHECK(b.all_pass());
  CHECK(std::filesystem::exists("bundle_skel/skeleton.csv"));
  std::filesystem::remove_all("bundle_skel");
}

TEST_CASE("example1 experiment reports divergence statistics") {
  ExperimentConfig c = validate_config(R"({
    "experiment": "example1",
    "horizon": 20000,
    "paths": 150,
    "seed": 5,
    "out": "bundle_eg"
  })");
  OutputBundle b = run_experiment(c);
  bool found = false;
  for (const auto& v : b.verdicts)
    if (v.id == "example1_divergence") {
      found = true;
      CHECK(v.pass);
    }
  CHECK(found);
  std::filesystem::remove_all("bundle_eg");
}

TEST_CASE("linear_q experiment bundle at desk scale") {
  ExperimentConfig c = validate_config(R"({
    "experiment": "linear_q",
    "schedule": {"kind": "lr1", "c_alpha": 1.0, "nu": 0.8},
    "mdp": {"builtin": "random", "n_states": 4, "n_actions": 2, "gamma": 0.9,
             "gen_seed": 3, "features": "random", "feature_dim": 3, "feature_seed": 4},
    "policy": {"epsilon": 0.1, "kappa0": 1.0},
    "horizon": 1000000,
    "paths": 4,
    "seed": 2,
    "out": "bundle_q"
  })");
  OutputBundle b = run_experiment(c);
  CHECK(b.all_pass());
  CHECK(std::filesystem::exists("bundle_q/w_norms.csv"));
  std::filesystem::remove_all("bundle_q");
}

TEST_CASE("analyze experiment produces rate and envelope verdicts") {
  ExperimentConfig c = validate_config(R"({
    "experiment": "analyze",
    "process": {"alpha": 1.0, "xi": 1.0, "sigma": 0.5, "noise": "bounded_multiplicative",
                 "t_seq": {"kind": "power_law", "c": 2.0, "p": 1.0, "offset": 3.0}},
    "horizon": 3000,
    "paths": 150,
    "seed": 12,
    "analysis": {"rate_eta": 0.5, "delta_grid": [0.1], "envelope_k": 1, "moments": [2.0]},
    "out": "bundle_an"
  })");
  OutputBundle b = run_experiment(c);
  std::size_t seen = 0;
  for (const auto& v : b.verdicts) {
    if (v.id == "rate_fit" || v.id == "rate_certificate" || v.id == "envelope_coverage") {
      ++seen;
      CHECK(v.pass);
    }
  }
  CHECK(seen == 3);
  std::filesystem::remove_all("bundle_an");
}
