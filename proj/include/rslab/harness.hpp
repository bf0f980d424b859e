#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rslab/analysis.hpp"
#include "rslab/processes.hpp"
#include "rslab/rl.hpp"
#include "rslab/schedule.hpp"

namespace rslab {

enum class ExperimentKind { RsSpecial, Example1, RsGeneral, Skeleton, LinearQ, SaGeneric, Analyze };

std::string to_string(ExperimentKind k);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::LR1;
  double c_alpha = 1.0;
  double nu = 0.8;
  std::vector<double> table;
  Schedule build() const;
};

struct RegimeConfig {
  std::optional<double> nu1;
  std::optional<double> nu2;
};

struct SeqConfig {
  std::string kind = "power_law";  // power_law | schedule | table
  double c = 1.0, p = 0.75, offset = 1.0;
  std::vector<double> table;
  StepSeq build(const ScheduleConfig& sched) const;
};

struct ProcessConfig {
  double alpha = 1.0;
  double xi = 1.0;
  std::optional<double> growth_b;  // defaults to alpha + xi + sigma
  double sigma = 0.0;
  std::string noise = "deterministic";  // deterministic | bounded_multiplicative | example1
  double z0 = 0.0;
  SeqConfig t_seq;
};

struct RsGeneralConfig {
  SeqConfig a_seq{.kind = "power_law", .c = 1.0, .p = 2.0, .offset = 1.0};
  SeqConfig b_seq{.kind = "power_law", .c = 1.0, .p = 0.75, .offset = 1.0};
  SeqConfig c_seq{.kind = "power_law", .c = 1.0, .p = 0.9, .offset = 1.0};
  double threshold_b = 2.0;
  bool require_divergent_c = true;
  double z0 = 0.0;
};

struct MdpConfig {
  std::string builtin = "random";  // random | baird | (empty when file given)
  std::string file;
  int n_states = 5;
  int n_actions = 2;
  double gamma = 0.9;
  std::uint64_t gen_seed = 7;
  std::string features = "random";  // random | one_hot | baird | file
  int feature_dim = 3;
  std::uint64_t feature_seed = 11;
  double feature_scale = 0.8;
};

struct AnalysisConfig {
  double rate_eta = 0.5;
  double rate_tol = 0.0;  // 0: calibrate from the training block
  std::vector<double> delta_grid{0.1};
  int envelope_k = 1;
  double envelope_b_cap = 1.0;
  std::vector<double> moments{1.0, 2.0};
  double window_fraction = 0.5;
  double dist_hi = 1.0;  // interval [0, hi] for distance series
  std::vector<double> q_grid{0.05, 0.25, 0.5, 0.75, 0.95};
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::RsSpecial;
  ScheduleConfig schedule;
  RegimeConfig regime;
  ProcessConfig process;
  RsGeneralConfig rs_general;
  MdpConfig mdp;
  PolicyConfig policy{0.1, 1.0};
  std::int64_t horizon = 100000;
  std::int64_t paths = 100;
  std::uint64_t seed = 20250801;
  int threads = 0;  // 0: hardware concurrency
  AnalysisConfig analysis;
  std::string out_dir = "out";

  std::string canonical_json() const;
  std::uint64_t fingerprint() const { return fnv1a(canonical_json()); }
};

// Parses and validates a JSON config; every semantic error names the
// offending field. All defaults are made explicit in the returned object.
ExperimentConfig validate_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

struct Verdict {
  std::string id;       // which acceptance check this instantiates
  bool pass = false;
  std::string detail;
};

struct OutputBundle {
  std::string dir;
  std::uint64_t config_fingerprint = 0;
  std::vector<Verdict> verdicts;
  std::vector<std::string> files;
  double wall_seconds = 0.0;
  bool partial = false;

  bool all_pass() const;
};

// Cooperative cancellation: checked between paths; a cancelled run drains
// cleanly and the bundle is marked partial.
extern volatile bool g_cancel_requested;

OutputBundle run_experiment(const ExperimentConfig& config);

// Map path indices over a worker pool; results land in a pre-sized vector so
// the outcome is identical for any worker count.
void parallel_paths(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body);

// Full acceptance suite; each entry prints as one pass/fail line.
struct CriterionResult {
  std::string id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<CriterionResult> run_acceptance(int threads = 0, const std::string& only = "");

}  // namespace rslab
