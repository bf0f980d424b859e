#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rslab/markov.hpp"
#include "rslab/schedule.hpp"

namespace rslab {

// Finite MDP with deterministic rewards r(s, a), transition tensor
// p(s'|s, a), discount gamma in [0, 1) and initial distribution p0.
struct MDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> reward;      // [s * A + a]
  std::vector<double> transition;  // [(s * A + a) * S + s']
  double gamma = 0.9;
  std::vector<double> p0;

  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
  const double* row(int s, int a) const {
    return transition.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states;
  }
  void validate() const;
  std::string describe() const;

  // Seeded generator with strictly positive transition rows.
  static MDP random(int n_states, int n_actions, double gamma, std::uint64_t seed);
  // Star-shaped hard instance for off-policy divergence demos.
  static MDP baird();

  static MDP load(const std::string& file);  // paired with a FeatureMap
  void save(const std::string& file, const struct FeatureMap& features) const;
};

struct FeatureMap {
  int dim = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> x;  // [(s * A + a) * dim + i]

  const double* at(int s, int a) const {
    return x.data() + (static_cast<std::size_t>(s) * n_actions + a) * dim;
  }
  static FeatureMap one_hot(int n_states, int n_actions);
  static FeatureMap random(int n_states, int n_actions, int dim, std::uint64_t seed,
                           double scale = 0.8);
  static FeatureMap baird();
  static FeatureMap load(const std::string& file, int* out_states = nullptr,
                         int* out_actions = nullptr);
  std::string describe() const;
};

struct PolicyConfig {
  double epsilon = 0.1;  // strictly inside (0, 1)
  double kappa0 = 1.0;   // positive
  void validate() const;
};

// Adaptive temperature kappa_0 / max(1, ||w||).
double kappa(const Vector& w, double kappa0);

// mu_w(.|s) = eps/|A| + (1-eps) softmax(kappa_w x(s,.)^T w); max-subtracted.
void behavior_policy(const Vector& w, int s, const PolicyConfig& cfg, const FeatureMap& features,
                     std::vector<double>& probs_out);

// Greedy value max_a x(s,a)^T w; ties broken by lowest action index.
double greedy_value(const Vector& w, int s, const FeatureMap& features, int* argmax = nullptr);

// w <- w + alpha (r + gamma max_a x(s',a)^T w - x(s,a)^T w) x(s,a); returns the TD error.
double linear_q_step(Vector& w, int s, int a, double r, int s_next, double alpha,
                     const FeatureMap& features, double gamma);

struct Transition {
  int s = 0, a = 0, s_next = 0;
  double r = 0.0;
};

struct RecordOptions {
  std::int64_t every = 1;          // snapshot w every k steps (0: none except final)
  bool keep_transitions = false;   // store the (s,a,r,s') stream
  std::vector<std::int64_t> snapshot_at;  // extra snapshot times (e.g. skeleton anchors)
};

struct LinearQRun {
  std::vector<std::int64_t> snapshot_times;
  std::vector<Vector> w_at;        // aligned with snapshot_times
  std::vector<Transition> transitions;
  std::vector<double> w_norm_running_max;  // recorded at snapshot times
  Vector w_final;
  double max_w_norm = 0.0;
  bool diverged = false;
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
  std::uint64_t schedule_fingerprint = 0;
};

LinearQRun run_linear_q(const MDP& mdp, const FeatureMap& features, const PolicyConfig& cfg,
                        const Schedule& schedule, std::int64_t horizon, std::uint64_t seed,
                        std::uint64_t path_id = 0, const RecordOptions& rec = {},
                        const Vector& w0 = Vector());  // empty: start at zero

// Embedding of the closed-loop update into the generic template: state space
// Y = {(s,a,s') : p(s'|s,a) > 0}, kernel P_w((s,a,s'),(s~,a~,s~')) =
// 1[s~ = s'] mu_w(a~|s~) p(s~'|s~,a~), and H(w,(s,a,s')) the TD update.
struct SAEmbedding {
  ParamKernel kernel;
  UpdateFn update;
  std::vector<std::array<int, 3>> y_space;  // index -> (s, a, s')
  std::vector<int> index;                   // flat (s*A+a)*S + s' -> y index or -1
  int n_states = 0, n_actions = 0;

  int index_of(int s, int a, int s_next) const;
  // Smallest y = (s, a, s0) with p(s0|s,a) > 0; starting point whose third
  // component is a given initial MDP state.
  int entry_state(int s0) const;
};

SAEmbedding mdp_to_sa(const MDP& mdp, const FeatureMap& features, const PolicyConfig& cfg);

// x(s,a)^T w for all pairs, row-major [s][a].
std::vector<double> q_values(const Vector& w, const FeatureMap& features);

// Generic driver w_{t+1} = w_t + alpha_t H(w_t, Y_{t+1}) with the shared
// draw discipline (same counters as run_linear_q for embedded kernels).
struct SARun {
  std::vector<int> y_states;   // Y_0 .. Y_horizon
  std::vector<Vector> w_at;    // w_0 .. w_horizon (full record)
  bool diverged = false;
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
};

SARun sa_run(const ParamKernel& kernel, const UpdateFn& update, const Schedule& schedule,
             const Vector& w0, int y0, std::int64_t horizon, std::uint64_t seed,
             std::uint64_t path_id = 0);

}  // namespace rslab
