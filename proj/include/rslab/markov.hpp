#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rslab/common.hpp"
#include "rslab/schedule.hpp"

namespace rslab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Uniforms available to one kernel transition (some samplers need two).
struct StepDraws {
  double a = 0.0;
  double b = 0.0;
};

// w-parameterized finite Markov kernel. kernel_fn(w) must return a
// row-stochastic |Y| x |Y| matrix for every queried w. An optional structured
// sampler lets composite kernels (e.g. MDP-derived ones) consume their
// natural per-step uniforms; the default samples the row by inverse CDF on a
// single uniform.
struct ParamKernel {
  int n_states = 0;
  int dim = 0;  // parameter dimension
  std::function<Matrix(const Vector&)> kernel_fn;
  std::function<int(const Vector&, int, const StepDraws&)> sampler;  // optional

  Matrix matrix(const Vector& w) const;
  static ParamKernel constant(Matrix p, int dim);
  static ParamKernel from_table_file(const std::string& file);
};

// Geometric mixing envelope sup-TV(n) <= c_mix * tau_rate^n.
struct MixingProfile {
  double c_mix = 1.0;
  double tau_rate = 0.0;
};

// Parameter-to-increment map H(w, y) with its Lipschitz/boundedness constant.
struct UpdateFn {
  int dim = 0;
  std::function<Vector(const Vector&, int)> h_fn;
  double lip_h = 1.0;
};

// Structure checks used as preconditions by several operations.
void check_row_stochastic(const Matrix& p, double tol = 1e-12);
bool is_irreducible(const Matrix& p);
int chain_period(const Matrix& p);  // valid for irreducible chains

// Unique stationary distribution of an irreducible aperiodic chain, by dense
// linear solve with a power-iteration fallback; residual ||dP - d||_1 <= 1e-10.
Vector stationary_distribution(const Matrix& p);

// s(n) = max_y sum_{y'} |P^n(y,y') - d(y')| for n = 0..n_max (unhalved sum).
std::vector<double> total_variation_profile(const ParamKernel& kernel, const Vector& w, int n_max);
std::vector<double> total_variation_profile(const Matrix& p, int n_max);

// Least-squares fit of tau_rate on log s(n) over the positive entries, then
// c_mix raised until the envelope dominates the measured profile pointwise.
MixingProfile fit_mixing_profile(const std::vector<double>& tv_profile);

// min{n >= 0 : c_mix * tau_rate^n <= alpha}. Uses the same bound predicate a
// brute-force scan would.
double mixing_bound(const MixingProfile& profile, std::int64_t n);
std::int64_t tau_alpha(const MixingProfile& profile, double alpha);

int sample_step(const ParamKernel& kernel, const Vector& w, int y, const StepDraws& draws);
int sample_row(const Matrix& p, int y, double u);  // inverse-CDF helper

// h(w) = sum_y d_{Y,w}(y) H(w, y), exact from the stationary distribution.
Vector expected_update(const ParamKernel& kernel, const UpdateFn& h, const Vector& w);

// ||P_{w1} - P_{w2}||_2 * (1 + ||w1|| + ||w2||) / ||w1 - w2|| (spectral norm).
double kernel_lipschitz_ratio(const ParamKernel& kernel, const Vector& w1, const Vector& w2);

// Auxiliary (frozen) chain: identical to the base chain through index t - tau,
// then evolving under the fixed matrix P_{w_{t-tau}} for `steps` further
// transitions, sharing the base chain's uniform draws index-for-index.
// base_states[k] = Y_k; base_w[k] = w_k. Returns Y~_0 .. Y~_{t-tau+steps}.
std::vector<int> simulate_auxiliary(const ParamKernel& kernel,
                                    const std::vector<int>& base_states,
                                    const std::vector<Vector>& base_w, std::int64_t t,
                                    std::int64_t tau, std::int64_t steps, std::uint64_t seed,
                                    std::uint64_t path_id = 0);

struct DriftProbe {
  Vector w;
  double inner = 0.0;  // <w, h(w)>
};

struct DriftScanReport {
  double c1_hat = 0.0;
  double c2_hat = 0.0;
  std::vector<DriftProbe> violations;  // empty when a fit with c1 > 0 exists
};

// Probes <w, h(w)> on deterministic low-discrepancy sphere points and fits
// the tightest envelope <w,h(w)> <= -C1 ||w||^2 + C2 with C1 > 0 by a
// two-variable linear program; c1_hat = 0 flags an empirically infeasible fit.
DriftScanReport drift_scan(const ParamKernel& kernel, const UpdateFn& h,
                           const std::vector<double>& radii, int directions_per_radius);

// Deterministic low-discrepancy points on the unit sphere in R^dim.
std::vector<Vector> sphere_probes(int dim, int count);

// Inverse standard-normal CDF (Acklam's rational approximation).
double standard_normal_quantile(double p);

}  // namespace rslab
