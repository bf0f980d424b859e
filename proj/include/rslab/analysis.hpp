#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rslab/markov.hpp"
#include "rslab/rl.hpp"
#include "rslab/schedule.hpp"

namespace rslab {

// Distance from z to the interval [0, hi]: (z - hi)^+.
double dist_to_interval(double z, double hi);
// Distance from w to the centered ball of radius r: (||w|| - r)^+.
double dist_to_ball(const Vector& w, double r);

struct RateFit {
  double exponent = 0.0;   // decay exponent in d_n ~ n^{-exponent}
  double intercept = 0.0;  // log-scale intercept
  double r_squared = 0.0;
  std::size_t window_lo = 0, window_hi = 0;
  std::size_t zeros_excluded = 0;
};

// Least squares of log d_n = intercept - exponent * log n over the trailing
// window_fraction of indices; zeros are excluded and counted.
RateFit fit_rate(const std::vector<double>& series, double window_fraction = 0.5);

struct RateCertificate {
  bool pass = false;
  double sup_tail = 0.0;  // sup_{n >= tail_start} n^{eta/2} d_n
};

RateCertificate rate_certificate(const std::vector<double>& series, double eta,
                                 std::size_t tail_start, double tol);

// Evaluable concentration-bound shapes.
//   RS: bound on d^2:  b_prime/(n+n0) * [ln(b_cap/delta) + 1 + ln(n+n0)]^k
//   SA: bound on d:    scale * e(t) * [ln(1/delta) + offset + ln^{1-nu}(t+1)/(1-nu)]^k
//       with e(t) = exp(-ln^{1-nu}(t+1)/(1-nu))
struct Envelope {
  enum class Variant { RS, SA };
  Variant variant = Variant::RS;
  // RS fields
  double b_cap = 1.0;
  double b_prime = 1.0;
  double n0 = 1.0;
  // SA fields
  double scale = 1.0;
  double offset = 0.0;
  double nu = 0.5;
  // shared
  int k = 1;
};

double envelope_eval(const Envelope& env, std::int64_t n, double delta);

// Paths are provided lazily: path_fn(i) returns the i-th distance series
// (shared time grid 0..N), so big ensembles never need to be materialized.
using SeriesFn = std::function<std::vector<double>(std::size_t)>;

struct CoverageReport {
  double coverage = 0.0;
  std::optional<std::pair<std::size_t, std::size_t>> first_violation;  // (path, n)
};

// Fraction of paths whose whole trajectory sits under the envelope
// simultaneously for all recorded n (RS compares d^2, SA compares d).
CoverageReport envelope_coverage(const SeriesFn& path_fn, std::size_t n_paths,
                                 const Envelope& env, double delta);

// Fits the scale constant (b_prime for RS, scale for SA) as the smallest
// value achieving simultaneous coverage 1-delta on the training ensemble for
// each delta in the grid; structural constants are taken from `shape`.
Envelope calibrate_envelope(const SeriesFn& train_fn, std::size_t n_paths, Envelope shape,
                            const std::vector<double>& delta_grid);

// Per-time empirical mean of d^p across paths (deterministic tree reduction).
std::vector<double> lp_moment_series(const SeriesFn& path_fn, std::size_t n_paths, double p);

struct EnsembleStats {
  std::vector<std::int64_t> times;
  std::vector<double> q_grid;
  std::vector<std::vector<double>> quantiles;  // [time][q]
  std::vector<double> mean;                    // per time
  std::vector<double> moment_p;                // configured p
  double p = 1.0;
  std::size_t n_paths = 0;
  std::uint64_t seed_base = 0;
};

EnsembleStats compute_ensemble_stats(const SeriesFn& path_fn, std::size_t n_paths,
                                     const std::vector<std::int64_t>& times,
                                     const std::vector<double>& q_grid, double moment_p);

void write_ensemble_csv(const EnsembleStats& st, const std::string& file);

// Per-segment decomposition of the skeleton noise
//   s_m = sum_t alpha_t H(w_t, Y_{t+1}) - alpha_bar_m h(w_{t_m})
// into the iterate-drift part s1 (exact from the trajectory), the live/frozen
// chain gap s2 and the frozen-chain bias s4 (exact conditional expectations by
// matrix products along the realized parameter path), and the remainder s3,
// which keeps the decomposition exactly telescoping.
struct SegmentNoise {
  std::int64_t m = 0;
  double target = 0.0;       // T_m
  double w_norm = 0.0;       // ||w_{t_m}||
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;  // norms
  double r1 = 0.0, r2 = 0.0, r4 = 0.0;  // / (T_m^2 (||w|| + 1))
  double r3 = 0.0;                      // / (T_m   (||w|| + 1))
  double recon_err = 0.0;  // || s_m + alpha_bar h - (w_{t_{m+1}} - w_{t_m}) ||
};

std::vector<SegmentNoise> noise_decomposition(const SARun& run, const SkeletonTimescale& skeleton,
                                              const ParamKernel& kernel, const UpdateFn& update,
                                              const MixingProfile& profile,
                                              const Schedule& schedule);

void write_noise_csv(const std::vector<SegmentNoise>& rows, const std::string& file);

}  // namespace rslab
