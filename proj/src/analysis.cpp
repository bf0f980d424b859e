#include "rslab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rslab {

double dist_to_interval(double z, double hi) {
  require(hi >= 0.0, "dist_to_interval: hi must be non-negative");
  return std::max(z - hi, 0.0);
}

double dist_to_ball(const Vector& w, double r) {
  require(r >= 0.0, "dist_to_ball: radius must be non-negative");
  return std::max(w.norm() - r, 0.0);
}

RateFit fit_rate(const std::vector<double>& series, double window_fraction) {
  require(window_fraction > 0.0 && window_fraction <= 1.0,
          "fit_rate: window_fraction must lie in (0, 1]");
  RateFit fit;
  const std::size_t n = series.size();
  require(n >= 3, "fit_rate: series too short");
  std::size_t lo = static_cast<std::size_t>(std::floor((1.0 - window_fraction) * n));
  lo = std::max<std::size_t>(lo, 1);  // log n undefined at n = 0
  fit.window_lo = lo;
  fit.window_hi = n;

  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  std::size_t m = 0;
  for (std::size_t i = lo; i < n; ++i) {
    if (!(series[i] > 0.0)) {
      ++fit.zeros_excluded;
      continue;
    }
    double x = std::log(static_cast<double>(i));
    double y = std::log(series[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
    ++m;
  }
  if (m < 3) throw std::invalid_argument("fit_rate: fewer than 3 usable (positive) points");
  const double dm = static_cast<double>(m);
  const double denom = dm * sxx - sx * sx;
  const double slope = denom != 0.0 ? (dm * sxy - sx * sy) / denom : 0.0;
  fit.exponent = -slope;
  fit.intercept = (sy - slope * sx) / dm;
  const double ss_tot = syy - sy * sy / dm;
  const double ss_res = ss_tot - slope * (sxy - sx * sy / dm);
  fit.r_squared = ss_tot > 1e-30 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
  return fit;
}

RateCertificate rate_certificate(const std::vector<double>& series, double eta,
                                 std::size_t tail_start, double tol) {
  require(eta > 0.0, "rate_certificate: eta must be positive");
  require(tail_start < series.size(), "rate_certificate: tail_start beyond series length");
  RateCertificate cert;
  for (std::size_t n = std::max<std::size_t>(tail_start, 1); n < series.size(); ++n) {
    double v = std::pow(static_cast<double>(n), eta / 2.0) * series[n];
    cert.sup_tail = std::max(cert.sup_tail, v);
  }
  cert.pass = cert.sup_tail <= tol;
  return cert;
}

double envelope_eval(const Envelope& env, std::int64_t n, double delta) {
  require(delta > 0.0 && delta < 1.0, "envelope_eval: delta must lie in (0, 1)");
  require(n >= 0, "envelope_eval: n must be non-negative");
  if (env.variant == Envelope::Variant::RS) {
    const double u = static_cast<double>(n) + env.n0;
    const double bracket = std::log(env.b_cap / delta) + 1.0 + std::log(u);
    return env.b_prime / u * std::pow(bracket, env.k);
  }
  const double one_minus = 1.0 - env.nu;
  require(one_minus > 0.0, "envelope_eval: SA variant needs nu in (0, 1)");
  const double lt = std::pow(std::log(static_cast<double>(n) + 1.0), one_minus) / one_minus;
  const double bracket = std::log(1.0 / delta) + env.offset + lt;
  return env.scale * std::exp(-lt) * std::pow(bracket, env.k);
}

namespace {

// Per-path sup of the envelope-normalized statistic; the path fits under the
// scaled envelope iff this sup <= scale constant.
double path_sup_statistic(const std::vector<double>& d, const Envelope& env, double delta,
                          std::size_t* argmax) {
  Envelope unit = env;
  if (env.variant == Envelope::Variant::RS)
    unit.b_prime = 1.0;
  else
    unit.scale = 1.0;
  double sup = 0.0;
  std::size_t arg = 0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    const double shape = envelope_eval(unit, static_cast<std::int64_t>(n), delta);
    const double stat = env.variant == Envelope::Variant::RS ? d[n] * d[n] : d[n];
    const double v = stat / shape;
    if (v > sup) {
      sup = v;
      arg = n;
    }
  }
  if (argmax) *argmax = arg;
  return sup;
}

}  // namespace

CoverageReport envelope_coverage(const SeriesFn& path_fn, std::size_t n_paths, const Envelope& env,
                                 double delta) {
  require(n_paths > 0, "envelope_coverage: need at least one path");
  const double limit = env.variant == Envelope::Variant::RS ? env.b_prime : env.scale;
  CoverageReport rep;
  std::size_t covered = 0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    std::size_t arg = 0;
    double sup = path_sup_statistic(path_fn(p), env, delta, &arg);
    if (sup <= limit) {
      ++covered;
    } else if (!rep.first_violation) {
      rep.first_violation = std::make_pair(p, arg);
    }
  }
  rep.coverage = static_cast<double>(covered) / static_cast<double>(n_paths);
  return rep;
}

Envelope calibrate_envelope(const SeriesFn& train_fn, std::size_t n_paths, Envelope shape,
                            const std::vector<double>& delta_grid) {
  require(n_paths > 0, "calibrate_envelope: need at least one training path");
  require(!delta_grid.empty(), "calibrate_envelope: delta grid must be non-empty");
  double best = 0.0;
  for (double delta : delta_grid) {
    require(delta > 0.0 && delta < 1.0, "calibrate_envelope: deltas must lie in (0, 1)");
    std::vector<double> sups(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p)
      sups[p] = path_sup_statistic(train_fn(p), shape, delta, nullptr);
    std::sort(sups.begin(), sups.end());
    // Smallest scale covering a 1-delta fraction of training paths.
    std::size_t idx = static_cast<std::size_t>(
        std::ceil((1.0 - delta) * static_cast<double>(n_paths)));
    idx = std::min(std::max<std::size_t>(idx, 1), n_paths) - 1;
    double fitted = sups[idx];
    if (!std::isfinite(fitted))
      throw std::runtime_error(
          "calibrate_envelope: no finite scale achieves coverage (diverging paths)");
    best = std::max(best, fitted);
  }
  if (shape.variant == Envelope::Variant::RS)
    shape.b_prime = best;
  else
    shape.scale = best;
  return shape;
}

std::vector<double> lp_moment_series(const SeriesFn& path_fn, std::size_t n_paths, double p) {
  require(p >= 1.0, "lp_moment_series: p must be >= 1");
  require(n_paths > 0, "lp_moment_series: need at least one path");
  std::vector<std::vector<double>> per_path(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) per_path[i] = path_fn(i);
  const std::size_t len = per_path[0].size();
  std::vector<double> out(len, 0.0);
  std::vector<double> column(n_paths);
  for (std::size_t n = 0; n < len; ++n) {
    for (std::size_t i = 0; i < n_paths; ++i) column[i] = std::pow(per_path[i][n], p);
    out[n] = tree_sum(column) / static_cast<double>(n_paths);
  }
  return out;
}

EnsembleStats compute_ensemble_stats(const SeriesFn& path_fn, std::size_t n_paths,
                                     const std::vector<std::int64_t>& times,
                                     const std::vector<double>& q_grid, double moment_p) {
  require(n_paths > 0, "ensemble_stats: need at least one path");
  EnsembleStats st;
  st.times = times;
  st.q_grid = q_grid;
  st.p = moment_p;
  st.n_paths = n_paths;
  std::vector<std::vector<double>> at_time(times.size(), std::vector<double>(n_paths));
  for (std::size_t i = 0; i < n_paths; ++i) {
    std::vector<double> series = path_fn(i);
    for (std::size_t k = 0; k < times.size(); ++k) {
      std::size_t idx = static_cast<std::size_t>(times[k]);
      require(idx < series.size(), "ensemble_stats: recorded time beyond series length");
      at_time[k][i] = series[idx];
    }
  }
  st.quantiles.resize(times.size());
  st.mean.resize(times.size());
  st.moment_p.resize(times.size());
  std::vector<double> tmp(n_paths);
  for (std::size_t k = 0; k < times.size(); ++k) {
    st.mean[k] = tree_sum(at_time[k]) / static_cast<double>(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) tmp[i] = std::pow(at_time[k][i], moment_p);
    st.moment_p[k] = tree_sum(tmp) / static_cast<double>(n_paths);
    std::vector<double> sorted(at_time[k]);
    std::sort(sorted.begin(), sorted.end());
    st.quantiles[k].resize(q_grid.size());
    for (std::size_t qi = 0; qi < q_grid.size(); ++qi) {
      double q = q_grid[qi];
      require(q >= 0.0 && q <= 1.0, "ensemble_stats: quantile levels must lie in [0, 1]");
      std::size_t idx = static_cast<std::size_t>(std::floor(q * (n_paths - 1)));
      st.quantiles[k][qi] = sorted[idx];
    }
  }
  return st;
}

void write_ensemble_csv(const EnsembleStats& st, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_ensemble_csv: cannot open " + file);
  out << "n,mean,moment_p";
  for (double q : st.q_grid) out << ",q" << q;
  out << "\n";
  for (std::size_t k = 0; k < st.times.size(); ++k) {
    out << st.times[k] << ',' << format_full(st.mean[k]) << ',' << format_full(st.moment_p[k]);
    for (std::size_t qi = 0; qi < st.q_grid.size(); ++qi)
      out << ',' << format_full(st.quantiles[k][qi]);
    out << "\n";
  }
}

std::vector<SegmentNoise> noise_decomposition(const SARun& run, const SkeletonTimescale& skeleton,
                                              const ParamKernel& kernel, const UpdateFn& update,
                                              const MixingProfile& profile,
                                              const Schedule& schedule) {
  require(kernel.n_states <= 1000,
          "noise_decomposition: |Y| too large for exact conditional expectations");
  require(!skeleton.realized.empty(), "noise_decomposition: empty skeleton");
  const std::int64_t need = skeleton.anchors.back();
  require(static_cast<std::int64_t>(run.w_at.size()) > need &&
              static_cast<std::int64_t>(run.y_states.size()) > need,
          "noise_decomposition: trajectory does not cover the skeleton horizon");

  const int ny = kernel.n_states;
  const int d = update.dim;

  // Precompute H(w_{t_m}, y) per segment lazily; kernels P_{w_t} are built per step.
  std::vector<SegmentNoise> rows;
  rows.reserve(skeleton.segments());
  for (std::size_t m = 0; m < skeleton.segments(); ++m) {
    const std::int64_t t_lo = skeleton.anchors[m];
    const std::int64_t t_hi = skeleton.anchors[m + 1];
    const Vector& w_anchor = run.w_at[static_cast<std::size_t>(t_lo)];
    const Vector h_bar = expected_update(kernel, update, w_anchor);

    std::vector<Vector> h_anchor(static_cast<std::size_t>(ny));
    for (int y = 0; y < ny; ++y) h_anchor[static_cast<std::size_t>(y)] = update.h_fn(w_anchor, y);

    Vector s_total = Vector::Zero(d);
    Vector s1 = Vector::Zero(d);
    Vector s2 = Vector::Zero(d);
    Vector s4 = Vector::Zero(d);

    for (std::int64_t t = t_lo; t < t_hi; ++t) {
      const double alpha = schedule.alpha_at(t);
      const int y_next = run.y_states[static_cast<std::size_t>(t + 1)];
      const Vector h_live = update.h_fn(run.w_at[static_cast<std::size_t>(t)], y_next);
      s_total += alpha * (h_live - h_bar);
      s1 += alpha * (h_live - h_anchor[static_cast<std::size_t>(y_next)]);

      // Freeze point of the per-summand auxiliary chain.
      const std::int64_t tau = tau_alpha(profile, alpha);
      const std::int64_t f = std::max<std::int64_t>(t - tau, 0);
      const Vector& w_frozen = run.w_at[static_cast<std::size_t>(f)];
      const Matrix p_frozen = kernel.matrix(w_frozen);

      // Conditional laws of Y_{t+1} from the state at the freeze point:
      // live along the realized parameter path, frozen under P_{w_f}.
      Eigen::RowVectorXd live = Eigen::RowVectorXd::Zero(ny);
      live(run.y_states[static_cast<std::size_t>(f)]) = 1.0;
      Eigen::RowVectorXd frozen = live;
      for (std::int64_t k = f; k <= t; ++k) {
        live = live * kernel.matrix(run.w_at[static_cast<std::size_t>(k)]);
        frozen = frozen * p_frozen;
      }
      Vector h_live_mean = Vector::Zero(d);
      Vector h_frozen_mean = Vector::Zero(d);
      for (int y = 0; y < ny; ++y) {
        h_live_mean += live(y) * h_anchor[static_cast<std::size_t>(y)];
        h_frozen_mean += frozen(y) * h_anchor[static_cast<std::size_t>(y)];
      }
      s2 += alpha * (h_live_mean - h_frozen_mean);
      s4 += alpha * (h_frozen_mean - h_bar);
    }

    const Vector s3 = s_total - s1 - s2 - s4;
    const double t_m = skeleton.targets[m];
    const double wn = w_anchor.norm();
    const double scale2 = t_m * t_m * (wn + 1.0);
    const double scale1 = t_m * (wn + 1.0);

    SegmentNoise row;
    row.m = static_cast<std::int64_t>(m);
    row.target = t_m;
    row.w_norm = wn;
    row.s1 = s1.norm();
    row.s2 = s2.norm();
    row.s3 = s3.norm();
    row.s4 = s4.norm();
    row.r1 = row.s1 / scale2;
    row.r2 = row.s2 / scale2;
    row.r4 = row.s4 / scale2;
    row.r3 = row.s3 / scale1;
    const Vector incr = run.w_at[static_cast<std::size_t>(t_hi)] - w_anchor;
    row.recon_err = (s_total + skeleton.realized[m] * h_bar - incr).norm();
    rows.push_back(row);
  }
  return rows;
}

void write_noise_csv(const std::vector<SegmentNoise>& rows, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_noise_csv: cannot open " + file);
  out << "m,T_m,w_norm,s1,s2,s3,s4,r1,r2,r3,r4,recon_err\n";
  for (const auto& r : rows) {
    out << r.m << ',' << format_full(r.target) << ',' << format_full(r.w_norm) << ','
        << format_full(r.s1) << ',' << format_full(r.s2) << ',' << format_full(r.s3) << ','
        << format_full(r.s4) << ',' << format_full(r.r1) << ',' << format_full(r.r2) << ','
        << format_full(r.r3) << ',' << format_full(r.r4) << ',' << format_full(r.recon_err)
        << "\n";
  }
}

}  // namespace rslab
