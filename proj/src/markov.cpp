#include "rslab/markov.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

namespace rslab {

Matrix ParamKernel::matrix(const Vector& w) const {
  if (!kernel_fn) throw std::logic_error("kernel: kernel_fn not set");
  return kernel_fn(w);
}

ParamKernel ParamKernel::constant(Matrix p, int dim) {
  check_row_stochastic(p);
  ParamKernel k;
  k.n_states = static_cast<int>(p.rows());
  k.dim = dim;
  k.kernel_fn = [m = std::move(p)](const Vector&) { return m; };
  return k;
}

ParamKernel ParamKernel::from_table_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("kernel table: cannot open " + file);
  std::string key;
  int n = 0, d = 0;
  in >> key >> n;
  require(key == "states" && n > 0, "kernel table: expected 'states N' header");
  in >> key >> d;
  require(key == "dim" && d >= 0, "kernel table: expected 'dim D' header");
  Matrix p(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!(in >> p(i, j))) throw std::runtime_error("kernel table: truncated matrix in " + file);
  return constant(std::move(p), d);
}

void check_row_stochastic(const Matrix& p, double tol) {
  require(p.rows() == p.cols() && p.rows() > 0, "kernel: matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) < -tol)
        throw std::invalid_argument("kernel: negative entry at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
      row += p(i, j);
    }
    if (std::abs(row - 1.0) > tol)
      throw std::invalid_argument("kernel: row " + std::to_string(i) + " sums to " +
                                  format_full(row) + ", not 1");
  }
}

namespace {

std::vector<int> reachable(const Matrix& p, int start, bool transpose) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> seen(n, 0);
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v = 0; v < n; ++v) {
      double w = transpose ? p(v, u) : p(u, v);
      if (w > 0.0 && !seen[v]) {
        seen[v] = 1;
        q.push(v);
      }
    }
  }
  return seen;
}

}  // namespace

bool is_irreducible(const Matrix& p) {
  auto fwd = reachable(p, 0, false);
  auto bwd = reachable(p, 0, true);
  for (std::size_t i = 0; i < fwd.size(); ++i)
    if (!fwd[i] || !bwd[i]) return false;
  return true;
}

int chain_period(const Matrix& p) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> level(n, -1);
  std::queue<int> q;
  q.push(0);
  level[0] = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v = 0; v < n; ++v) {
      if (p(u, v) > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        q.push(v);
      }
    }
  }
  long long g = 0;
  for (int u = 0; u < n; ++u) {
    if (level[u] < 0) continue;
    for (int v = 0; v < n; ++v) {
      if (p(u, v) > 0.0 && level[v] >= 0) {
        g = std::gcd(g, static_cast<long long>(std::abs(level[u] + 1 - level[v])));
      }
    }
  }
  return static_cast<int>(g == 0 ? 1 : g);
}

Vector stationary_distribution(const Matrix& p) {
  check_row_stochastic(p);
  if (!is_irreducible(p))
    throw std::invalid_argument("stationary_distribution: chain is reducible");
  int period = chain_period(p);
  if (period != 1)
    throw std::invalid_argument("stationary_distribution: chain is periodic (period " +
                                std::to_string(period) + ")");
  const Eigen::Index n = p.rows();
  Matrix a = p.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector d = a.colPivHouseholderQr().solve(rhs);

  auto residual = [&p](const Vector& v) {
    Vector r = p.transpose() * v - v;
    return r.lpNorm<1>();
  };
  bool ok = d.minCoeff() > 0.0 && residual(d) <= 1e-10;
  if (!ok) {
    // Power-iteration fallback.
    Vector v = Vector::Constant(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 500000; ++it) {
      Vector next = p.transpose() * v;
      next /= next.sum();
      double delta = (next - v).lpNorm<1>();
      v = next;
      if (delta < 1e-15) break;
    }
    d = v;
  }
  d /= d.sum();
  if (d.minCoeff() <= 0.0 || residual(d) > 1e-10)
    throw std::runtime_error("stationary_distribution: solver residual " +
                             format_full(residual(d)) + " exceeds 1e-10");
  return d;
}

std::vector<double> total_variation_profile(const Matrix& p, int n_max) {
  require(n_max >= 0, "tv_profile: n_max must be non-negative");
  Vector d = stationary_distribution(p);
  const Eigen::Index n = p.rows();
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(n_max) + 1);
  Matrix pk = Matrix::Identity(n, n);
  for (int k = 0; k <= n_max; ++k) {
    double worst = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      double tv = 0.0;
      for (Eigen::Index yp = 0; yp < n; ++yp) tv += std::abs(pk(y, yp) - d(yp));
      worst = std::max(worst, tv);
    }
    s.push_back(worst);
    if (k < n_max) pk = pk * p;
  }
  return s;
}

std::vector<double> total_variation_profile(const ParamKernel& kernel, const Vector& w, int n_max) {
  return total_variation_profile(kernel.matrix(w), n_max);
}

MixingProfile fit_mixing_profile(const std::vector<double>& tv) {
  require(!tv.empty(), "fit_mixing_profile: empty profile");
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    require(tv[i] >= 0.0, "fit_mixing_profile: profile entries must be non-negative");
    if (tv[i] > 0.0) pos.push_back(i);
  }
  if (pos.empty()) return MixingProfile{1.0, 0.0};
  if (pos.size() == 1) return MixingProfile{tv[pos[0]], 0.0};

  // Least squares on log s(n) = log c + n log tau over positive entries.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i : pos) {
    double x = static_cast<double>(i);
    double y = std::log(tv[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(pos.size());
  double denom = m * sxx - sx * sx;
  double slope = denom != 0.0 ? (m * sxy - sx * sy) / denom : 0.0;
  double tau = std::exp(std::min(slope, 0.0));
  if (tau >= 1.0) tau = 1.0 - 1e-12;

  // Raise c until the envelope dominates pointwise.
  double c = 0.0;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    double geo = std::pow(tau, static_cast<double>(i));
    if (geo > 0.0) c = std::max(c, tv[i] / geo);
  }
  if (c <= 0.0) c = 1.0;
  return MixingProfile{c, tau};
}

double mixing_bound(const MixingProfile& profile, std::int64_t n) {
  return profile.c_mix * std::pow(profile.tau_rate, static_cast<double>(n));
}

std::int64_t tau_alpha(const MixingProfile& profile, double alpha) {
  require(alpha > 0.0, "tau_alpha: alpha must be positive");
  if (profile.tau_rate >= 1.0)
    throw std::invalid_argument("tau_alpha: non-mixing profile (tau_rate >= 1)");
  require(profile.tau_rate >= 0.0, "tau_alpha: tau_rate must be non-negative");
  if (profile.c_mix <= alpha) return 0;
  if (profile.tau_rate == 0.0) return 1;
  std::int64_t n = static_cast<std::int64_t>(
      std::ceil((std::log(alpha) - std::log(profile.c_mix)) / std::log(profile.tau_rate)));
  n = std::max<std::int64_t>(n, 0);
  while (n > 0 && mixing_bound(profile, n - 1) <= alpha) --n;
  while (mixing_bound(profile, n) > alpha) ++n;
  return n;
}

int sample_row(const Matrix& p, int y, double u) {
  const int n = static_cast<int>(p.cols());
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += p(y, j);
    if (u < acc) return j;
  }
  return n - 1;
}

int sample_step(const ParamKernel& kernel, const Vector& w, int y, const StepDraws& draws) {
  require(y >= 0 && y < kernel.n_states, "sample_step: invalid state index");
  if (kernel.sampler) return kernel.sampler(w, y, draws);
  return sample_row(kernel.matrix(w), y, draws.a);
}

Vector expected_update(const ParamKernel& kernel, const UpdateFn& h, const Vector& w) {
  Matrix p = kernel.matrix(w);
  Vector d = stationary_distribution(p);
  Vector out = Vector::Zero(h.dim);
  for (int y = 0; y < kernel.n_states; ++y) out += d(y) * h.h_fn(w, y);
  return out;
}

double kernel_lipschitz_ratio(const ParamKernel& kernel, const Vector& w1, const Vector& w2) {
  if (w1 == w2) throw std::invalid_argument("kernel_lipschitz_ratio: w1 and w2 must differ");
  Matrix diff = kernel.matrix(w1) - kernel.matrix(w2);
  Eigen::JacobiSVD<Matrix> svd(diff);
  double op = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  return op * (1.0 + w1.norm() + w2.norm()) / (w1 - w2).norm();
}

std::vector<int> simulate_auxiliary(const ParamKernel& kernel, const std::vector<int>& base_states,
                                    const std::vector<Vector>& base_w, std::int64_t t,
                                    std::int64_t tau, std::int64_t steps, std::uint64_t seed,
                                    std::uint64_t path_id) {
  if (tau > t) throw std::invalid_argument("simulate_auxiliary: tau must not exceed t");
  require(tau >= 0 && steps >= 0, "simulate_auxiliary: tau and steps must be non-negative");
  const std::int64_t freeze = t - tau;
  require(static_cast<std::int64_t>(base_states.size()) > freeze,
          "simulate_auxiliary: base path too short for the freeze index");
  require(static_cast<std::int64_t>(base_w.size()) > freeze,
          "simulate_auxiliary: parameter path too short for the freeze index");

  std::vector<int> aux(base_states.begin(), base_states.begin() + freeze + 1);
  const Vector w_frozen = base_w[static_cast<std::size_t>(freeze)];
  CounterRng rng(seed, path_id);
  int state = aux.back();
  for (std::int64_t j = freeze; j < freeze + steps; ++j) {
    StepDraws draws{rng.uniform(static_cast<std::uint64_t>(j), kSubSampleA),
                    rng.uniform(static_cast<std::uint64_t>(j), kSubSampleB)};
    state = sample_step(kernel, w_frozen, state, draws);
    aux.push_back(state);
  }
  return aux;
}

// Acklam's rational approximation.
double standard_normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p <= 0.0) p = 1e-15;
  if (p >= 1.0) p = 1.0 - 1e-15;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<Vector> sphere_probes(int dim, int count) {
  require(dim >= 1 && count >= 1, "sphere_probes: dim and count must be positive");
  // Additive-recurrence (Kronecker) sequence with the generalized golden ratio.
  double phi = 1.5;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (dim + 1.0));
  std::vector<double> alpha(dim);
  double inv = 1.0;
  for (int i = 0; i < dim; ++i) {
    inv /= phi;
    alpha[i] = inv - std::floor(inv);
  }
  std::vector<Vector> probes;
  probes.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) {
      double u = 0.5 + (k + 1.0) * alpha[i];
      u -= std::floor(u);
      v(i) = standard_normal_quantile(u);
    }
    double nrm = v.norm();
    if (nrm == 0.0) {
      v.setZero();
      v(0) = 1.0;
      nrm = 1.0;
    }
    probes.push_back(v / nrm);
  }
  return probes;
}

DriftScanReport drift_scan(const ParamKernel& kernel, const UpdateFn& h,
                           const std::vector<double>& radii, int directions_per_radius) {
  require(!radii.empty(), "drift_scan: radii must be non-empty");
  require(directions_per_radius >= 1, "drift_scan: need at least one direction per radius");
  {
    std::vector<double> sorted(radii);
    std::sort(sorted.begin(), sorted.end());
    require(sorted.front() > 0.0, "drift_scan: radii must be positive");
    require(sorted.front() < sorted.back(), "drift_scan: need at least two distinct radii");
  }

  std::vector<DriftProbe> probes;
  auto dirs = sphere_probes(h.dim, directions_per_radius);
  for (double r : radii) {
    for (const auto& u : dirs) {
      DriftProbe pr;
      pr.w = r * u;
      pr.inner = pr.w.dot(expected_update(kernel, h, pr.w));
      probes.push_back(std::move(pr));
    }
  }

  // Feasibility in (C1, C2): C2 >= g_i + C1 * r_i^2 for every probe, with
  // g_i = <w_i, h(w_i)>. Minimize total slack sum_i(-C1 r_i^2 + C2 - g_i)
  // subject to C1 >= 0; the minimum sits at a vertex of the upper envelope
  // of the lines C1 -> g_i + C1 r_i^2.
  struct Line {
    double slope, intercept;
    std::size_t probe;
  };
  std::vector<Line> lines;
  lines.reserve(probes.size());
  double slope_total = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    double s = probes[i].w.squaredNorm();
    lines.push_back(Line{s, probes[i].inner, i});
    slope_total += s;
  }
  std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) {
    return x.slope < y.slope || (x.slope == y.slope && x.intercept < y.intercept);
  });
  // One line per slope (the one with the largest intercept dominates).
  std::vector<Line> dedup;
  for (const Line& l : lines) {
    if (!dedup.empty() && dedup.back().slope == l.slope)
      dedup.back() = l;  // sorted so l has the larger intercept
    else
      dedup.push_back(l);
  }
  // Upper envelope (max of lines) left to right in C1 >= 0.
  std::vector<Line> hull;
  for (const Line& l : dedup) {
    while (hull.size() >= 2) {
      const Line& p = hull[hull.size() - 2];
      const Line& q = hull.back();
      // q never reaches the envelope if l overtakes p before q does.
      double x_pq = (p.intercept - q.intercept) / (q.slope - p.slope);
      double x_pl = (p.intercept - l.intercept) / (l.slope - p.slope);
      if (x_pl <= x_pq)
        hull.pop_back();
      else
        break;
    }
    if (hull.size() == 1 && l.intercept >= hull.back().intercept) hull.pop_back();
    hull.push_back(l);
  }

  auto env_at = [&dedup](double c1) {
    double best = -std::numeric_limits<double>::infinity();
    for (const Line& l : dedup) best = std::max(best, l.intercept + c1 * l.slope);
    return best;
  };
  const double n_probes = static_cast<double>(probes.size());
  auto objective = [&](double c1) { return n_probes * env_at(c1) - c1 * slope_total; };

  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    double x = (hull[i].intercept - hull[i + 1].intercept) / (hull[i + 1].slope - hull[i].slope);
    if (x >= 0.0 && std::isfinite(x)) candidates.push_back(x);
  }
  double best_c1 = 0.0;
  double best_obj = objective(0.0);
  for (double c1 : candidates) {
    double obj = objective(c1);
    if (obj < best_obj - 1e-12 || (std::abs(obj - best_obj) <= 1e-12 && c1 > best_c1)) {
      best_obj = obj;
      best_c1 = c1;
    }
  }

  DriftScanReport report;
  if (best_c1 <= 1e-9) {
    report.c1_hat = 0.0;
    report.c2_hat = env_at(0.0);
    std::size_t worst = 0;
    for (std::size_t i = 1; i < probes.size(); ++i)
      if (probes[i].inner > probes[worst].inner) worst = i;
    report.violations.push_back(probes[worst]);
    return report;
  }
  report.c1_hat = best_c1;
  report.c2_hat = env_at(best_c1);
  for (const auto& pr : probes) {
    if (pr.inner > -report.c1_hat * pr.w.squaredNorm() + report.c2_hat + 1e-9)
      report.violations.push_back(pr);
  }
  return report;
}

}  // namespace rslab
