#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rslab/analysis.hpp"
#include "rslab/processes.hpp"

using namespace rslab;

TEST_CASE("distance primitives") {
  CHECK(dist_to_interval(5.0, 3.0) == 2.0);
  CHECK(dist_to_interval(2.0, 3.0) == 0.0);
  Vector w = Vector::Zero(3);
  w(0) = 3.0;
  CHECK(dist_to_ball(w, 1.0) == 2.0);
  CHECK(dist_to_ball(Vector(0.5 * w), 2.0) == 0.0);

  CounterRng rng(1, 0);
  for (int rep = 0; rep < 500; ++rep) {
    double z1 = 10.0 * rng.uniform(static_cast<std::uint64_t>(rep), 0) - 3.0;
    double z2 = 10.0 * rng.uniform(static_cast<std::uint64_t>(rep), 1) - 3.0;
    double hi = 4.0 * rng.uniform(static_cast<std::uint64_t>(rep), 2);
    // positive parts are 1-Lipschitz
    CHECK(std::abs(dist_to_interval(std::max(z1, 0.0), hi) -
                   dist_to_interval(std::max(z2, 0.0), hi)) <=
          std::abs(z1 - z2) + 1e-15);
  }
  // max(||w||^2 - r^2, 0) == D^2 + 2 r D with D the ball distance
  for (int rep = 0; rep < 200; ++rep) {
    Vector v(3);
    for (int i = 0; i < 3; ++i)
      v(i) = 4.0 * rng.uniform(static_cast<std::uint64_t>(1000 + rep), static_cast<std::uint64_t>(i)) - 2.0;
    double r = 2.5 * rng.uniform(static_cast<std::uint64_t>(1000 + rep), 5);
    double d = dist_to_ball(v, r);
    CHECK(std::max(v.squaredNorm() - r * r, 0.0) ==
          doctest::Approx(d * d + 2.0 * r * d).epsilon(1e-10));
  }
}

TEST_CASE("fit_rate on synthetic power laws") {
  std::vector<double> series(5000, 0.0);
  for (std::size_t n = 1; n < series.size(); ++n)
    series[n] = std::pow(static_cast<double>(n), -0.5);
  RateFit f = fit_rate(series, 0.5);
  CHECK(f.exponent == doctest::Approx(0.5).epsilon(1e-6));

  std::vector<double> flat(1000, 0.7);
  RateFit f2 = fit_rate(flat, 0.5);
  CHECK(f2.exponent == doctest::Approx(0.0).epsilon(1e-6));

  std::vector<double> scaled(5000, 0.0);
  for (std::size_t n = 1; n < scaled.size(); ++n)
    scaled[n] = 3.0 / static_cast<double>(n);
  RateFit f3 = fit_rate(scaled, 0.5);
  CHECK(f3.exponent == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(f3.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-6));

  // 10% multiplicative noise keeps the fit within 0.05.
  CounterRng rng(77, 0);
  std::vector<double> noisy(20000, 0.0);
  for (std::size_t n = 1; n < noisy.size(); ++n)
    noisy[n] = std::pow(static_cast<double>(n), -0.6) *
               (0.9 + 0.2 * rng.uniform(static_cast<std::uint64_t>(n), 0));
  RateFit f4 = fit_rate(noisy, 0.5);
  CHECK(std::abs(f4.exponent - 0.6) <= 0.05);

  std::vector<double> zeros(100, 0.0);
  CHECK_THROWS(fit_rate(zeros, 0.5));
}

TEST_CASE("rate certificate") {
  std::vector<double> zero(100, 0.0);
  auto c0 = rate_certificate(zero, 0.5, 10, 1.0);
  CHECK(c0.pass);
  CHECK(c0.sup_tail == 0.0);

  std::vector<double> exact(20000, 0.0);
  for (std::size_t n = 1; n < exact.size(); ++n)
    exact[n] = 0.5 * std::pow(static_cast<double>(n), -0.25);
  auto c1 = rate_certificate(exact, 0.5, 100, 1.0);
  CHECK(c1.pass);
  CHECK(c1.sup_tail == doctest::Approx(0.5).epsilon(1e-9));

  std::vector<double> slow(200000, 0.0);
  for (std::size_t n = 1; n < slow.size(); ++n)
    slow[n] = std::pow(static_cast<double>(n), -0.125);
  auto c2 = rate_certificate(slow, 0.5, 100, 1.0);
  CHECK(!c2.pass);  // n^{eta/2} d_n = n^{1/8} grows past any fixed tolerance
}

TEST_CASE("envelope evaluation") {
  Envelope rs;
  rs.variant = Envelope::Variant::RS;
  rs.b_cap = 1.0;
  rs.b_prime = 1.0;
  rs.n0 = 1.0;
  rs.k = 1;
  CHECK(envelope_eval(rs, 0, std::exp(-1.0)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS(envelope_eval(rs, 0, 1.5));

  // Strictly increasing as delta shrinks, at fixed n.
  double prev = 0.0;
  for (double delta : {0.5, 0.2, 0.1, 0.01, 1e-4}) {
    double v = envelope_eval(rs, 50, delta);
    CHECK(v > prev);
    prev = v;
  }
  // k = 0 degenerates to pure 1/(n + n0) decay.
  Envelope bare = rs;
  bare.k = 0;
  bare.b_prime = 3.0;
  for (std::int64_t n : {0, 5, 50, 500})
    CHECK(envelope_eval(bare, n, 0.3) ==
          doctest::Approx(3.0 / (static_cast<double>(n) + 1.0)).epsilon(1e-12));
  // Algebraic identity: env * (n + n0) / bracket^k is constant in n.
  for (std::int64_t n : {0, 3, 17, 400}) {
    double bracket = std::log(rs.b_cap / 0.2) + 1.0 + std::log(static_cast<double>(n) + rs.n0);
    double v = envelope_eval(rs, n, 0.2) * (static_cast<double>(n) + rs.n0) / bracket;
    CHECK(v == doctest::Approx(rs.b_prime).epsilon(1e-12));
  }
}

namespace {

SeriesFn constant_series(double value, std::size_t len) {
  return [value, len](std::size_t) { return std::vector<double>(len, value); };
}

}  // namespace

TEST_CASE("coverage edge semantics") {
  Envelope rs;
  rs.variant = Envelope::Variant::RS;
  rs.b_cap = std::exp(1.0);
  rs.n0 = 3.0;
  rs.k = 1;
  rs.b_prime = 1e12;  // effectively vacuous
  auto rep = envelope_coverage(constant_series(0.5, 100), 150, rs, 0.1);
  CHECK(rep.coverage == 1.0);
  rs.b_prime = 0.0;  // impossible bound
  auto rep2 = envelope_coverage(constant_series(0.5, 100), 150, rs, 0.1);
  CHECK(rep2.coverage == 0.0);
  REQUIRE(rep2.first_violation.has_value());
}

TEST_CASE("calibration: homogeneity and failure modes") {
  Envelope shape;
  shape.variant = Envelope::Variant::RS;
  shape.b_cap = std::exp(1.0);
  shape.n0 = 3.0;
  shape.k = 1;

  // Deterministic ensemble: the fitted scale collapses to the single-path sup.
  auto det = constant_series(0.4, 200);
  Envelope fitted = calibrate_envelope(det, 50, shape, {0.1});
  auto rep = envelope_coverage(det, 50, fitted, 0.1);
  CHECK(rep.coverage == 1.0);

  // Doubling distances quadruples the fitted scale for d^2.
  auto doubled = constant_series(0.8, 200);
  Envelope fitted2 = calibrate_envelope(doubled, 50, shape, {0.1});
  CHECK(fitted2.b_prime == doctest::Approx(4.0 * fitted.b_prime).epsilon(1e-12));

  // Diverging paths defeat any finite envelope.
  auto exploding = [](std::size_t) {
    std::vector<double> v(400);
    double z = 1.0;
    for (auto& x : v) {
      x = z;
      z *= 4.0;  // d^2 overflows to inf inside the sup statistic
    }
    return v;
  };
  CHECK_THROWS(calibrate_envelope(exploding, 20, shape, {0.1}));
}

TEST_CASE("spiky counterexample defeats a fixed envelope as the horizon grows") {
  Envelope shape;
  shape.variant = Envelope::Variant::RS;
  shape.b_cap = std::exp(1.0);
  shape.n0 = 1.0;
  shape.k = 1;
  auto fit_at = [&](std::int64_t horizon) {
    auto fn = [horizon](std::size_t i) {
      Path p = simulate_example1(horizon, 5, i);
      std::vector<double> d(p.values.size());
      for (std::size_t n = 0; n < p.values.size(); ++n) d[n] = dist_to_interval(p.values[n], 1.0);
      return d;
    };
    return calibrate_envelope(fn, 60, shape, {0.1}).b_prime;
  };
  CHECK(fit_at(40000) > 2.0 * fit_at(600));
}

TEST_CASE("moment curves") {
  auto zeros = constant_series(0.0, 50);
  auto m = lp_moment_series(zeros, 10, 1.0);
  for (double v : m) CHECK(v == 0.0);

  // Power-mean ordering at every time index.
  CounterRng rng(31, 0);
  const std::size_t n_paths = 40, len = 30;
  std::vector<std::vector<double>> data(n_paths, std::vector<double>(len));
  for (std::size_t i = 0; i < n_paths; ++i)
    for (std::size_t n = 0; n < len; ++n)
      data[i][n] = 2.0 * rng.uniform(i * len + n, 0);
  SeriesFn fn = [&data](std::size_t i) { return data[i]; };
  auto m1 = lp_moment_series(fn, n_paths, 1.0);
  auto m2 = lp_moment_series(fn, n_paths, 2.0);
  auto m3 = lp_moment_series(fn, n_paths, 3.0);
  for (std::size_t n = 0; n < len; ++n) {
    CHECK(std::pow(m1[n], 1.0) <= std::pow(m2[n], 0.5) + 1e-12);
    CHECK(std::pow(m2[n], 0.5) <= std::pow(m3[n], 1.0 / 3.0) + 1e-12);
  }
}

TEST_CASE("second moment is dominated by the calibrated decay shape on the tail") {
  // Inverse-linear steps: m2(n) should track (1/(n+3)) (1 + ln(n+3))^k up to a constant.
  RSSpecialSpec spec;
  spec.alpha = 1.0;
  spec.xi = 1.0;
  spec.growth_b = 2.5;
  spec.t_seq = StepSeq::power_law(2.0, 1.0, 3.0);
  NoiseModel noise = NoiseModel::bounded_multiplicative(0.5);
  const std::int64_t horizon = 4000;
  auto fn = [&](std::size_t i) {
    Path p = simulate_rs_special(spec, noise, 0.0, horizon, 17, i);
    std::vector<double> d(p.values.size());
    for (std::size_t n = 0; n < p.values.size(); ++n) d[n] = dist_to_interval(p.values[n], 1.0);
    return d;
  };
  auto m2 = lp_moment_series(fn, 150, 2.0);
  auto shape = [](std::size_t n) {
    double u = static_cast<double>(n) + 3.0;
    return (1.0 + std::log(u)) / u;
  };
  double c_fit = 0.0;
  for (std::size_t n = horizon / 4; n < static_cast<std::size_t>(horizon) / 2; ++n)
    c_fit = std::max(c_fit, m2[n] / shape(n));
  for (std::size_t n = static_cast<std::size_t>(horizon) / 2; n <= static_cast<std::size_t>(horizon); ++n)
    CHECK(m2[n] <= 2.0 * c_fit * shape(n));
}

TEST_CASE("ensemble stats quantiles are monotone in q") {
  CounterRng rng(9, 0);
  const std::size_t n_paths = 64;
  SeriesFn fn = [&rng](std::size_t i) {
    std::vector<double> v(20);
    for (std::size_t n = 0; n < v.size(); ++n)
      v[n] = rng.uniform(i * 100 + n, 0);
    return v;
  };
  EnsembleStats st = compute_ensemble_stats(fn, n_paths, {0, 5, 19}, {0.1, 0.5, 0.9}, 2.0);
  for (std::size_t k = 0; k < st.times.size(); ++k) {
    CHECK(st.quantiles[k][0] <= st.quantiles[k][1]);
    CHECK(st.quantiles[k][1] <= st.quantiles[k][2]);
    CHECK(st.moment_p[k] >= 0.0);
  }
}

TEST_CASE("noise decomposition: w-independent H has no iterate-drift term") {
  // H depending only on y gives s1 = 0 exactly even though w moves.
  Matrix p(3, 3);
  p << 0.2, 0.5, 0.3, 0.4, 0.1, 0.5, 0.25, 0.25, 0.5;
  ParamKernel kernel = ParamKernel::constant(p, 2);
  UpdateFn update{2,
                  [](const Vector&, int y) {
                    Vector h(2);
                    h << 0.3 * (y - 1), -0.1 * y;
                    return h;
                  },
                  1.0};
  Schedule sched = Schedule::lr1(1.0, 0.8);
  SkeletonTimescale sk = build_skeleton(sched, select_regime(ScheduleKind::LR1, 0.8), 3000);
  SARun run = sa_run(kernel, update, sched, Vector::Zero(2), 0, 3000, 12, 0);
  MixingProfile prof = fit_mixing_profile(total_variation_profile(p, 40));
  auto rows = noise_decomposition(run, sk, kernel, update, prof, sched);
  REQUIRE(!rows.empty());
  for (const auto& r : rows) {
    CHECK(r.s1 == 0.0);
    CHECK(r.s2 == 0.0);  // constant kernel: live and frozen chains coincide
    CHECK(r.recon_err <= 1e-12);
  }
}
