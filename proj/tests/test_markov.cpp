#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rslab/markov.hpp"
#include "rslab/rl.hpp"

using namespace rslab;

namespace {

Matrix two_state() {
  Matrix p(2, 2);
  p << 0.9, 0.1, 0.5, 0.5;
  return p;
}

}  // namespace

TEST_CASE("stationary distribution closed forms") {
  Matrix sym(2, 2);
  sym << 0.5, 0.5, 0.5, 0.5;
  Vector d = stationary_distribution(sym);
  CHECK(d(0) == doctest::Approx(0.5).epsilon(1e-12));

  Vector d2 = stationary_distribution(two_state());
  CHECK(d2(0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(d2(1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK((two_state().transpose() * d2 - d2).lpNorm<1>() <= 1e-10);
}

TEST_CASE("periodic and reducible chains are rejected by name") {
  Matrix flip(2, 2);
  flip << 0.0, 1.0, 1.0, 0.0;
  try {
    stationary_distribution(flip);
    CHECK(false);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("period") != std::string::npos);
  }
  Matrix split = Matrix::Identity(2, 2);
  try {
    stationary_distribution(split);
    CHECK(false);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("reducible") != std::string::npos);
  }
}

TEST_CASE("tv profile: n = 0 formula and geometric decay") {
  auto prof = total_variation_profile(two_state(), 40);
  Vector d = stationary_distribution(two_state());
  CHECK(prof[0] == doctest::Approx(2.0 * (1.0 - d.minCoeff())).epsilon(1e-12));
  for (std::size_t n = 0; n < prof.size(); ++n)
    CHECK(prof[n] == doctest::Approx(prof[0] * std::pow(0.4, static_cast<double>(n)))
                         .epsilon(1e-9));
  for (std::size_t n = 0; n + 1 < prof.size(); ++n) CHECK(prof[n + 1] <= prof[n] + 1e-14);
}

TEST_CASE("fit_mixing_profile") {
  std::vector<double> exact;
  for (int n = 0; n <= 20; ++n) exact.push_back(3.0 * std::pow(0.5, n));
  MixingProfile p = fit_mixing_profile(exact);
  CHECK(p.c_mix == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(p.tau_rate == doctest::Approx(0.5).epsilon(1e-6));

  // One-step mixing: all mass gone after a single transition.
  MixingProfile one = fit_mixing_profile({1.2, 0.0, 0.0});
  CHECK(one.tau_rate == 0.0);
  CHECK(one.c_mix >= 1.2);

  MixingProfile zero = fit_mixing_profile({0.0, 0.0});
  CHECK(zero.c_mix == 1.0);
  CHECK(zero.tau_rate == 0.0);

  // Dominance at every measured point, also under noisy profiles.
  std::vector<double> noisy;
  CounterRng rng(8, 0);
  for (int n = 0; n <= 30; ++n)
    noisy.push_back(2.0 * std::pow(0.7, n) * (0.6 + 0.8 * rng.uniform(n, 0)));
  MixingProfile f = fit_mixing_profile(noisy);
  for (std::size_t n = 0; n < noisy.size(); ++n)
    CHECK(noisy[n] <= mixing_bound(f, static_cast<std::int64_t>(n)) * (1 + 1e-12));
}

TEST_CASE("tau_alpha") {
  MixingProfile p{1.0, 0.5};
  CHECK(tau_alpha(p, 0.1) == 4);  // 0.0625 <= 0.1 < 0.125
  CHECK(tau_alpha(p, 1.0) == 0);
  CHECK(tau_alpha(MixingProfile{0.3, 0.5}, 0.4) == 0);
  CHECK_THROWS(tau_alpha(MixingProfile{1.0, 1.0}, 0.5));
  // Monotone: non-increasing in alpha.
  std::int64_t prev = std::numeric_limits<std::int64_t>::max();
  for (double a : {0.01, 0.05, 0.1, 0.3, 0.7, 1.5}) {
    std::int64_t t = tau_alpha(p, a);
    CHECK(t <= prev);
    prev = t;
  }
}

TEST_CASE("tau_alpha grows like O(log t) along a schedule") {
  MixingProfile p{2.0, 0.6};
  Schedule s = Schedule::lr1(1.0, 0.8);
  double last = 0.0;
  double worst = 0.0;
  for (double t = 100; t <= 1e6; t *= 1.6) {
    auto n = static_cast<std::int64_t>(t);
    double ratio = static_cast<double>(tau_alpha(p, s.alpha_at(n))) / std::log(t);
    worst = std::max(worst, ratio);
    last = ratio;
  }
  CHECK(worst <= 1.25 * last + 0.5);
}

TEST_CASE("sample_step point mass and frequencies") {
  Matrix p(3, 3);
  p << 0.0, 1.0, 0.0, 0.2, 0.3, 0.5, 1.0, 0.0, 0.0;
  ParamKernel k = ParamKernel::constant(p, 1);
  CounterRng rng(5, 0);
  for (int rep = 0; rep < 32; ++rep) {
    StepDraws d{rng.uniform(static_cast<std::uint64_t>(rep), 0), 0.0};
    CHECK(sample_step(k, Vector::Zero(1), 0, d) == 1);
  }
  // Reproducibility: identical draws, identical successor.
  StepDraws d0{0.42, 0.0};
  CHECK(sample_step(k, Vector::Zero(1), 1, d0) == sample_step(k, Vector::Zero(1), 1, d0));

  const std::int64_t reps = 1000000;
  std::array<std::int64_t, 3> counts{0, 0, 0};
  for (std::int64_t i = 0; i < reps; ++i) {
    StepDraws d{rng.uniform(static_cast<std::uint64_t>(i), 1), 0.0};
    counts[static_cast<std::size_t>(sample_step(k, Vector::Zero(1), 1, d))]++;
  }
  for (int j = 0; j < 3; ++j) {
    double expect = p(1, j) * reps;
    double sd = std::sqrt(p(1, j) * (1 - p(1, j)) * reps);
    CHECK(std::abs(counts[static_cast<std::size_t>(j)] - expect) <= 4.0 * sd);
  }
}

TEST_CASE("expected_update") {
  ParamKernel k = ParamKernel::constant(two_state(), 2);
  UpdateFn constant{2, [](const Vector&, int) { return Vector::Ones(2); }, 1.0};
  Vector h = expected_update(k, constant, Vector::Zero(2));
  CHECK(h(0) == doctest::Approx(1.0).epsilon(1e-12));

  UpdateFn basis{2, [](const Vector&, int y) {
                   Vector e = Vector::Zero(2);
                   e(y) = 1.0;
                   return e;
                 },
                 1.0};
  Vector d = expected_update(k, basis, Vector::Zero(2));
  CHECK(d(0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(d(1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  // Linearity of the expectation in H.
  UpdateFn sum{2, [&](const Vector& w, int y) {
                 return Vector(constant.h_fn(w, y) + basis.h_fn(w, y));
               },
               1.0};
  Vector both = expected_update(k, sum, Vector::Zero(2));
  CHECK(both(0) == doctest::Approx(h(0) + d(0)).epsilon(1e-12));
}

TEST_CASE("kernel lipschitz ratio") {
  ParamKernel constant = ParamKernel::constant(two_state(), 2);
  Vector w1 = Vector::Ones(2), w2 = -Vector::Ones(2);
  CHECK(kernel_lipschitz_ratio(constant, w1, w2) == 0.0);
  CHECK_THROWS(kernel_lipschitz_ratio(constant, w1, w1));

  MDP mdp = MDP::random(3, 2, 0.9, 2);
  FeatureMap fm = FeatureMap::random(3, 2, 2, 3, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, PolicyConfig{0.1, 1.0});
  auto dirs = sphere_probes(2, 50);
  double sup = 0.0;
  for (std::size_t i = 0; i + 1 < dirs.size(); i += 2) {
    Vector a = (1.0 + static_cast<double>(i)) * 0.2 * dirs[i];
    Vector b = (1.0 + static_cast<double>(i)) * 0.13 * dirs[i + 1];
    double r = kernel_lipschitz_ratio(emb.kernel, a, b);
    CHECK(r == doctest::Approx(kernel_lipschitz_ratio(emb.kernel, b, a)).epsilon(1e-12));
    sup = std::max(sup, r);
  }
  CHECK(std::isfinite(sup));
  CHECK(sup > 0.0);
}

TEST_CASE("auxiliary chain: frozen matrix equals live matrix") {
  ParamKernel k = ParamKernel::constant(two_state(), 1);
  const std::int64_t horizon = 60;
  const std::uint64_t seed = 31;
  std::vector<int> base{0};
  std::vector<Vector> ws;
  CounterRng rng(seed, 0);
  for (std::int64_t t = 0; t < horizon; ++t) {
    ws.push_back(Vector::Zero(1));
    StepDraws d{rng.uniform(static_cast<std::uint64_t>(t), kSubSampleA),
                rng.uniform(static_cast<std::uint64_t>(t), kSubSampleB)};
    base.push_back(sample_step(k, Vector::Zero(1), base.back(), d));
  }
  ws.push_back(Vector::Zero(1));
  auto aux = simulate_auxiliary(k, base, ws, 40, 0, 20, seed, 0);
  REQUIRE(aux.size() == 61);
  for (std::size_t i = 0; i < aux.size(); ++i) CHECK(aux[i] == base[i]);
  CHECK_THROWS(simulate_auxiliary(k, base, ws, 10, 11, 5, seed, 0));
}

TEST_CASE("auxiliary chain is markov under the frozen matrix") {
  // Empirical transition frequencies after the freeze match P_{w_frozen}.
  MDP mdp = MDP::random(3, 2, 0.9, 4);
  FeatureMap fm = FeatureMap::random(3, 2, 2, 9, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, PolicyConfig{0.2, 1.0});
  Vector w_frozen = 0.3 * Vector::Ones(2);
  Matrix pf = emb.kernel.matrix(w_frozen);
  const int ny = emb.kernel.n_states;
  Matrix counts = Matrix::Zero(ny, ny);
  std::vector<int> base{0};
  std::vector<Vector> ws{w_frozen};
  const std::int64_t t = 1, tau = 1, steps = 4000;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    auto aux = simulate_auxiliary(emb.kernel, base, ws, t, tau, steps, seed, 0);
    for (std::size_t i = 0; i + 1 < aux.size(); ++i)
      counts(aux[i], aux[i + 1]) += 1.0;
  }
  for (int y = 0; y < ny; ++y) {
    double row = counts.row(y).sum();
    if (row < 500) continue;
    for (int yp = 0; yp < ny; ++yp) {
      double phat = counts(y, yp) / row;
      double sd = std::sqrt(std::max(pf(y, yp) * (1 - pf(y, yp)), 1e-12) / row);
      CHECK(std::abs(phat - pf(y, yp)) <= 4.0 * sd + 1e-9);
    }
  }
}

TEST_CASE("auxiliary coupling: measured TV under the structural bound") {
  // The live chain drifts its parameter; the frozen chain stops tracking at
  // t - tau. Decoupling probability is bounded by the summed row-wise TV gap
  // between the matrices actually used, computed exactly from the kernel.
  MDP mdp = MDP::random(3, 2, 0.9, 6);
  FeatureMap fm = FeatureMap::random(3, 2, 2, 10, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, PolicyConfig{0.2, 1.0});
  const int ny = emb.kernel.n_states;
  const std::int64_t t = 30, tau = 10;
  // Slowly drifting parameter path.
  std::vector<Vector> ws;
  for (std::int64_t k = 0; k <= t + 1; ++k)
    ws.push_back(0.004 * static_cast<double>(k) * Vector::Ones(2));

  // Exact per-step decoupling bound sum_{k=t-tau}^{t} max_y TV(P_{w_k}(y,.), P_{w_f}(y,.)).
  double structural = 0.0;
  Matrix pf = emb.kernel.matrix(ws[static_cast<std::size_t>(t - tau)]);
  for (std::int64_t k = t - tau; k <= t; ++k) {
    Matrix pk = emb.kernel.matrix(ws[static_cast<std::size_t>(k)]);
    double worst = 0.0;
    for (int y = 0; y < ny; ++y) worst = std::max(worst, 0.5 * (pk.row(y) - pf.row(y)).lpNorm<1>());
    structural += worst;
  }

  const std::int64_t reps = 10000;
  Vector live_hist = Vector::Zero(ny), aux_hist = Vector::Zero(ny);
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(reps); ++seed) {
    CounterRng rng(seed, 0);
    std::vector<int> base{0};
    for (std::int64_t k = 0; k <= t; ++k) {
      StepDraws d{rng.uniform(static_cast<std::uint64_t>(k), kSubSampleA),
                  rng.uniform(static_cast<std::uint64_t>(k), kSubSampleB)};
      base.push_back(sample_step(emb.kernel, ws[static_cast<std::size_t>(k)], base.back(), d));
    }
    auto aux = simulate_auxiliary(emb.kernel, base, ws, t, tau, tau + 1, seed, 0);
    live_hist(base[static_cast<std::size_t>(t + 1)]) += 1.0;
    aux_hist(aux[static_cast<std::size_t>(t + 1)]) += 1.0;
  }
  double tv_hat = 0.5 * (live_hist / reps - aux_hist / reps).lpNorm<1>();
  double mc_sd = std::sqrt(static_cast<double>(ny)) / std::sqrt(static_cast<double>(reps));
  CHECK(tv_hat <= structural + 3.0 * mc_sd);
}

TEST_CASE("drift scan") {
  const int dim = 3;
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  ParamKernel k = ParamKernel::constant(p, dim);
  std::vector<double> radii{0.5, 1.0, 2.0, 4.0};

  UpdateFn contraction{dim, [](const Vector& w, int) { return Vector(-w); }, 1.0};
  auto rep = drift_scan(k, contraction, radii, 16);
  CHECK(rep.c1_hat == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep.c2_hat == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(rep.violations.empty());

  Vector bias(dim);
  bias << 0.4, -0.2, 0.1;
  UpdateFn shifted{dim, [bias](const Vector& w, int) { return Vector(-w + bias); }, 1.0};
  auto rep2 = drift_scan(k, shifted, radii, 16);
  CHECK(rep2.c1_hat > 0.0);  // a feasible fit exists (Young: C1 = 1/2, C2 = ||b||^2/2)
  CHECK(rep2.violations.empty());

  UpdateFn expansive{dim, [](const Vector& w, int) { return Vector(w); }, 1.0};
  auto rep3 = drift_scan(k, expansive, radii, 16);
  CHECK(rep3.c1_hat == 0.0);
  REQUIRE(!rep3.violations.empty());
  CHECK(rep3.violations.front().inner > 0.0);
}

TEST_CASE("kernel table file round trip") {
  std::ofstream out("kernel_test.txt");
  out << "states 2\ndim 3\n0.9 0.1\n0.5 0.5\n";
  out.close();
  ParamKernel k = ParamKernel::from_table_file("kernel_test.txt");
  CHECK(k.n_states == 2);
  CHECK(k.dim == 3);
  CHECK(k.matrix(Vector::Zero(3))(0, 0) == 0.9);
  std::remove("kernel_test.txt");
}

TEST_CASE("expected_update is lipschitz on probes") {
  MDP mdp = MDP::random(3, 2, 0.9, 12);
  FeatureMap fm = FeatureMap::random(3, 2, 2, 14, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, PolicyConfig{0.2, 1.0});
  auto dirs = sphere_probes(2, 40);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < dirs.size(); i += 2) {
    Vector a = 2.0 * dirs[i];
    Vector b = 2.0 * dirs[i + 1];
    Vector ha = expected_update(emb.kernel, emb.update, a);
    Vector hb = expected_update(emb.kernel, emb.update, b);
    worst = std::max(worst, (ha - hb).norm() / (a - b).norm());
  }
  CHECK(std::isfinite(worst));
  CHECK(worst < 50.0 * emb.update.lip_h);
}
