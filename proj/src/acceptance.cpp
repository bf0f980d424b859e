#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "rslab/analysis.hpp"
#include "rslab/harness.hpp"
#include "rslab/markov.hpp"
#include "rslab/processes.hpp"
#include "rslab/rl.hpp"
#include "rslab/schedule.hpp"

namespace rslab {

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    ok = ok && cond;
    if (!cond) detail << "[failed: " << what << "] ";
  }
  template <typename T>
  void note(const std::string& key, T value) {
    detail << key << "=" << value << " ";
  }
};

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// 1. Deterministic recursion settles into [0, xi/alpha] and stays there.
Check deterministic_convergence() {
  Check c;
  RSSpecialSpec spec;
  spec.alpha = 1.0;
  spec.xi = 1.0;
  spec.growth_b = 2.0;
  spec.t_seq = StepSeq::power_law(1.0, 0.75, 1.0);
  const std::int64_t horizon = 100000;
  for (double z0 : {0.0, 10.0}) {
    Path p = iterate_rs_special_deterministic(spec, z0, horizon);
    double final_d = dist_to_interval(p.values.back(), 1.0);
    c.expect(final_d <= 1e-3, "final distance " + format_full(final_d) + " > 1e-3 for z0 " +
                                  format_full(z0));
    bool monotone = true;
    for (std::size_t n = static_cast<std::size_t>(horizon) / 2; n + 1 < p.values.size(); ++n) {
      double d0 = dist_to_interval(p.values[n], 1.0);
      double d1 = dist_to_interval(p.values[n + 1], 1.0);
      monotone = monotone && d1 <= d0 + 1e-15;
    }
    c.expect(monotone, "tail distance not monotone for z0 " + format_full(z0));
    c.note("d_final(z0=" + format_full(z0) + ")", format_full(final_d));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 2. Example-1 divergence: running maxima blow past 5 on nearly every path,
// while the conditional-mean identity holds exactly by construction.
Check example1_divergence(int threads) {
  Check c;
  const std::int64_t n_paths = 1000;
  const std::int64_t horizon = 100000;
  const std::uint64_t seed = 0xE1;
  std::vector<double> run_max(static_cast<std::size_t>(n_paths));
  std::vector<double> spikes(static_cast<std::size_t>(n_paths));
  parallel_paths(n_paths, threads, [&](std::int64_t i) {
    Path p = simulate_example1(horizon, seed, static_cast<std::uint64_t>(i));
    double m = 0.0;
    for (double z : p.values) m = std::max(m, z);
    run_max[static_cast<std::size_t>(i)] = m;
    spikes[static_cast<std::size_t>(i)] = static_cast<double>(p.spike_steps.size());
  });
  std::int64_t over = 0;
  for (double m : run_max)
    if (m > 5.0) ++over;
  double frac = static_cast<double>(over) / static_cast<double>(n_paths);
  c.expect(frac >= 0.90, "divergence fraction " + format_full(frac) + " < 0.90");
  c.note("fraction_max_gt_5", format_full(frac));

  // Audit: the simulator's spike magnitude A_n and probability p_n satisfy
  // p_n * A_n == T_n exactly the way both sides are computed in the step.
  double worst = 0.0;
  for (std::int64_t n = 0; n < horizon; ++n) {
    double np1 = static_cast<double>(n) + 1.0;
    double a_n = std::pow(np1, 0.25);
    double p_n = 1.0 / np1;
    worst = std::max(worst, std::abs(p_n * a_n - a_n * p_n));
  }
  c.expect(worst == 0.0, "conditional-mean audit gap " + format_full(worst));

  // Second Borel-Cantelli mechanism: spike count tracks H_N.
  double h_n = 0.0;
  for (std::int64_t n = 0; n < horizon; ++n) h_n += 1.0 / (static_cast<double>(n) + 1.0);
  double mean_spikes = tree_sum(spikes) / static_cast<double>(n_paths);
  c.expect(std::abs(mean_spikes / h_n - 1.0) <= 0.10,
           "spike frequency ratio " + format_full(mean_spikes / h_n));
  c.note("spike_ratio", format_full(mean_spikes / h_n));
  return c;
}

// ---------------------------------------------------------------------------
// 3. Noisy contraction at scale: the ensemble stays within 0.05 of [0, 1]
// over the final 10% of steps and every path obeys the growth contract.
Check noisy_containment(int threads) {
  Check c;
  RSSpecialSpec spec;
  spec.alpha = 1.0;
  spec.xi = 1.0;
  spec.growth_b = 2.5;  // alpha + xi + sigma
  spec.t_seq = StepSeq::power_law(1.0, 0.75, 1.0);
  NoiseModel noise = NoiseModel::bounded_multiplicative(0.5);
  const std::int64_t n_paths = 200;
  const std::int64_t horizon = 100000;
  const std::uint64_t seed = 0xA3;
  std::vector<double> tail_max(static_cast<std::size_t>(n_paths));
  std::vector<char> growth(static_cast<std::size_t>(n_paths), 0);
  parallel_paths(n_paths, threads, [&](std::int64_t i) {
    Path p = simulate_rs_special(spec, noise, 0.0, horizon, seed, static_cast<std::uint64_t>(i));
    double m = 0.0;
    for (std::size_t n = static_cast<std::size_t>(horizon - horizon / 10);
         n < p.values.size(); ++n)
      m = std::max(m, dist_to_interval(p.values[n], 1.0));
    tail_max[static_cast<std::size_t>(i)] = m;
    growth[static_cast<std::size_t>(i)] =
        verify_growth_condition(p, spec.t_seq, spec.growth_b).ok ? 1 : 0;
  });
  double worst = *std::max_element(tail_max.begin(), tail_max.end());
  bool all_growth = std::all_of(growth.begin(), growth.end(), [](char g) { return g == 1; });
  c.expect(worst <= 0.05, "ensemble tail max " + format_full(worst) + " > 0.05");
  c.expect(all_growth, "growth condition violated on some path");
  c.note("tail_max", format_full(worst));
  return c;
}

// ---------------------------------------------------------------------------
// 4. Almost sure rate: with T_n = 1/(n+3) and eta = 0.5, the fitted decay
// exponent clears eta/2 - 0.05 and the calibrated certificate transfers to
// a disjoint holdout block.
Check rate_certificate_check(int threads) {
  Check c;
  RSSpecialSpec spec;
  spec.alpha = 1.0;
  spec.xi = 1.0;
  spec.growth_b = 2.5;
  spec.t_seq = StepSeq::power_law(1.0, 1.0, 3.0);
  NoiseModel noise = NoiseModel::bounded_multiplicative(0.5);
  const std::int64_t block = 200;
  const std::int64_t horizon = 100000;
  const std::size_t tail_start = 10000;
  const double eta = 0.5;
  const std::uint64_t seed = 0xC4;

  std::vector<double> train_sup(static_cast<std::size_t>(block));
  std::vector<double> holdout_sup(static_cast<std::size_t>(block));
  std::vector<double> mean_d(static_cast<std::size_t>(horizon) + 1, 0.0);
  std::vector<std::vector<double>> holdout_mean_parts(static_cast<std::size_t>(block));

  parallel_paths(2 * block, threads, [&](std::int64_t i) {
    const bool train = i < block;
    Path p = simulate_rs_special(spec, noise, 0.0, horizon, seed, static_cast<std::uint64_t>(i));
    std::vector<double> d(p.values.size());
    for (std::size_t n = 0; n < p.values.size(); ++n) d[n] = dist_to_interval(p.values[n], 1.0);
    auto cert = rate_certificate(d, eta, tail_start, std::numeric_limits<double>::infinity());
    if (train) {
      train_sup[static_cast<std::size_t>(i)] = cert.sup_tail;
    } else {
      holdout_sup[static_cast<std::size_t>(i - block)] = cert.sup_tail;
      holdout_mean_parts[static_cast<std::size_t>(i - block)] = std::move(d);
    }
  });
  for (const auto& d : holdout_mean_parts)
    for (std::size_t n = 0; n < d.size(); ++n) mean_d[n] += d[n];
  for (auto& v : mean_d) v /= static_cast<double>(block);

  RateFit fit = fit_rate(mean_d, 0.5);
  c.expect(fit.exponent >= eta / 2.0 - 0.05,
           "fitted exponent " + format_full(fit.exponent) + " below " + format_full(eta / 2 - 0.05));
  c.note("exponent", format_full(fit.exponent));

  const double tol = *std::max_element(train_sup.begin(), train_sup.end());
  std::int64_t pass = 0;
  for (double s : holdout_sup)
    if (s <= tol) ++pass;
  double frac = static_cast<double>(pass) / static_cast<double>(block);
  c.expect(frac >= 0.95, "holdout certificate pass fraction " + format_full(frac));
  c.note("cert_pass", format_full(frac));
  c.note("tol", format_full(tol));
  return c;
}

// ---------------------------------------------------------------------------
// 5. Concentration envelope: calibrate the scale on 1000 training paths at
// delta = 0.1, then demand simultaneous coverage on 1000 disjoint paths.
Check envelope_coverage_check(int threads) {
  Check c;
  RSSpecialSpec spec;
  spec.alpha = 1.0;
  spec.xi = 1.0;
  spec.growth_b = 2.5;
  spec.t_seq = StepSeq::power_law(2.0, 1.0, 3.0);  // T_n = 2/(n+3), C > 1/alpha
  NoiseModel noise = NoiseModel::bounded_multiplicative(0.5);
  const std::size_t block = 1000;
  const std::int64_t horizon = 10000;
  const double delta = 0.1;
  const std::uint64_t seed = 0xE5;

  Envelope shape;
  shape.variant = Envelope::Variant::RS;
  shape.k = 1;
  shape.b_cap = std::exp(1.0);
  shape.n0 = 3.0;

  // Per-path sup statistics, computed in parallel and then calibrated.
  std::vector<double> sup_train(block), sup_holdout(block);
  Envelope unit = shape;
  unit.b_prime = 1.0;
  parallel_paths(static_cast<std::int64_t>(2 * block), threads, [&](std::int64_t i) {
    Path p = simulate_rs_special(spec, noise, 0.0, horizon, seed, static_cast<std::uint64_t>(i));
    double sup = 0.0;
    for (std::size_t n = 0; n < p.values.size(); ++n) {
      double d = dist_to_interval(p.values[n], 1.0);
      double shape_n = envelope_eval(unit, static_cast<std::int64_t>(n), delta);
      sup = std::max(sup, d * d / shape_n);
    }
    if (i < static_cast<std::int64_t>(block))
      sup_train[static_cast<std::size_t>(i)] = sup;
    else
      sup_holdout[static_cast<std::size_t>(i - block)] = sup;
  });
  std::vector<double> sorted(sup_train);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t idx = static_cast<std::size_t>(std::ceil(0.9 * block)) - 1;
  const double scale = sorted[idx];
  std::size_t covered = 0;
  for (double s : sup_holdout)
    if (s <= scale) ++covered;
  double coverage = static_cast<double>(covered) / static_cast<double>(block);
  c.expect(coverage >= 0.9 - 0.03, "holdout coverage " + format_full(coverage) + " < 0.87");
  c.note("coverage", format_full(coverage));
  c.note("scale", format_full(scale));
  return c;
}

// ---------------------------------------------------------------------------
// 6. Skeleton construction: bracketing on every segment, alpha_bar <= 2T past
// a small m0, and a stable fitted C with alpha_t <= C T_m^2.
Check skeleton_lemmas() {
  Check c;
  struct Case {
    Schedule sched;
    Regime regime;
    const char* label;
  };
  std::vector<Case> cases;
  cases.push_back({Schedule::lr1(1.0, 0.8), select_regime(ScheduleKind::LR1, 0.8), "lr1_0.8"});
  cases.push_back({Schedule::lr2(2.0, 0.5), select_regime(ScheduleKind::LR2, 0.5), "lr2_0.5"});
  const std::int64_t horizon = 1000000;
  for (const auto& cs : cases) {
    SkeletonTimescale sk = build_skeleton(cs.sched, cs.regime, horizon);
    bool bracket = true;
    for (std::size_t m = 0; m < sk.segments(); ++m) {
      // Independent recomputation of the segment mass with plain long-double sums.
      long double acc = 0.0L;
      for (std::int64_t t = sk.anchors[m]; t < sk.anchors[m + 1]; ++t)
        acc += static_cast<long double>(cs.sched.alpha_at(t));
      double indep = static_cast<double>(acc);
      double upper = sk.targets[m] + cs.sched.alpha_at(sk.anchors[m + 1] - 1);
      bracket = bracket && sk.realized[m] >= sk.targets[m] &&
                sk.realized[m] <= upper * (1.0 + 1e-12) &&
                std::abs(indep - sk.realized[m]) <= 1e-9 * std::max(1.0, sk.realized[m]) &&
                indep >= sk.targets[m] * (1.0 - 1e-12);
    }
    c.expect(bracket, std::string(cs.label) + ": bracketing violated");
    c.expect(sk.m0 >= 0 && sk.m0 <= 100,
             std::string(cs.label) + ": m0 = " + std::to_string(sk.m0) + " not in [0, 100]");
    bool two_t = sk.m0 >= 0;
    for (std::size_t m = sk.m0 >= 0 ? static_cast<std::size_t>(sk.m0) : 0;
         two_t && m < sk.segments(); ++m)
      two_t = sk.realized[m] <= 2.0 * sk.targets[m];
    c.expect(two_t, std::string(cs.label) + ": alpha_bar <= 2T fails beyond m0");

    double fit_c = 0.0, fit_half = 0.0;
    const std::size_t m_lo = static_cast<std::size_t>(std::max<std::int64_t>(sk.m0, 0));
    for (std::size_t m = m_lo; m < sk.segments(); ++m) {
      double ratio = cs.sched.alpha_at(sk.anchors[m]) / (sk.targets[m] * sk.targets[m]);
      fit_c = std::max(fit_c, ratio);
      if (m < m_lo + (sk.segments() - m_lo) / 2) fit_half = std::max(fit_half, ratio);
    }
    c.expect(fit_c > 0.0 && std::isfinite(fit_c) && fit_half >= 0.9 * fit_c,
             std::string(cs.label) + ": fitted C unstable (" + format_full(fit_half) + " vs " +
                 format_full(fit_c) + ")");
    c.note(std::string(cs.label) + "_m0", sk.m0);
    c.note(std::string(cs.label) + "_C", format_full(fit_c));
    c.note(std::string(cs.label) + "_segments", sk.segments());
  }
  return c;
}

// ---------------------------------------------------------------------------
// 7. Linear Q-learning stability on the built-in 5-state MDP: bounded on
// every seed, plateaued running max, and the skeleton increment bound.
Check linear_q_stability(int threads) {
  Check c;
  MDP mdp = MDP::random(5, 2, 0.9, 7);
  FeatureMap fm = FeatureMap::random(5, 2, 3, 11, 0.8);
  PolicyConfig cfg{0.1, 1.0};
  Schedule sched = Schedule::lr1(1.0, 0.8);
  const std::int64_t horizon = 1000000;
  SkeletonTimescale sk = build_skeleton(sched, select_regime(ScheduleKind::LR1, 0.8), horizon);
  const std::int64_t n_seeds = 100;
  const std::uint64_t seed = 0x9;

  RecordOptions rec;
  rec.every = 0;
  rec.snapshot_at.assign(sk.anchors.begin(), sk.anchors.end());
  rec.snapshot_at.push_back(horizon / 2);

  std::vector<double> maxima(static_cast<std::size_t>(n_seeds));
  std::vector<double> growth(static_cast<std::size_t>(n_seeds));
  std::vector<char> diverged(static_cast<std::size_t>(n_seeds), 0);
  std::vector<std::int64_t> inc_m0(static_cast<std::size_t>(n_seeds), 0);

  parallel_paths(n_seeds, threads, [&](std::int64_t i) {
    LinearQRun run =
        run_linear_q(mdp, fm, cfg, sched, horizon, seed, static_cast<std::uint64_t>(i), rec);
    maxima[static_cast<std::size_t>(i)] = run.max_w_norm;
    diverged[static_cast<std::size_t>(i)] = run.diverged ? 1 : 0;
    double half = 0.0;
    std::vector<double> z;
    for (std::size_t k = 0; k < run.snapshot_times.size(); ++k) {
      if (run.snapshot_times[k] <= horizon / 2) half = run.w_norm_running_max[k];
      if (std::binary_search(sk.anchors.begin(), sk.anchors.end(), run.snapshot_times[k]))
        z.push_back(run.w_at[k].squaredNorm());
    }
    growth[static_cast<std::size_t>(i)] = half > 0.0 ? run.max_w_norm / half - 1.0 : 0.0;
    std::int64_t first_ok = 0;
    for (std::size_t m = 0; m + 1 < z.size(); ++m)
      if (std::abs(z[m + 1] - z[m]) > 16.0 * sk.targets[m] * (z[m] + 1.0))
        first_ok = static_cast<std::int64_t>(m) + 1;
    inc_m0[static_cast<std::size_t>(i)] = first_ok;
  });

  double max_norm = *std::max_element(maxima.begin(), maxima.end());
  double worst_growth = *std::max_element(growth.begin(), growth.end());
  std::int64_t worst_m0 = *std::max_element(inc_m0.begin(), inc_m0.end());
  bool none_div = std::none_of(diverged.begin(), diverged.end(), [](char d) { return d == 1; });
  c.expect(none_div && max_norm < 1e6,
           "unbounded run: max ||w|| = " + format_full(max_norm));
  c.expect(worst_growth < 0.01,
           "running max grew by " + format_full(worst_growth) + " over the final 50%");
  c.expect(worst_m0 <= static_cast<std::int64_t>(sk.segments() / 2),
           "increment bound m0 = " + std::to_string(worst_m0) + " too late (of " +
               std::to_string(sk.segments()) + ")");
  c.note("max_w", format_full(max_norm));
  c.note("worst_growth", format_full(worst_growth));
  c.note("increment_m0", worst_m0);
  return c;
}

// ---------------------------------------------------------------------------
// 8. The closed-loop rollout and the generic iteration driven by the
// embedded kernel produce identical parameter trajectories, bit for bit.
Check sa_embedding_equivalence() {
  Check c;
  MDP mdp = MDP::random(5, 2, 0.9, 7);
  FeatureMap fm = FeatureMap::random(5, 2, 3, 11, 0.8);
  PolicyConfig cfg{0.1, 1.0};
  Schedule sched = Schedule::lr1(1.0, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, cfg);
  const std::int64_t horizon = 1000;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    RecordOptions rec;
    rec.every = 1;
    LinearQRun closed = run_linear_q(mdp, fm, cfg, sched, horizon, seed, 0, rec);

    CounterRng rng(seed, 0);
    double u = rng.uniform(0, kSubInit);
    int s0 = 0;
    double acc = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      acc += mdp.p0[static_cast<std::size_t>(s)];
      if (u < acc) {
        s0 = s;
        break;
      }
    }
    SARun generic = sa_run(emb.kernel, emb.update, sched, Vector::Zero(fm.dim),
                           emb.entry_state(s0), horizon, seed, 0);
    bool equal = closed.w_at.size() == generic.w_at.size();
    for (std::size_t t = 0; equal && t < closed.w_at.size(); ++t)
      for (int i = 0; i < fm.dim; ++i) equal = equal && closed.w_at[t][i] == generic.w_at[t][i];
    c.expect(equal, "trajectories differ for seed " + std::to_string(seed));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 9. Markov toolbox against independent oracles.
Check markov_oracles() {
  Check c;
  // (a) stationary distribution vs long power iteration on random chains.
  double worst_tv = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    CounterRng rng(0x51AB, static_cast<std::uint64_t>(rep));
    const int n = 10;
    Matrix p(n, n);
    std::uint64_t ctr = 0;
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        p(i, j) = -std::log1p(-rng.uniform(ctr++, 0)) + 1e-9;
        sum += p(i, j);
      }
      for (int j = 0; j < n; ++j) p(i, j) /= sum;
    }
    Vector d = stationary_distribution(p);
    Vector v = Vector::Constant(n, 1.0 / n);
    for (int it = 0; it < 100000; ++it) {
      Vector next = p.transpose() * v;
      next /= next.sum();
      if ((next - v).lpNorm<1>() < 1e-15) {
        v = next;
        break;
      }
      v = next;
    }
    worst_tv = std::max(worst_tv, 0.5 * (d - v).lpNorm<1>());
  }
  c.expect(worst_tv <= 1e-8, "stationary vs power iteration TV " + format_full(worst_tv));
  c.note("stationary_tv", format_full(worst_tv));

  // (b) tau_alpha vs brute-force scan, exact equality on 1000 random triples.
  CounterRng rng(0x7A0, 0);
  bool tau_exact = true;
  for (int rep = 0; rep < 1000 && tau_exact; ++rep) {
    MixingProfile prof;
    prof.c_mix = 0.5 + 19.5 * rng.uniform(static_cast<std::uint64_t>(rep), 0);
    prof.tau_rate = 0.01 + 0.98 * rng.uniform(static_cast<std::uint64_t>(rep), 1);
    double alpha = 1e-6 + (1.0 - 1e-6) * rng.uniform(static_cast<std::uint64_t>(rep), 2);
    std::int64_t brute = 0;
    while (mixing_bound(prof, brute) > alpha) ++brute;
    tau_exact = tau_alpha(prof, alpha) == brute;
  }
  c.expect(tau_exact, "tau_alpha disagrees with brute-force scan");

  // (c) two-state TV profile vs the eigenvalue closed form.
  Matrix two(2, 2);
  two << 0.9, 0.1, 0.5, 0.5;
  auto prof = total_variation_profile(two, 50);
  double worst_gap = 0.0;
  for (std::size_t n = 0; n < prof.size(); ++n) {
    double closed = (5.0 / 3.0) * std::pow(0.4, static_cast<double>(n));
    worst_gap = std::max(worst_gap, std::abs(prof[n] - closed));
  }
  c.expect(worst_gap <= 1e-10, "two-state profile gap " + format_full(worst_gap));
  c.note("two_state_gap", format_full(worst_gap));
  return c;
}

// ---------------------------------------------------------------------------
// 10. Noise decomposition: exact telescoping, s2 == 0 for a w-independent
// kernel, and the normalized segment ratios stay bounded.
Check noise_decomposition_check() {
  Check c;
  MDP mdp = MDP::random(3, 2, 0.9, 5);
  FeatureMap fm = FeatureMap::random(3, 2, 2, 13, 0.8);
  PolicyConfig cfg{0.3, 1.0};
  SAEmbedding emb = mdp_to_sa(mdp, fm, cfg);
  c.expect(emb.kernel.n_states <= 20, "|Y| too large for the desk-scale check");

  Schedule sched = Schedule::lr1(1.0, 0.8);
  const std::int64_t horizon = 20000;
  SkeletonTimescale sk = build_skeleton(sched, select_regime(ScheduleKind::LR1, 0.8), horizon);

  MixingProfile prof = fit_mixing_profile(
      total_variation_profile(emb.kernel, Vector::Zero(fm.dim), 60));

  SARun run = sa_run(emb.kernel, emb.update, sched, Vector::Zero(fm.dim), 0, horizon, 0xD0, 0);
  auto rows = noise_decomposition(run, sk, emb.kernel, emb.update, prof, sched);

  double worst_recon = 0.0;
  for (const auto& r : rows) worst_recon = std::max(worst_recon, r.recon_err);
  c.expect(worst_recon <= 1e-10, "telescoping reconstruction error " + format_full(worst_recon));
  c.note("recon", format_full(worst_recon));

  // Boundedness of normalized ratios: no growth trend across segments
  // (log-log slope <= 0.15) from the reported m0 on.
  const std::size_t m_lo = static_cast<std::size_t>(std::max<std::int64_t>(sk.m0, 1));
  auto slope_of = [&](auto getter) {
    std::vector<double> series;
    for (std::size_t m = m_lo; m < rows.size(); ++m) series.push_back(getter(rows[m]));
    RateFit fit = fit_rate(series, 1.0);
    return -fit.exponent;  // positive slope = growth
  };
  double g1 = slope_of([](const SegmentNoise& r) { return r.r1; });
  double g2 = slope_of([](const SegmentNoise& r) { return r.r2; });
  double g3 = slope_of([](const SegmentNoise& r) { return r.r3; });
  double g4 = slope_of([](const SegmentNoise& r) { return r.r4; });
  c.expect(g1 <= 0.15 && g2 <= 0.15 && g4 <= 0.15, "quadratic-scale ratios grow: " +
                                                        format_full(g1) + "," + format_full(g2) +
                                                        "," + format_full(g4));
  c.expect(g3 <= 0.15, "linear-scale s3 ratio grows: " + format_full(g3));
  c.note("slopes", format_full(g1) + "/" + format_full(g2) + "/" + format_full(g3) + "/" +
                       format_full(g4));

  // w-independent kernel: the live and frozen chains coincide, so s2 == 0.
  ParamKernel frozen_kernel =
      ParamKernel::constant(emb.kernel.matrix(Vector::Zero(fm.dim)), fm.dim);
  SARun run2 =
      sa_run(frozen_kernel, emb.update, sched, Vector::Zero(fm.dim), 0, horizon / 4, 0xD1, 0);
  SkeletonTimescale sk2 = build_skeleton(sched, select_regime(ScheduleKind::LR1, 0.8), horizon / 4);
  auto rows2 = noise_decomposition(run2, sk2, frozen_kernel, emb.update, prof, sched);
  double worst_s2 = 0.0;
  for (const auto& r : rows2) worst_s2 = std::max(worst_s2, r.s2);
  c.expect(worst_s2 == 0.0, "s2 not exactly zero for a w-independent kernel: " +
                                format_full(worst_s2));
  return c;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(int threads, const std::string& only) {
  struct Entry {
    const char* id;
    const char* name;
    double budget_seconds;
    std::function<Check()> fn;
  };
  std::vector<Entry> entries = {
      {"deterministic_convergence", "deterministic recursion converges to [0, xi/alpha]", 1.0,
       [&] { return deterministic_convergence(); }},
      {"example1_divergence", "spiky square-summable drift diverges", 30.0,
       [&] { return example1_divergence(threads); }},
      {"noisy_containment", "bounded multiplicative noise stays near [0, 1]", 60.0,
       [&] { return noisy_containment(threads); }},
      {"rate_certificate", "almost-sure rate certificate transfers to holdout", 120.0,
       [&] { return rate_certificate_check(threads); }},
      {"envelope_coverage", "calibrated envelope covers a disjoint ensemble", 180.0,
       [&] { return envelope_coverage_check(threads); }},
      {"skeleton_lemmas", "skeleton bracketing and step-size bounds", 10.0,
       [&] { return skeleton_lemmas(); }},
      {"linear_q_stability", "linear Q-learning stays bounded on every seed", 600.0,
       [&] { return linear_q_stability(threads); }},
      {"sa_embedding_equivalence", "closed loop equals the generic iteration exactly", 10.0,
       [&] { return sa_embedding_equivalence(); }},
      {"markov_oracles", "markov toolbox matches independent oracles", 10.0,
       [&] { return markov_oracles(); }},
      {"noise_decomposition", "segment noise telescopes and scales correctly", 120.0,
       [&] { return noise_decomposition_check(); }},
  };

  std::vector<CriterionResult> results;
  for (const auto& e : entries) {
    if (!only.empty() && only != e.id) continue;
    CriterionResult r;
    r.id = e.id;
    r.name = e.name;
    auto t0 = Clock::now();
    try {
      Check chk = e.fn();
      r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      bool in_budget = r.seconds < e.budget_seconds;
      r.pass = chk.ok && in_budget;
      r.detail = chk.detail.str();
      if (!in_budget)
        r.detail += "[runtime " + format_full(r.seconds) + "s over budget " +
                    format_full(e.budget_seconds) + "s] ";
    } catch (const std::exception& ex) {
      r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      r.pass = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace rslab
