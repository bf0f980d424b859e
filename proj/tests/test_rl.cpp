#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "rslab/analysis.hpp"
#include "rslab/processes.hpp"
#include "rslab/rl.hpp"

using namespace rslab;

TEST_CASE("adaptive temperature") {
  Vector small(2);
  small << 0.3, 0.4;
  CHECK(kappa(small, 2.0) == 2.0);  // ||w|| <= 1 clamps at kappa0
  Vector big = Vector::Zero(2);
  big(0) = 10.0;
  CHECK(kappa(big, 2.0) == doctest::Approx(0.2).epsilon(1e-15));
  // kappa(c w) ||c w|| stays kappa0 once ||w|| >= 1.
  for (double c : {1.0, 3.0, 17.5}) {
    Vector w = c * big;
    CHECK(kappa(w, 2.0) * w.norm() == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("behavior policy: uniform, saturation, hand softmax") {
  FeatureMap fm = FeatureMap::one_hot(1, 3);
  PolicyConfig cfg{0.1, 1.0};
  std::vector<double> probs;

  behavior_policy(Vector::Zero(3), 0, cfg, fm, probs);
  for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  // Large logit gap saturates toward (eps/|A| + (1 - eps), eps/|A|, ...).
  FeatureMap fm2 = FeatureMap::one_hot(1, 2);
  Vector w2(2);
  w2 << 500.0, -500.0;
  PolicyConfig cfg2{0.2, 1000.0};
  behavior_policy(w2, 0, cfg2, fm2, probs);
  CHECK(probs[0] == doctest::Approx(0.2 / 2 + 0.8).epsilon(1e-9));
  CHECK(probs[1] == doctest::Approx(0.1).epsilon(1e-9));

  // 3 actions with kappa_w x.w = (1, 0, 0), eps = 0.1.
  Vector w3(3);
  w3 << 1.0, 0.0, 0.0;  // ||w|| = 1 so kappa_w = 1 and logits are (1, 0, 0)
  behavior_policy(w3, 0, cfg, fm, probs);
  double denom = std::exp(1.0) + 2.0;
  CHECK(probs[0] == doctest::Approx(0.1 / 3 + 0.9 * std::exp(1.0) / denom).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.1 / 3 + 0.9 / denom).epsilon(1e-12));
}

TEST_CASE("policy floor and normalization over probes") {
  MDP mdp = MDP::random(4, 3, 0.9, 21);
  FeatureMap fm = FeatureMap::random(4, 3, 3, 22, 0.8);
  PolicyConfig cfg{0.15, 2.0};
  std::vector<double> probs;
  auto dirs = sphere_probes(3, 25);
  for (const auto& u : dirs) {
    for (double r : {0.0, 0.5, 2.0, 40.0}) {
      Vector w = r * u;
      for (int s = 0; s < 4; ++s) {
        behavior_policy(w, s, cfg, fm, probs);
        double sum = 0.0;
        for (double p : probs) {
          CHECK(p >= 0.15 / 3 - 1e-15);
          sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("policy scale invariance once the norm clamp is active") {
  FeatureMap fm = FeatureMap::random(2, 2, 3, 30, 0.8);
  PolicyConfig cfg{0.1, 1.5};
  Vector w(3);
  w << 1.2, -0.5, 0.7;  // ||w|| > 1
  std::vector<double> p1, p2;
  behavior_policy(w, 1, cfg, fm, p1);
  behavior_policy(Vector(5.0 * w), 1, cfg, fm, p2);
  for (std::size_t a = 0; a < p1.size(); ++a)
    CHECK(p1[a] == doctest::Approx(p2[a]).epsilon(1e-12));
}

TEST_CASE("linear q step closed forms") {
  FeatureMap fm = FeatureMap::one_hot(1, 2);
  Vector w = Vector::Zero(2);
  double delta = linear_q_step(w, 0, 0, 1.0, 0, 0.5, fm, 0.0);
  CHECK(delta == 1.0);
  CHECK(w(0) == 0.5);
  CHECK(w(1) == 0.0);

  // Zero TD error leaves w unchanged.
  Vector w2(2);
  w2 << 0.7, 0.2;
  Vector before = w2;
  double r = w2(0) - 0.0;  // gamma = 0, so r = current estimate gives delta = 0
  double d2 = linear_q_step(w2, 0, 0, r, 1, 0.3, fm, 0.0);
  CHECK(d2 == 0.0);
  CHECK(w2 == before);
}

TEST_CASE("one-hot features reproduce tabular q-learning step for step") {
  MDP mdp = MDP::random(2, 2, 0.8, 33);
  FeatureMap fm = FeatureMap::one_hot(2, 2);
  Schedule sched = Schedule::lr1(1.0, 0.8);
  PolicyConfig cfg{0.3, 1.0};
  RecordOptions rec;
  rec.every = 1;
  rec.keep_transitions = true;
  LinearQRun run = run_linear_q(mdp, fm, cfg, sched, 400, 77, 0, rec);

  // Independent tabular oracle replaying the recorded transitions.
  std::vector<double> q(4, 0.0);
  for (std::size_t t = 0; t < run.transitions.size(); ++t) {
    const Transition& tr = run.transitions[t];
    double vmax = std::max(q[static_cast<std::size_t>(tr.s_next) * 2],
                           q[static_cast<std::size_t>(tr.s_next) * 2 + 1]);
    std::size_t idx = static_cast<std::size_t>(tr.s) * 2 + static_cast<std::size_t>(tr.a);
    q[idx] += sched.alpha_at(static_cast<std::int64_t>(t)) * (tr.r + mdp.gamma * vmax - q[idx]);
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a)
        CHECK(run.w_at[t + 1][s * 2 + a] ==
              doctest::Approx(q[static_cast<std::size_t>(s) * 2 + a]).epsilon(1e-12));
  }
}

TEST_CASE("gamma = 0 learning recovers the reward table") {
  // Deterministic 2-state cycle, single action, gamma = 0.
  MDP m;
  m.n_states = 2;
  m.n_actions = 1;
  m.gamma = 0.0;
  m.reward = {0.3, -0.2};
  m.transition = {0.0, 1.0, 1.0, 0.0};  // 0 -> 1 -> 0
  m.p0 = {1.0, 0.0};
  m.validate();
  FeatureMap fm = FeatureMap::one_hot(2, 1);
  LinearQRun run = run_linear_q(m, fm, PolicyConfig{0.5, 1.0}, Schedule::lr1(2.0, 1.0), 100000, 1);
  CHECK(std::abs(run.w_final(0) - 0.3) <= 1e-3);
  CHECK(std::abs(run.w_final(1) + 0.2) <= 1e-3);
}

TEST_CASE("identical seeds give identical trajectories") {
  MDP mdp = MDP::random(5, 2, 0.9, 7);
  FeatureMap fm = FeatureMap::random(5, 2, 3, 11, 0.8);
  RecordOptions rec;
  rec.every = 50;
  LinearQRun a = run_linear_q(mdp, fm, PolicyConfig{0.1, 1.0}, Schedule::lr1(1.0, 0.8), 5000, 9, 0, rec);
  LinearQRun b = run_linear_q(mdp, fm, PolicyConfig{0.1, 1.0}, Schedule::lr1(1.0, 0.8), 5000, 9, 0, rec);
  REQUIRE(a.w_at.size() == b.w_at.size());
  for (std::size_t k = 0; k < a.w_at.size(); ++k) CHECK(a.w_at[k] == b.w_at[k]);
}

TEST_CASE("embedding: rows stochastic, |Y| counts positive triples") {
  MDP mdp = MDP::random(3, 2, 0.9, 40);
  FeatureMap fm = FeatureMap::random(3, 2, 2, 41, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, PolicyConfig{0.2, 1.0});
  std::size_t positive = 0;
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sp = 0; sp < 3; ++sp)
        if (mdp.row(s, a)[sp] > 0.0) ++positive;
  CHECK(emb.y_space.size() == positive);
  for (double r : {0.0, 1.0, 7.0}) {
    Matrix p = emb.kernel.matrix(r * Vector::Ones(2));
    check_row_stochastic(p);
  }
}

TEST_CASE("closed loop equals generic iteration (short horizon)") {
  MDP mdp = MDP::random(4, 2, 0.85, 50);
  FeatureMap fm = FeatureMap::random(4, 2, 3, 51, 0.8);
  PolicyConfig cfg{0.1, 1.0};
  Schedule sched = Schedule::lr1(1.0, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, cfg);
  const std::uint64_t seed = 123;
  RecordOptions rec;
  rec.every = 1;
  LinearQRun closed = run_linear_q(mdp, fm, cfg, sched, 500, seed, 0, rec);
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
  SARun generic = sa_run(emb.kernel, emb.update, sched, Vector::Zero(3), emb.entry_state(s0),
                         500, seed, 0);
  for (std::size_t t = 0; t < closed.w_at.size(); ++t)
    for (int i = 0; i < 3; ++i) CHECK(closed.w_at[t][i] == generic.w_at[t][i]);
}

TEST_CASE("q_values") {
  FeatureMap fm = FeatureMap::one_hot(2, 2);
  auto zeros = q_values(Vector::Zero(4), fm);
  for (double v : zeros) CHECK(v == 0.0);
  Vector w(4);
  w << 1.0, 2.0, 3.0, 4.0;
  auto q = q_values(w, fm);
  CHECK(q[0] == 1.0);
  CHECK(q[3] == 4.0);
  auto q2 = q_values(Vector(2.0 * w), fm);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q2[i] == 2.0 * q[i]);
}

TEST_CASE("iterate growth bounds along a run") {
  MDP mdp = MDP::random(5, 2, 0.9, 7);
  FeatureMap fm = FeatureMap::random(5, 2, 3, 11, 0.8);
  PolicyConfig cfg{0.1, 1.0};
  Schedule sched = Schedule::lr1(1.0, 0.8);
  SAEmbedding emb = mdp_to_sa(mdp, fm, cfg);
  const std::int64_t horizon = 4000;
  SARun run = sa_run(emb.kernel, emb.update, sched, Vector::Zero(3), 0, horizon, 3, 0);

  // Single-step growth ||w_{t+1} - w_t|| <= alpha_t L_h (||w_t|| + 1).
  for (std::int64_t t = 0; t < horizon; ++t) {
    double step = (run.w_at[static_cast<std::size_t>(t + 1)] - run.w_at[static_cast<std::size_t>(t)]).norm();
    double cap = sched.alpha_at(t) * emb.update.lip_h *
                 (run.w_at[static_cast<std::size_t>(t)].norm() + 1.0);
    CHECK(step <= cap * (1.0 + 1e-12));
  }

  // Backward-window bound on sampled windows with small total step mass.
  for (std::int64_t t1 : {2000L, 2500L, 3200L}) {
    std::int64_t t2 = t1 + 40;
    double mass = segment_sum(sched, t1, t2);
    double q = mass * emb.update.lip_h;
    REQUIRE(q < 1.0);
    double lhs = (run.w_at[static_cast<std::size_t>(t1)] - run.w_at[static_cast<std::size_t>(t2)]).norm();
    double rhs = q / (1.0 - q) * (run.w_at[static_cast<std::size_t>(t2)].norm() + 1.0);
    CHECK(lhs <= rhs * (1.0 + 1e-12));
  }

  // Whole-run envelope from the summed step mass.
  std::vector<double> alphas;
  for (std::int64_t t = 0; t < horizon; ++t) alphas.push_back(sched.alpha_at(t));
  auto env = gronwall_envelope(0.0, emb.update.lip_h, 1.0, alphas);
  for (std::int64_t t = 0; t <= horizon; ++t)
    CHECK(run.w_at[static_cast<std::size_t>(t)].norm() + 1.0 <= env[static_cast<std::size_t>(t)] + 1e-9);
}

TEST_CASE("baird star instance stays bounded under the adaptive policy") {
  MDP mdp = MDP::baird();
  FeatureMap fm = FeatureMap::baird();
  Vector w0 = Vector::Ones(16);
  w0(7) = 10.0;  // classic lopsided start
  w0(15) = 10.0;
  LinearQRun run = run_linear_q(mdp, fm, PolicyConfig{0.1, 1.0}, Schedule::lr1(1.0, 0.8), 20000,
                                4, 0, RecordOptions{}, w0);
  CHECK(!run.diverged);
  CHECK(run.max_w_norm < 1e3);
}

TEST_CASE("mdp corpus file round trip") {
  MDP mdp = MDP::random(4, 3, 0.7, 60);
  FeatureMap fm = FeatureMap::random(4, 3, 2, 61, 0.8);
  mdp.save("mdp_test.txt", fm);
  MDP loaded = MDP::load("mdp_test.txt");
  CHECK(loaded.n_states == 4);
  CHECK(loaded.gamma == mdp.gamma);
  for (std::size_t i = 0; i < mdp.transition.size(); ++i)
    CHECK(loaded.transition[i] == mdp.transition[i]);
  int S = 0, A = 0;
  FeatureMap lf = FeatureMap::load("mdp_test.txt", &S, &A);
  CHECK(S == 4);
  CHECK(A == 3);
  REQUIRE(lf.x.size() == fm.x.size());
  for (std::size_t i = 0; i < fm.x.size(); ++i) CHECK(lf.x[i] == fm.x[i]);
  std::remove("mdp_test.txt");
}
