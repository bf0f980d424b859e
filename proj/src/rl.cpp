#include "rslab/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rslab {

namespace {

// Inverse-CDF draw over a raw probability array, ascending index.
int sample_discrete(const double* p, int n, double u) {
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += p[j];
    if (u < acc) return j;
  }
  return n - 1;
}

double dot(const double* x, const Vector& w) {
  double acc = 0.0;
  for (int i = 0; i < w.size(); ++i) acc += x[i] * w[i];
  return acc;
}

}  // namespace

void MDP::validate() const {
  require(n_states > 0 && n_actions > 0, "mdp: state and action counts must be positive");
  require(gamma >= 0.0 && gamma < 1.0, "mdp: gamma must lie in [0, 1)");
  require(reward.size() == static_cast<std::size_t>(n_states) * n_actions, "mdp: reward size");
  require(transition.size() == static_cast<std::size_t>(n_states) * n_actions * n_states,
          "mdp: transition size");
  require(p0.size() == static_cast<std::size_t>(n_states), "mdp: p0 size");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      const double* t = row(s, a);
      double sum = 0.0;
      for (int sp = 0; sp < n_states; ++sp) {
        require(t[sp] >= 0.0, "mdp: negative transition probability");
        sum += t[sp];
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("mdp: transition row (s=" + std::to_string(s) +
                                    ", a=" + std::to_string(a) + ") sums to " + format_full(sum));
    }
  }
  double psum = 0.0;
  for (double v : p0) {
    require(v >= 0.0, "mdp: negative initial probability");
    psum += v;
  }
  require(std::abs(psum - 1.0) <= 1e-12, "mdp: p0 must sum to 1");
}

std::string MDP::describe() const {
  std::ostringstream os;
  os << "mdp(S=" << n_states << ",A=" << n_actions << ",gamma=" << format_full(gamma) << ")";
  return os.str();
}

MDP MDP::random(int n_states, int n_actions, double gamma, std::uint64_t seed) {
  require(n_states > 0 && n_actions > 0, "mdp: sizes must be positive");
  MDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.reward.resize(static_cast<std::size_t>(n_states) * n_actions);
  m.transition.resize(static_cast<std::size_t>(n_states) * n_actions * n_states);
  m.p0.assign(n_states, 1.0 / n_states);
  CounterRng rng(seed, 0);
  std::uint64_t ctr = 0;
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      m.reward[static_cast<std::size_t>(s) * n_actions + a] = rng.uniform(ctr++, 0);
      // Dirichlet(1,..,1) row via normalized exponentials; strictly positive.
      double* t = m.transition.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states;
      double sum = 0.0;
      for (int sp = 0; sp < n_states; ++sp) {
        double u = rng.uniform(ctr++, 0);
        t[sp] = -std::log1p(-u) + 1e-9;
        sum += t[sp];
      }
      for (int sp = 0; sp < n_states; ++sp) t[sp] /= sum;
    }
  }
  m.validate();
  return m;
}

MDP MDP::baird() {
  // 7-state star: action 0 (dashed) jumps uniformly to an upper state,
  // action 1 (solid) always enters the lower state 6. Zero reward.
  MDP m;
  m.n_states = 7;
  m.n_actions = 2;
  m.gamma = 0.99;
  m.reward.assign(14, 0.0);
  m.transition.assign(7 * 2 * 7, 0.0);
  for (int s = 0; s < 7; ++s) {
    double* dashed = m.transition.data() + (static_cast<std::size_t>(s) * 2 + 0) * 7;
    for (int sp = 0; sp < 6; ++sp) dashed[sp] = 1.0 / 6.0;
    double* solid = m.transition.data() + (static_cast<std::size_t>(s) * 2 + 1) * 7;
    solid[6] = 1.0;
  }
  m.p0.assign(7, 1.0 / 7.0);
  m.validate();
  return m;
}

FeatureMap FeatureMap::one_hot(int n_states, int n_actions) {
  FeatureMap f;
  f.n_states = n_states;
  f.n_actions = n_actions;
  f.dim = n_states * n_actions;
  f.x.assign(static_cast<std::size_t>(f.dim) * f.dim, 0.0);
  for (int i = 0; i < f.dim; ++i) f.x[static_cast<std::size_t>(i) * f.dim + i] = 1.0;
  return f;
}

FeatureMap FeatureMap::random(int n_states, int n_actions, int dim, std::uint64_t seed,
                              double scale) {
  require(dim > 0 && scale > 0.0, "features: dim and scale must be positive");
  FeatureMap f;
  f.n_states = n_states;
  f.n_actions = n_actions;
  f.dim = dim;
  f.x.resize(static_cast<std::size_t>(n_states) * n_actions * dim);
  CounterRng rng(seed, 1);
  std::uint64_t ctr = 0;
  for (int sa = 0; sa < n_states * n_actions; ++sa) {
    double* v = f.x.data() + static_cast<std::size_t>(sa) * dim;
    double nrm2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      v[i] = standard_normal_quantile(rng.uniform(ctr++, 0));
      nrm2 += v[i] * v[i];
    }
    double nrm = std::sqrt(nrm2);
    if (nrm == 0.0) {
      v[0] = scale;
      continue;
    }
    for (int i = 0; i < dim; ++i) v[i] *= scale / nrm;
  }
  return f;
}

FeatureMap FeatureMap::baird() {
  // Classic star features per state, one block per action (d = 16).
  FeatureMap f;
  f.n_states = 7;
  f.n_actions = 2;
  f.dim = 16;
  f.x.assign(7 * 2 * 16, 0.0);
  auto phi = [](int s, double* out8) {
    if (s < 6) {
      out8[s] = 2.0;
      out8[7] = 1.0;
    } else {
      out8[6] = 1.0;
      out8[7] = 2.0;
    }
  };
  for (int s = 0; s < 7; ++s) {
    for (int a = 0; a < 2; ++a) {
      double* v = f.x.data() + (static_cast<std::size_t>(s) * 2 + a) * 16;
      phi(s, v + 8 * a);
    }
  }
  return f;
}

std::string FeatureMap::describe() const {
  std::ostringstream os;
  os << "features(d=" << dim << ",S=" << n_states << ",A=" << n_actions << ")";
  return os.str();
}

void PolicyConfig::validate() const {
  require(epsilon > 0.0 && epsilon < 1.0, "policy: epsilon must lie strictly inside (0, 1)");
  require(kappa0 > 0.0, "policy: kappa0 must be positive");
}

double kappa(const Vector& w, double kappa0) { return kappa0 / std::max(1.0, w.norm()); }

void behavior_policy(const Vector& w, int s, const PolicyConfig& cfg, const FeatureMap& features,
                     std::vector<double>& probs_out) {
  const int na = features.n_actions;
  probs_out.resize(na);
  const double kw = kappa(w, cfg.kappa0);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < na; ++a) {
    probs_out[a] = kw * dot(features.at(s, a), w);
    max_logit = std::max(max_logit, probs_out[a]);
  }
  double denom = 0.0;
  for (int a = 0; a < na; ++a) {
    probs_out[a] = std::exp(probs_out[a] - max_logit);
    denom += probs_out[a];
  }
  const double floor = cfg.epsilon / na;
  for (int a = 0; a < na; ++a) probs_out[a] = floor + (1.0 - cfg.epsilon) * probs_out[a] / denom;
}

double greedy_value(const Vector& w, int s, const FeatureMap& features, int* argmax) {
  double best = -std::numeric_limits<double>::infinity();
  int best_a = 0;
  for (int a = 0; a < features.n_actions; ++a) {
    double q = dot(features.at(s, a), w);
    if (q > best) {
      best = q;
      best_a = a;
    }
  }
  if (argmax) *argmax = best_a;
  return best;
}

double linear_q_step(Vector& w, int s, int a, double r, int s_next, double alpha,
                     const FeatureMap& features, double gamma) {
  const double* xsa = features.at(s, a);
  const double delta = r + gamma * greedy_value(w, s_next, features) - dot(xsa, w);
  for (int i = 0; i < w.size(); ++i) w[i] += alpha * (delta * xsa[i]);
  return delta;
}

LinearQRun run_linear_q(const MDP& mdp, const FeatureMap& features, const PolicyConfig& cfg,
                        const Schedule& schedule, std::int64_t horizon, std::uint64_t seed,
                        std::uint64_t path_id, const RecordOptions& rec, const Vector& w0) {
  mdp.validate();
  cfg.validate();
  require(features.n_states == mdp.n_states && features.n_actions == mdp.n_actions,
          "run_linear_q: feature map shape does not match the mdp");
  require(horizon >= 1, "run_linear_q: horizon must be >= 1");
  require(w0.size() == 0 || w0.size() == features.dim,
          "run_linear_q: w0 dimension does not match the feature map");

  std::vector<std::int64_t> extra(rec.snapshot_at);
  std::sort(extra.begin(), extra.end());
  std::size_t extra_idx = 0;

  LinearQRun run;
  run.seed = seed;
  run.path_id = path_id;
  run.schedule_fingerprint = fnv1a(schedule.describe());

  CounterRng rng(seed, path_id);
  Vector w = w0.size() == features.dim ? w0 : Vector(Vector::Zero(features.dim));
  std::vector<double> probs;
  double running_max = w.size() > 0 ? w.norm() : 0.0;

  auto snapshot = [&](std::int64_t t) {
    run.snapshot_times.push_back(t);
    run.w_at.push_back(w);
    run.w_norm_running_max.push_back(running_max);
  };
  auto want_snapshot = [&](std::int64_t t) {
    bool hit = rec.every > 0 && (t % rec.every == 0);
    while (extra_idx < extra.size() && extra[extra_idx] < t) ++extra_idx;
    if (extra_idx < extra.size() && extra[extra_idx] == t) hit = true;
    return hit;
  };

  int s = sample_discrete(mdp.p0.data(), mdp.n_states, rng.uniform(0, kSubInit));
  if (want_snapshot(0)) snapshot(0);
  for (std::int64_t t = 0; t < horizon; ++t) {
    if (!run.diverged) {
      behavior_policy(w, s, cfg, features, probs);
      const int a =
          sample_discrete(probs.data(), mdp.n_actions, rng.uniform(static_cast<std::uint64_t>(t), kSubSampleA));
      const int s_next = sample_discrete(mdp.row(s, a), mdp.n_states,
                                         rng.uniform(static_cast<std::uint64_t>(t), kSubSampleB));
      const double r = mdp.r(s, a);
      linear_q_step(w, s, a, r, s_next, schedule.alpha_at(t), features, mdp.gamma);
      if (rec.keep_transitions) run.transitions.push_back(Transition{s, a, s_next, r});
      s = s_next;
      double nw2 = w.squaredNorm();
      if (!std::isfinite(nw2) || nw2 > 1e300) {
        run.diverged = true;  // freeze the parameters from here on
        for (int i = 0; i < w.size(); ++i)
          if (!std::isfinite(w[i])) w[i] = 1e150;
      } else {
        running_max = std::max(running_max, std::sqrt(nw2));
      }
    }
    if (want_snapshot(t + 1)) snapshot(t + 1);
  }
  if (run.snapshot_times.empty() || run.snapshot_times.back() != horizon) snapshot(horizon);
  run.w_final = w;
  run.max_w_norm = running_max;
  return run;
}

int SAEmbedding::index_of(int s, int a, int s_next) const {
  std::size_t flat = (static_cast<std::size_t>(s) * n_actions + a) * n_states + s_next;
  return flat < index.size() ? index[flat] : -1;
}

int SAEmbedding::entry_state(int s0) const {
  for (std::size_t flat = 0; flat < index.size(); ++flat) {
    if (index[flat] >= 0 && static_cast<int>(flat % n_states) == s0)
      return index[flat];
  }
  throw std::invalid_argument("sa_embedding: no triple ends in state " + std::to_string(s0));
}

SAEmbedding mdp_to_sa(const MDP& mdp, const FeatureMap& features, const PolicyConfig& cfg) {
  mdp.validate();
  cfg.validate();
  SAEmbedding emb;
  emb.n_states = mdp.n_states;
  emb.n_actions = mdp.n_actions;
  emb.index.assign(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions * mdp.n_states, -1);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int sp = 0; sp < mdp.n_states; ++sp)
        if (mdp.row(s, a)[sp] > 0.0) {
          emb.index[(static_cast<std::size_t>(s) * mdp.n_actions + a) * mdp.n_states + sp] =
              static_cast<int>(emb.y_space.size());
          emb.y_space.push_back({s, a, sp});
        }

  const auto y_space = emb.y_space;  // copies captured by the closures below
  const auto index = emb.index;
  const int S = mdp.n_states, A = mdp.n_actions;
  const MDP mdp_copy = mdp;
  const FeatureMap fm = features;
  const PolicyConfig pc = cfg;

  ParamKernel kernel;
  kernel.n_states = static_cast<int>(y_space.size());
  kernel.dim = features.dim;
  kernel.kernel_fn = [=](const Vector& w) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(y_space.size()),
                            static_cast<Eigen::Index>(y_space.size()));
    std::vector<std::vector<double>> mu(S);
    for (int s = 0; s < S; ++s) behavior_policy(w, s, pc, fm, mu[s]);
    for (std::size_t yi = 0; yi < y_space.size(); ++yi) {
      const int sp = y_space[yi][2];
      for (int a2 = 0; a2 < A; ++a2) {
        const double* trow = mdp_copy.row(sp, a2);
        for (int sp2 = 0; sp2 < S; ++sp2) {
          if (trow[sp2] <= 0.0) continue;
          int yj = index[(static_cast<std::size_t>(sp) * A + a2) * S + sp2];
          p(static_cast<Eigen::Index>(yi), yj) = mu[sp][a2] * trow[sp2];
        }
      }
    }
    return p;
  };
  kernel.sampler = [=](const Vector& w, int y, const StepDraws& draws) {
    const int sp = y_space[static_cast<std::size_t>(y)][2];
    std::vector<double> mu;
    behavior_policy(w, sp, pc, fm, mu);
    const int a2 = sample_discrete(mu.data(), A, draws.a);
    const int sp2 = sample_discrete(mdp_copy.row(sp, a2), S, draws.b);
    return index[(static_cast<std::size_t>(sp) * A + a2) * S + sp2];
  };

  UpdateFn update;
  update.dim = features.dim;
  update.h_fn = [=](const Vector& w, int y) {
    const auto& triple = y_space[static_cast<std::size_t>(y)];
    const double* xsa = fm.at(triple[0], triple[1]);
    double q = 0.0;
    for (int i = 0; i < fm.dim; ++i) q += xsa[i] * w[i];
    const double delta =
        mdp_copy.r(triple[0], triple[1]) + mdp_copy.gamma * greedy_value(w, triple[2], fm) - q;
    Vector h(fm.dim);
    for (int i = 0; i < fm.dim; ++i) h[i] = delta * xsa[i];
    return h;
  };
  // Analytic Lipschitz/boundedness constant over the finite state space.
  double lip = 0.0;
  std::vector<double> xnorm(static_cast<std::size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double* v = features.at(s, a);
      double n2 = 0.0;
      for (int i = 0; i < features.dim; ++i) n2 += v[i] * v[i];
      xnorm[static_cast<std::size_t>(s) * A + a] = std::sqrt(n2);
    }
  for (const auto& y : emb.y_space) {
    double xsa = xnorm[static_cast<std::size_t>(y[0]) * A + y[1]];
    double xmax = 0.0;
    for (int b = 0; b < A; ++b) xmax = std::max(xmax, xnorm[static_cast<std::size_t>(y[2]) * A + b]);
    lip = std::max(lip, xsa * (mdp.gamma * xmax + xsa));
    lip = std::max(lip, std::abs(mdp.r(y[0], y[1])) * xsa);
  }
  update.lip_h = lip;

  emb.kernel = std::move(kernel);
  emb.update = std::move(update);
  return emb;
}

std::vector<double> q_values(const Vector& w, const FeatureMap& features) {
  std::vector<double> q(static_cast<std::size_t>(features.n_states) * features.n_actions);
  for (int s = 0; s < features.n_states; ++s)
    for (int a = 0; a < features.n_actions; ++a)
      q[static_cast<std::size_t>(s) * features.n_actions + a] = dot(features.at(s, a), w);
  return q;
}

SARun sa_run(const ParamKernel& kernel, const UpdateFn& update, const Schedule& schedule,
             const Vector& w0, int y0, std::int64_t horizon, std::uint64_t seed,
             std::uint64_t path_id) {
  require(y0 >= 0 && y0 < kernel.n_states, "sa_run: invalid initial state");
  require(horizon >= 1, "sa_run: horizon must be >= 1");
  SARun run;
  run.seed = seed;
  run.path_id = path_id;
  run.y_states.reserve(static_cast<std::size_t>(horizon) + 1);
  run.w_at.reserve(static_cast<std::size_t>(horizon) + 1);
  CounterRng rng(seed, path_id);
  Vector w = w0;
  int y = y0;
  run.y_states.push_back(y);
  run.w_at.push_back(w);
  for (std::int64_t t = 0; t < horizon; ++t) {
    if (!run.diverged) {
      StepDraws draws{rng.uniform(static_cast<std::uint64_t>(t), kSubSampleA),
                      rng.uniform(static_cast<std::uint64_t>(t), kSubSampleB)};
      y = sample_step(kernel, w, y, draws);
      Vector h = update.h_fn(w, y);
      const double alpha = schedule.alpha_at(t);
      for (int i = 0; i < w.size(); ++i) w[i] += alpha * h[i];
      double nw2 = w.squaredNorm();
      if (!std::isfinite(nw2) || nw2 > 1e300) {
        run.diverged = true;
        for (int i = 0; i < w.size(); ++i)
          if (!std::isfinite(w[i])) w[i] = 1e150;
      }
    }
    run.y_states.push_back(y);
    run.w_at.push_back(w);
  }
  return run;
}

void MDP::save(const std::string& file, const FeatureMap& features) const {
  validate();
  std::ofstream out(file);
  if (!out) throw std::runtime_error("mdp save: cannot open " + file);
  out << "states " << n_states << "\n";
  out << "actions " << n_actions << "\n";
  out << "gamma " << format_full(gamma) << "\n";
  out << "reward\n";
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) out << (a ? " " : "") << format_full(r(s, a));
    out << "\n";
  }
  out << "transition\n";
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      const double* t = row(s, a);
      for (int sp = 0; sp < n_states; ++sp) out << (sp ? " " : "") << format_full(t[sp]);
      out << "\n";
    }
  out << "p0\n";
  for (int s = 0; s < n_states; ++s) out << (s ? " " : "") << format_full(p0[s]);
  out << "\n";
  out << "features " << features.dim << "\n";
  for (int sa = 0; sa < n_states * n_actions; ++sa) {
    const double* v = features.x.data() + static_cast<std::size_t>(sa) * features.dim;
    for (int i = 0; i < features.dim; ++i) out << (i ? " " : "") << format_full(v[i]);
    out << "\n";
  }
}

namespace {

void expect_section(std::ifstream& in, const std::string& name) {
  std::string tok;
  in >> tok;
  if (tok != name)
    throw std::runtime_error("mdp load: expected section '" + name + "', found '" + tok + "'");
}

}  // namespace

MDP MDP::load(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("mdp load: cannot open " + file);
  MDP m;
  expect_section(in, "states");
  in >> m.n_states;
  expect_section(in, "actions");
  in >> m.n_actions;
  expect_section(in, "gamma");
  in >> m.gamma;
  require(m.n_states > 0 && m.n_actions > 0, "mdp load: bad sizes");
  m.reward.resize(static_cast<std::size_t>(m.n_states) * m.n_actions);
  m.transition.resize(static_cast<std::size_t>(m.n_states) * m.n_actions * m.n_states);
  m.p0.resize(m.n_states);
  expect_section(in, "reward");
  for (auto& v : m.reward) in >> v;
  expect_section(in, "transition");
  for (auto& v : m.transition) in >> v;
  expect_section(in, "p0");
  for (auto& v : m.p0) in >> v;
  if (!in) throw std::runtime_error("mdp load: truncated file " + file);
  m.validate();
  return m;
}

FeatureMap FeatureMap::load(const std::string& file, int* out_states, int* out_actions) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("features load: cannot open " + file);
  std::string tok;
  int S = 0, A = 0;
  double skip = 0.0;
  in >> tok >> S;       // states
  in >> tok >> A;       // actions
  in >> tok >> skip;    // gamma
  in >> tok;            // reward
  for (int i = 0; i < S * A; ++i) in >> skip;
  in >> tok;  // transition
  for (int i = 0; i < S * A * S; ++i) in >> skip;
  in >> tok;  // p0
  for (int i = 0; i < S; ++i) in >> skip;
  in >> tok;  // features
  FeatureMap f;
  f.n_states = S;
  f.n_actions = A;
  in >> f.dim;
  f.x.resize(static_cast<std::size_t>(S) * A * f.dim);
  for (auto& v : f.x) in >> v;
  if (!in) throw std::runtime_error("features load: truncated file " + file);
  if (out_states) *out_states = S;
  if (out_actions) *out_actions = A;
  return f;
}

}  // namespace rslab
