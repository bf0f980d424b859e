#include "rslab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace rslab {

using nlohmann::json;

volatile bool g_cancel_requested = false;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::RsSpecial: return "rs_special";
    case ExperimentKind::Example1: return "example1";
    case ExperimentKind::RsGeneral: return "rs_general";
    case ExperimentKind::Skeleton: return "skeleton";
    case ExperimentKind::LinearQ: return "linear_q";
    case ExperimentKind::SaGeneric: return "sa_generic";
    case ExperimentKind::Analyze: return "analyze";
  }
  return "?";
}

Schedule ScheduleConfig::build() const {
  switch (kind) {
    case ScheduleKind::LR1: return Schedule::lr1(c_alpha, nu);
    case ScheduleKind::LR2: return Schedule::lr2(c_alpha, nu);
    case ScheduleKind::Table: return Schedule::table(table);
  }
  throw std::logic_error("schedule config: bad kind");
}

StepSeq SeqConfig::build(const ScheduleConfig& sched) const {
  if (kind == "power_law") return StepSeq::power_law(c, p, offset);
  if (kind == "schedule") return StepSeq::from_schedule(sched.build());
  if (kind == "table") return StepSeq::table(table);
  throw std::invalid_argument("seq config: unknown kind '" + kind + "'");
}

namespace {

class FieldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw FieldError(path + ": " + msg);
}

template <typename T>
T get_or(const json& j, const std::string& key, T def, const std::string& path) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, std::string("bad value (") + e.what() + ")");
  }
}

ScheduleKind parse_schedule_kind(const std::string& s, const std::string& path) {
  if (s == "lr1") return ScheduleKind::LR1;
  if (s == "lr2") return ScheduleKind::LR2;
  if (s == "table") return ScheduleKind::Table;
  fail(path, "unknown schedule kind '" + s + "' (expected lr1 | lr2 | table)");
}

ExperimentKind parse_kind(const std::string& s) {
  if (s == "rs_special") return ExperimentKind::RsSpecial;
  if (s == "example1") return ExperimentKind::Example1;
  if (s == "rs_general") return ExperimentKind::RsGeneral;
  if (s == "skeleton") return ExperimentKind::Skeleton;
  if (s == "linear_q") return ExperimentKind::LinearQ;
  if (s == "sa_generic") return ExperimentKind::SaGeneric;
  if (s == "analyze") return ExperimentKind::Analyze;
  fail("experiment", "unknown kind '" + s + "'");
}

SeqConfig parse_seq(const json& j, const std::string& path, SeqConfig def) {
  if (j.is_null()) return def;
  SeqConfig s = def;
  s.kind = get_or<std::string>(j, "kind", def.kind, path);
  s.c = get_or<double>(j, "c", def.c, path);
  s.p = get_or<double>(j, "p", def.p, path);
  s.offset = get_or<double>(j, "offset", def.offset, path);
  s.table = get_or<std::vector<double>>(j, "table", def.table, path);
  if (s.kind != "power_law" && s.kind != "schedule" && s.kind != "table")
    fail(path + ".kind", "expected power_law | schedule | table");
  return s;
}

}  // namespace

ExperimentConfig validate_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  if (!j.contains("experiment")) fail("experiment", "missing required field");
  c.kind = parse_kind(j.at("experiment").get<std::string>());

  if (j.contains("schedule")) {
    const json& js = j.at("schedule");
    c.schedule.kind = parse_schedule_kind(get_or<std::string>(js, "kind", "lr1", "schedule"),
                                          "schedule.kind");
    c.schedule.c_alpha = get_or<double>(js, "c_alpha", 1.0, "schedule");
    c.schedule.nu = get_or<double>(js, "nu", 0.8, "schedule");
    c.schedule.table = get_or<std::vector<double>>(js, "table", {}, "schedule");
    if (c.schedule.c_alpha <= 0.0) fail("schedule.c_alpha", "must be positive");
    if (c.schedule.kind == ScheduleKind::LR1 &&
        !(c.schedule.nu > 2.0 / 3.0 && c.schedule.nu <= 1.0))
      fail("schedule.nu", "lr1 requires nu in (2/3, 1], got " + format_full(c.schedule.nu));
    if (c.schedule.kind == ScheduleKind::LR2 && !(c.schedule.nu > 0.0 && c.schedule.nu < 1.0))
      fail("schedule.nu", "lr2 requires nu in (0, 1), got " + format_full(c.schedule.nu));
    if (c.schedule.kind == ScheduleKind::Table && c.schedule.table.empty())
      fail("schedule.table", "table kind requires values");
  }
  if (j.contains("regime")) {
    const json& jr = j.at("regime");
    if (jr.contains("nu1")) c.regime.nu1 = jr.at("nu1").get<double>();
    if (jr.contains("nu2")) c.regime.nu2 = jr.at("nu2").get<double>();
  }
  if (j.contains("process")) {
    const json& jp = j.at("process");
    c.process.alpha = get_or<double>(jp, "alpha", 1.0, "process");
    c.process.xi = get_or<double>(jp, "xi", 1.0, "process");
    c.process.sigma = get_or<double>(jp, "sigma", 0.0, "process");
    c.process.noise = get_or<std::string>(jp, "noise", "deterministic", "process");
    c.process.z0 = get_or<double>(jp, "z0", 0.0, "process");
    if (jp.contains("growth_b") && !jp.at("growth_b").is_null())
      c.process.growth_b = jp.at("growth_b").get<double>();
    if (jp.contains("t_seq")) c.process.t_seq = parse_seq(jp.at("t_seq"), "process.t_seq", c.process.t_seq);
    if (c.process.alpha <= 0.0) fail("process.alpha", "must be positive");
    if (c.process.xi < 0.0) fail("process.xi", "must be non-negative");
    if (c.process.sigma < 0.0 || c.process.sigma > 1.0) fail("process.sigma", "must lie in [0, 1]");
    if (c.process.z0 < 0.0) fail("process.z0", "must be non-negative");
    if (c.process.noise != "deterministic" && c.process.noise != "bounded_multiplicative" &&
        c.process.noise != "example1")
      fail("process.noise", "expected deterministic | bounded_multiplicative | example1");
  }
  if (j.contains("rs_general")) {
    const json& jg = j.at("rs_general");
    c.rs_general.a_seq = parse_seq(jg.contains("a") ? jg.at("a") : json(), "rs_general.a", c.rs_general.a_seq);
    c.rs_general.b_seq = parse_seq(jg.contains("b") ? jg.at("b") : json(), "rs_general.b", c.rs_general.b_seq);
    c.rs_general.c_seq = parse_seq(jg.contains("c") ? jg.at("c") : json(), "rs_general.c", c.rs_general.c_seq);
    c.rs_general.threshold_b = get_or<double>(jg, "threshold_b", 2.0, "rs_general");
    c.rs_general.require_divergent_c = get_or<bool>(jg, "require_divergent_c", true, "rs_general");
    c.rs_general.z0 = get_or<double>(jg, "z0", 0.0, "rs_general");
    if (c.rs_general.threshold_b < 0.0) fail("rs_general.threshold_b", "must be non-negative");
  }
  if (j.contains("mdp")) {
    const json& jm = j.at("mdp");
    c.mdp.builtin = get_or<std::string>(jm, "builtin", "random", "mdp");
    c.mdp.file = get_or<std::string>(jm, "file", "", "mdp");
    c.mdp.n_states = get_or<int>(jm, "n_states", 5, "mdp");
    c.mdp.n_actions = get_or<int>(jm, "n_actions", 2, "mdp");
    c.mdp.gamma = get_or<double>(jm, "gamma", 0.9, "mdp");
    c.mdp.gen_seed = get_or<std::uint64_t>(jm, "gen_seed", 7, "mdp");
    c.mdp.features = get_or<std::string>(jm, "features", "random", "mdp");
    c.mdp.feature_dim = get_or<int>(jm, "feature_dim", 3, "mdp");
    c.mdp.feature_seed = get_or<std::uint64_t>(jm, "feature_seed", 11, "mdp");
    c.mdp.feature_scale = get_or<double>(jm, "feature_scale", 0.8, "mdp");
    if (c.mdp.gamma < 0.0 || c.mdp.gamma >= 1.0) fail("mdp.gamma", "must lie in [0, 1)");
    if (c.mdp.n_states <= 0 || c.mdp.n_actions <= 0) fail("mdp.n_states", "sizes must be positive");
    if (c.mdp.feature_dim <= 0) fail("mdp.feature_dim", "must be positive");
  }
  if (j.contains("policy")) {
    const json& jp = j.at("policy");
    c.policy.epsilon = get_or<double>(jp, "epsilon", 0.1, "policy");
    c.policy.kappa0 = get_or<double>(jp, "kappa0", 1.0, "policy");
    if (!(c.policy.epsilon > 0.0 && c.policy.epsilon < 1.0))
      fail("policy.epsilon", "must lie strictly inside (0, 1), got " + format_full(c.policy.epsilon));
    if (!(c.policy.kappa0 > 0.0)) fail("policy.kappa0", "must be positive");
  }
  c.horizon = get_or<std::int64_t>(j, "horizon", 100000, "");
  c.paths = get_or<std::int64_t>(j, "paths", 100, "");
  c.seed = get_or<std::uint64_t>(j, "seed", 20250801ULL, "");
  c.threads = get_or<int>(j, "threads", 0, "");
  c.out_dir = get_or<std::string>(j, "out", "out", "");
  if (c.horizon < 1) fail("horizon", "must be >= 1");
  if (c.paths < 1) fail("paths", "must be >= 1");
  if (c.threads < 0) fail("threads", "must be >= 0");

  if (j.contains("analysis")) {
    const json& ja = j.at("analysis");
    c.analysis.rate_eta = get_or<double>(ja, "rate_eta", 0.5, "analysis");
    c.analysis.rate_tol = get_or<double>(ja, "rate_tol", 0.0, "analysis");
    c.analysis.delta_grid = get_or<std::vector<double>>(ja, "delta_grid", {0.1}, "analysis");
    c.analysis.envelope_k = get_or<int>(ja, "envelope_k", 1, "analysis");
    c.analysis.envelope_b_cap = get_or<double>(ja, "envelope_b_cap", 1.0, "analysis");
    c.analysis.moments = get_or<std::vector<double>>(ja, "moments", {1.0, 2.0}, "analysis");
    c.analysis.window_fraction = get_or<double>(ja, "window_fraction", 0.5, "analysis");
    c.analysis.dist_hi = get_or<double>(ja, "dist_hi", 1.0, "analysis");
    c.analysis.q_grid =
        get_or<std::vector<double>>(ja, "q_grid", {0.05, 0.25, 0.5, 0.75, 0.95}, "analysis");
    if (c.analysis.rate_eta <= 0.0) fail("analysis.rate_eta", "must be positive");
    for (double d : c.analysis.delta_grid)
      if (!(d > 0.0 && d < 1.0)) fail("analysis.delta_grid", "deltas must lie in (0, 1)");
    if (c.analysis.dist_hi < 0.0) fail("analysis.dist_hi", "must be non-negative");
  }
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return validate_config(ss.str());
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["experiment"] = to_string(kind);
  j["schedule"] = {{"kind", rslab::to_string(schedule.kind)},
                   {"c_alpha", schedule.c_alpha},
                   {"nu", schedule.nu},
                   {"table", schedule.table}};
  json jr;
  if (regime.nu1) jr["nu1"] = *regime.nu1;
  if (regime.nu2) jr["nu2"] = *regime.nu2;
  j["regime"] = jr;
  j["process"] = {{"alpha", process.alpha},
                  {"xi", process.xi},
                  {"sigma", process.sigma},
                  {"noise", process.noise},
                  {"z0", process.z0},
                  {"t_seq", {{"kind", process.t_seq.kind},
                             {"c", process.t_seq.c},
                             {"p", process.t_seq.p},
                             {"offset", process.t_seq.offset}}}};
  if (process.growth_b) j["process"]["growth_b"] = *process.growth_b;
  j["rs_general"] = {{"threshold_b", rs_general.threshold_b},
                     {"require_divergent_c", rs_general.require_divergent_c},
                     {"z0", rs_general.z0}};
  j["mdp"] = {{"builtin", mdp.builtin},       {"file", mdp.file},
              {"n_states", mdp.n_states},     {"n_actions", mdp.n_actions},
              {"gamma", mdp.gamma},           {"gen_seed", mdp.gen_seed},
              {"features", mdp.features},     {"feature_dim", mdp.feature_dim},
              {"feature_seed", mdp.feature_seed}, {"feature_scale", mdp.feature_scale}};
  j["policy"] = {{"epsilon", policy.epsilon}, {"kappa0", policy.kappa0}};
  j["horizon"] = horizon;
  j["paths"] = paths;
  j["seed"] = seed;
  j["threads"] = threads;
  j["analysis"] = {{"rate_eta", analysis.rate_eta},
                   {"rate_tol", analysis.rate_tol},
                   {"delta_grid", analysis.delta_grid},
                   {"envelope_k", analysis.envelope_k},
                   {"envelope_b_cap", analysis.envelope_b_cap},
                   {"moments", analysis.moments},
                   {"window_fraction", analysis.window_fraction},
                   {"dist_hi", analysis.dist_hi},
                   {"q_grid", analysis.q_grid}};
  j["out"] = out_dir;
  return j.dump(2);
}

void parallel_paths(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, 64));
  if (threads == 1 || n <= 1) {
    for (std::int64_t i = 0; i < n && !g_cancel_requested; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        std::int64_t i = next.fetch_add(1);
        if (i >= n || g_cancel_requested) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

bool OutputBundle::all_pass() const {
  for (const auto& v : verdicts)
    if (!v.pass) return false;
  return true;
}

namespace {

MDP build_mdp(const MdpConfig& mc) {
  if (!mc.file.empty()) return MDP::load(mc.file);
  if (mc.builtin == "baird") return MDP::baird();
  if (mc.builtin == "random") return MDP::random(mc.n_states, mc.n_actions, mc.gamma, mc.gen_seed);
  throw std::invalid_argument("mdp.builtin: unknown builtin '" + mc.builtin + "'");
}

FeatureMap build_features(const MdpConfig& mc, const MDP& mdp) {
  if (mc.features == "file") return FeatureMap::load(mc.file);
  if (mc.features == "baird") return FeatureMap::baird();
  if (mc.features == "one_hot") return FeatureMap::one_hot(mdp.n_states, mdp.n_actions);
  if (mc.features == "random")
    return FeatureMap::random(mdp.n_states, mdp.n_actions, mc.feature_dim, mc.feature_seed,
                              mc.feature_scale);
  throw std::invalid_argument("mdp.features: unknown feature kind '" + mc.features + "'");
}

RSSpecialSpec build_rs_spec(const ExperimentConfig& c) {
  RSSpecialSpec spec;
  spec.alpha = c.process.alpha;
  spec.xi = c.process.xi;
  spec.t_seq = c.process.t_seq.build(c.schedule);
  spec.growth_b = c.process.growth_b.value_or(c.process.alpha + c.process.xi + c.process.sigma);
  return spec;
}

NoiseModel build_noise(const ProcessConfig& pc) {
  if (pc.noise == "deterministic") return NoiseModel::deterministic();
  if (pc.noise == "bounded_multiplicative") return NoiseModel::bounded_multiplicative(pc.sigma);
  return NoiseModel::example1();
}

std::vector<std::int64_t> log_grid(std::int64_t horizon, std::size_t points) {
  std::vector<std::int64_t> times{0};
  for (std::size_t i = 1; i < points; ++i) {
    double f = static_cast<double>(i) / static_cast<double>(points - 1);
    auto t = static_cast<std::int64_t>(std::llround(std::pow(static_cast<double>(horizon), f)));
    if (t > times.back()) times.push_back(std::min(t, horizon));
  }
  if (times.back() != horizon) times.push_back(horizon);
  return times;
}

struct BundleWriter {
  explicit BundleWriter(const ExperimentConfig& c) : config(c) {
    std::filesystem::create_directories(c.out_dir);
    bundle.dir = c.out_dir;
    bundle.config_fingerprint = c.fingerprint();
    start = std::chrono::steady_clock::now();
  }

  std::string file(const std::string& name) {
    bundle.files.push_back(name);
    return (std::filesystem::path(config.out_dir) / name).string();
  }

  void verdict(const std::string& id, bool pass, const std::string& detail) {
    bundle.verdicts.push_back(Verdict{id, pass, detail});
  }

  void finish() {
    bundle.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bundle.partial = g_cancel_requested;
    json manifest;
    manifest["config"] = json::parse(config.canonical_json());
    manifest["config_fingerprint"] = bundle.config_fingerprint;
    manifest["seed"] = config.seed;
    manifest["paths"] = config.paths;
    manifest["wall_seconds"] = bundle.wall_seconds;
    manifest["partial"] = bundle.partial;
    manifest["files"] = bundle.files;
    std::ofstream mf(std::filesystem::path(config.out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";

    json summary;
    for (const auto& v : bundle.verdicts)
      summary["verdicts"].push_back({{"id", v.id}, {"pass", v.pass}, {"detail", v.detail}});
    summary["all_pass"] = bundle.all_pass();
    std::ofstream sf(std::filesystem::path(config.out_dir) / "summary.json");
    sf << summary.dump(2) << "\n";
  }

  const ExperimentConfig& config;
  OutputBundle bundle;
  std::chrono::steady_clock::time_point start;
};

void run_rs_special(const ExperimentConfig& c, BundleWriter& bw) {
  RSSpecialSpec spec = build_rs_spec(c);
  NoiseModel noise = build_noise(c.process);
  const double hi = c.process.alpha > 0.0 ? c.process.xi / c.process.alpha : c.analysis.dist_hi;

  std::vector<double> final_dist(static_cast<std::size_t>(c.paths));
  std::vector<double> tail_max(static_cast<std::size_t>(c.paths));
  std::vector<char> growth_ok(static_cast<std::size_t>(c.paths), 0);
  std::vector<char> diverged(static_cast<std::size_t>(c.paths), 0);
  const std::int64_t tail_lo = c.horizon - c.horizon / 10;

  parallel_paths(c.paths, c.threads, [&](std::int64_t i) {
    Path p = simulate_rs_special(spec, noise, c.process.z0, c.horizon, c.seed,
                                 static_cast<std::uint64_t>(i));
    double tm = 0.0;
    for (std::int64_t n = tail_lo; n <= c.horizon; ++n)
      tm = std::max(tm, dist_to_interval(p.values[static_cast<std::size_t>(n)], hi));
    tail_max[static_cast<std::size_t>(i)] = tm;
    final_dist[static_cast<std::size_t>(i)] =
        dist_to_interval(p.values.back(), hi);
    growth_ok[static_cast<std::size_t>(i)] =
        verify_growth_condition(p, spec.t_seq, spec.growth_b).ok ? 1 : 0;
    diverged[static_cast<std::size_t>(i)] = p.diverged ? 1 : 0;
  });

  double worst_tail = 0.0, worst_final = 0.0;
  bool all_growth = true, any_diverged = false;
  for (std::int64_t i = 0; i < c.paths; ++i) {
    worst_tail = std::max(worst_tail, tail_max[static_cast<std::size_t>(i)]);
    worst_final = std::max(worst_final, final_dist[static_cast<std::size_t>(i)]);
    all_growth = all_growth && growth_ok[static_cast<std::size_t>(i)];
    any_diverged = any_diverged || diverged[static_cast<std::size_t>(i)];
  }
  if (any_diverged)
    throw std::runtime_error("rs_special: a path diverged in a stability experiment");

  bw.verdict("rs_special_containment", worst_tail <= 0.05,
             "ensemble max distance over final 10% = " + format_full(worst_tail));
  bw.verdict("rs_special_growth", all_growth,
             std::string("growth condition with b = ") + format_full(spec.growth_b) +
                 (all_growth ? " holds on all paths" : " violated"));

  // Representative path + ensemble quantiles on a log time grid.
  Path p0 = simulate_rs_special(spec, noise, c.process.z0, c.horizon, c.seed, 0);
  write_path_csv(p0, bw.file("path0.csv"));
  auto times = log_grid(c.horizon, 200);
  auto series = [&](std::size_t i) {
    Path p = simulate_rs_special(spec, noise, c.process.z0, c.horizon, c.seed,
                                 static_cast<std::uint64_t>(i));
    std::vector<double> d(p.values.size());
    for (std::size_t n = 0; n < p.values.size(); ++n) d[n] = dist_to_interval(p.values[n], hi);
    return d;
  };
  std::size_t stat_paths = std::min<std::int64_t>(c.paths, 200);
  EnsembleStats st = compute_ensemble_stats(series, stat_paths, times, c.analysis.q_grid, 2.0);
  st.seed_base = c.seed;
  write_ensemble_csv(st, bw.file("distance_stats.csv"));
}

void run_example1(const ExperimentConfig& c, BundleWriter& bw) {
  std::vector<double> run_max(static_cast<std::size_t>(c.paths));
  std::vector<double> spike_count(static_cast<std::size_t>(c.paths));
  parallel_paths(c.paths, c.threads, [&](std::int64_t i) {
    Path p = simulate_example1(c.horizon, c.seed, static_cast<std::uint64_t>(i));
    double m = 0.0;
    for (double z : p.values) m = std::max(m, z);
    run_max[static_cast<std::size_t>(i)] = m;
    spike_count[static_cast<std::size_t>(i)] = static_cast<double>(p.spike_steps.size());
  });
  std::int64_t over = 0;
  for (double m : run_max)
    if (m > 5.0) ++over;
  double frac = static_cast<double>(over) / static_cast<double>(c.paths);

  // Construction audit of the conditional-mean identity: p_n A_n == T_n.
  double worst_gap = 0.0;
  for (std::int64_t n = 0; n < c.horizon; ++n) {
    double np1 = static_cast<double>(n) + 1.0;
    double gap = std::abs(std::pow(np1, 0.25) * (1.0 / np1) - std::pow(np1, 0.25) / np1);
    worst_gap = std::max(worst_gap, gap);
  }
  double h_n = 0.0;
  for (std::int64_t n = 0; n < c.horizon; ++n) h_n += 1.0 / (static_cast<double>(n) + 1.0);
  double mean_spikes = tree_sum(spike_count) / static_cast<double>(c.paths);

  bw.verdict("example1_divergence", frac >= 0.90,
             "fraction of paths with running max > 5: " + format_full(frac));
  bw.verdict("example1_mean_identity", worst_gap == 0.0,
             "max |p_n A_n - T_n| over the horizon = " + format_full(worst_gap));
  bw.verdict("example1_spike_frequency", std::abs(mean_spikes / h_n - 1.0) <= 0.1,
             "mean spike count / H_N = " + format_full(mean_spikes / h_n));

  std::ofstream out(bw.file("running_max.csv"));
  out << "path,running_max,spikes\n";
  for (std::int64_t i = 0; i < c.paths; ++i)
    out << i << ',' << format_full(run_max[static_cast<std::size_t>(i)]) << ','
        << format_full(spike_count[static_cast<std::size_t>(i)]) << "\n";
}

void run_rs_general(const ExperimentConfig& c, BundleWriter& bw) {
  RSGeneralSpec spec;
  spec.a_seq = c.rs_general.a_seq.build(c.schedule);
  spec.b_seq = c.rs_general.b_seq.build(c.schedule);
  spec.c_seq = c.rs_general.c_seq.build(c.schedule);
  spec.threshold_b = c.rs_general.threshold_b;
  spec.require_divergent_c = c.rs_general.require_divergent_c;

  std::vector<double> tail_mean(static_cast<std::size_t>(c.paths));
  const std::int64_t tail_lo = c.horizon - c.horizon / 10;
  parallel_paths(c.paths, c.threads, [&](std::int64_t i) {
    Path p = simulate_rs_general(spec, c.rs_general.z0, c.horizon, c.seed,
                                 static_cast<std::uint64_t>(i));
    KahanSum acc;
    for (std::int64_t n = tail_lo; n <= c.horizon; ++n)
      acc.add(dist_to_interval(p.values[static_cast<std::size_t>(n)], spec.threshold_b));
    tail_mean[static_cast<std::size_t>(i)] =
        acc.value() / static_cast<double>(c.horizon - tail_lo + 1);
  });
  double mean = tree_sum(tail_mean) / static_cast<double>(c.paths);
  bw.verdict("rs_general_containment", mean <= 0.05,
             "tail mean distance to [0, B] = " + format_full(mean));
  std::ofstream out(bw.file("tail_mean.csv"));
  out << "path,tail_mean_distance\n";
  for (std::int64_t i = 0; i < c.paths; ++i)
    out << i << ',' << format_full(tail_mean[static_cast<std::size_t>(i)]) << "\n";
}

void run_skeleton(const ExperimentConfig& c, BundleWriter& bw) {
  Schedule sched = c.schedule.build();
  Regime regime = select_regime(c.schedule.kind, c.schedule.nu, c.regime.nu1, c.regime.nu2);
  SkeletonTimescale sk = build_skeleton(sched, regime, c.horizon);
  write_skeleton_csv(sk, bw.file("skeleton.csv"));

  bool bracket = true;
  for (std::size_t m = 0; m < sk.segments() && bracket; ++m) {
    double upper = sk.targets[m] + sched.alpha_at(sk.anchors[m + 1] - 1);
    bracket = sk.realized[m] >= sk.targets[m] && sk.realized[m] <= upper + 1e-12;
  }
  bool two_t = sk.m0 >= 0;
  for (std::size_t m = sk.m0 >= 0 ? static_cast<std::size_t>(sk.m0) : 0;
       two_t && m < sk.segments(); ++m)
    two_t = sk.realized[m] <= 2.0 * sk.targets[m];

  double fit_c = 0.0, fit_c_half = 0.0;
  if (sk.m0 >= 0) {
    for (std::size_t m = static_cast<std::size_t>(sk.m0); m < sk.segments(); ++m) {
      double ratio = sched.alpha_at(sk.anchors[m]) / (sk.targets[m] * sk.targets[m]);
      fit_c = std::max(fit_c, ratio);
      if (m < sk.segments() / 2) fit_c_half = std::max(fit_c_half, ratio);
    }
  }
  bool stable = fit_c > 0.0 && fit_c_half >= 0.9 * fit_c;

  bw.verdict("skeleton_bracketing", bracket, "T_m <= alpha_bar_m <= T_m + alpha_{t_{m+1}-1}");
  bw.verdict("skeleton_two_t", two_t && sk.m0 >= 0 && sk.m0 <= 100,
             "alpha_bar <= 2T for all m >= m0 = " + std::to_string(sk.m0));
  bw.verdict("skeleton_alpha_bound", stable,
             "fitted C in alpha_t <= C T_m^2: " + format_full(fit_c) +
                 " (first-half fit " + format_full(fit_c_half) + ")");
}

void run_linear_q_experiment(const ExperimentConfig& c, BundleWriter& bw) {
  MDP mdp = build_mdp(c.mdp);
  FeatureMap fm = build_features(c.mdp, mdp);
  Schedule sched = c.schedule.build();
  Regime regime = select_regime(c.schedule.kind, c.schedule.nu, c.regime.nu1, c.regime.nu2);
  SkeletonTimescale sk = build_skeleton(sched, regime, c.horizon);

  RecordOptions rec;
  rec.every = 0;
  rec.snapshot_at.assign(sk.anchors.begin(), sk.anchors.end());
  rec.snapshot_at.push_back(c.horizon / 2);

  std::vector<double> maxima(static_cast<std::size_t>(c.paths));
  std::vector<double> half_max(static_cast<std::size_t>(c.paths));
  std::vector<char> diverged(static_cast<std::size_t>(c.paths), 0);
  std::vector<std::int64_t> incr_m0(static_cast<std::size_t>(c.paths), -1);
  std::vector<double> final_norm(static_cast<std::size_t>(c.paths));

  parallel_paths(c.paths, c.threads, [&](std::int64_t i) {
    LinearQRun run = run_linear_q(mdp, fm, c.policy, sched, c.horizon, c.seed,
                                  static_cast<std::uint64_t>(i), rec);
    maxima[static_cast<std::size_t>(i)] = run.max_w_norm;
    diverged[static_cast<std::size_t>(i)] = run.diverged ? 1 : 0;
    final_norm[static_cast<std::size_t>(i)] = run.w_final.norm();
    // Running max at the halfway snapshot.
    double hm = 0.0;
    for (std::size_t k = 0; k < run.snapshot_times.size(); ++k)
      if (run.snapshot_times[k] <= c.horizon / 2) hm = run.w_norm_running_max[k];
    half_max[static_cast<std::size_t>(i)] = hm;
    // Skeleton increment bound on z_m = ||w_{t_m}||^2: find the first m after
    // which |z_{m+1} - z_m| <= 16 T_m (z_m + 1) holds to the end.
    std::vector<double> z;
    for (std::size_t k = 0; k < run.snapshot_times.size(); ++k) {
      if (std::binary_search(sk.anchors.begin(), sk.anchors.end(), run.snapshot_times[k]))
        z.push_back(run.w_at[k].squaredNorm());
    }
    std::int64_t first_ok = 0;
    for (std::size_t m = 0; m + 1 < z.size(); ++m) {
      if (std::abs(z[m + 1] - z[m]) > 16.0 * sk.targets[m] * (z[m] + 1.0))
        first_ok = static_cast<std::int64_t>(m) + 1;
    }
    incr_m0[static_cast<std::size_t>(i)] = first_ok;
  });

  bool bounded = true, none_diverged = true, plateau = true;
  double worst_growth = 0.0;
  std::int64_t worst_m0 = 0;
  for (std::int64_t i = 0; i < c.paths; ++i) {
    bounded = bounded && maxima[static_cast<std::size_t>(i)] < 1e6;
    none_diverged = none_diverged && !diverged[static_cast<std::size_t>(i)];
    double g = half_max[static_cast<std::size_t>(i)] > 0.0
                   ? maxima[static_cast<std::size_t>(i)] / half_max[static_cast<std::size_t>(i)] - 1.0
                   : 0.0;
    worst_growth = std::max(worst_growth, g);
    plateau = plateau && g < 0.01;
    worst_m0 = std::max(worst_m0, incr_m0[static_cast<std::size_t>(i)]);
  }
  bw.verdict("linear_q_bounded", bounded && none_diverged,
             "all seeds bounded, max ||w|| = " +
                 format_full(*std::max_element(maxima.begin(), maxima.end())));
  bw.verdict("linear_q_plateau", plateau,
             "worst running-max growth over final 50%: " + format_full(worst_growth));
  bw.verdict("linear_q_increment",
             worst_m0 <= static_cast<std::int64_t>(sk.segments() / 2),
             "skeleton increment bound holds from m0 = " + std::to_string(worst_m0) + " of " +
                 std::to_string(sk.segments()) + " segments");

  std::ofstream out(bw.file("w_norms.csv"));
  out << "path,max_w_norm,final_w_norm,diverged,increment_m0\n";
  for (std::int64_t i = 0; i < c.paths; ++i)
    out << i << ',' << format_full(maxima[static_cast<std::size_t>(i)]) << ','
        << format_full(final_norm[static_cast<std::size_t>(i)]) << ','
        << static_cast<int>(diverged[static_cast<std::size_t>(i)]) << ','
        << incr_m0[static_cast<std::size_t>(i)] << "\n";
}

void run_sa_generic(const ExperimentConfig& c, BundleWriter& bw) {
  MDP mdp = build_mdp(c.mdp);
  FeatureMap fm = build_features(c.mdp, mdp);
  SAEmbedding emb = mdp_to_sa(mdp, fm, c.policy);
  Schedule sched = c.schedule.build();

  CounterRng rng(c.seed, 0);
  int s0 = 0;
  {
    double u = rng.uniform(0, kSubInit);
    double acc = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      acc += mdp.p0[static_cast<std::size_t>(s)];
      if (u < acc) {
        s0 = s;
        break;
      }
    }
  }
  SARun run = sa_run(emb.kernel, emb.update, sched, Vector::Zero(fm.dim), emb.entry_state(s0),
                     c.horizon, c.seed, 0);
  std::ofstream out(bw.file("sa_w_norm.csv"));
  out << "t,w_norm\n";
  for (std::size_t t = 0; t < run.w_at.size(); ++t)
    out << t << ',' << format_full(run.w_at[t].norm()) << "\n";
  bw.verdict("sa_generic_bounded", !run.diverged,
             run.diverged ? "iterates diverged" : "iterates stayed finite");
}

void run_analyze(const ExperimentConfig& c, BundleWriter& bw) {
  RSSpecialSpec spec = build_rs_spec(c);
  NoiseModel noise = build_noise(c.process);
  const double hi = c.process.xi / c.process.alpha;

  auto dist_series = [&](std::uint64_t path_id) {
    Path p = simulate_rs_special(spec, noise, c.process.z0, c.horizon, c.seed, path_id);
    std::vector<double> d(p.values.size());
    for (std::size_t n = 0; n < p.values.size(); ++n) d[n] = dist_to_interval(p.values[n], hi);
    return d;
  };

  const std::size_t block = static_cast<std::size_t>(c.paths);
  auto train_fn = [&](std::size_t i) { return dist_series(i); };
  auto holdout_fn = [&](std::size_t i) { return dist_series(block + i); };

  // Rate analysis: fit on the holdout ensemble-mean distance, certify per path.
  std::vector<double> mean_d(static_cast<std::size_t>(c.horizon) + 1, 0.0);
  for (std::size_t i = 0; i < block; ++i) {
    auto d = holdout_fn(i);
    for (std::size_t n = 0; n < d.size(); ++n) mean_d[n] += d[n];
  }
  for (auto& v : mean_d) v /= static_cast<double>(block);
  RateFit fit = fit_rate(mean_d, c.analysis.window_fraction);

  const std::size_t tail_start = static_cast<std::size_t>(c.horizon / 10);
  double tol = c.analysis.rate_tol;
  if (tol <= 0.0) {
    for (std::size_t i = 0; i < block; ++i) {
      auto cert = rate_certificate(train_fn(i), c.analysis.rate_eta, tail_start,
                                   std::numeric_limits<double>::infinity());
      tol = std::max(tol, cert.sup_tail);
    }
  }
  std::size_t cert_pass = 0;
  for (std::size_t i = 0; i < block; ++i)
    if (rate_certificate(holdout_fn(i), c.analysis.rate_eta, tail_start, tol).pass) ++cert_pass;
  double pass_frac = static_cast<double>(cert_pass) / static_cast<double>(block);

  bw.verdict("rate_fit", fit.exponent >= c.analysis.rate_eta / 2.0 - 0.05,
             "fitted exponent " + format_full(fit.exponent) + " (r2 " + format_full(fit.r_squared) +
                 ")");
  bw.verdict("rate_certificate", pass_frac >= 0.95,
             "holdout pass fraction " + format_full(pass_frac) + " at calibrated tol " +
                 format_full(tol));

  // Envelope calibration on train, coverage on holdout.
  Envelope shape;
  shape.variant = Envelope::Variant::RS;
  shape.k = c.analysis.envelope_k;
  shape.b_cap = std::exp(1.0);
  shape.n0 = c.process.t_seq.kind == "power_law" ? c.process.t_seq.offset : 3.0;
  Envelope env = calibrate_envelope(train_fn, block, shape, c.analysis.delta_grid);
  double delta = c.analysis.delta_grid.front();
  CoverageReport cov = envelope_coverage(holdout_fn, block, env, delta);
  double slack = 3.0 * std::sqrt(delta * (1.0 - delta) / static_cast<double>(block));
  bw.verdict("envelope_coverage", cov.coverage >= 1.0 - delta - slack,
             "holdout coverage " + format_full(cov.coverage) + " at delta " + format_full(delta) +
                 ", scale " + format_full(env.b_prime));

  // Moment curves.
  for (double p : c.analysis.moments) {
    auto series = lp_moment_series(holdout_fn, std::min<std::size_t>(block, 200), p);
    std::ofstream out(bw.file("moment_p" + format_full(p) + ".csv"));
    out << "n,moment\n";
    auto grid = log_grid(c.horizon, 200);
    for (auto t : grid)
      out << t << ',' << format_full(series[static_cast<std::size_t>(t)]) << "\n";
  }
}

}  // namespace

OutputBundle run_experiment(const ExperimentConfig& config) {
  BundleWriter bw(config);
  switch (config.kind) {
    case ExperimentKind::RsSpecial: run_rs_special(config, bw); break;
    case ExperimentKind::Example1: run_example1(config, bw); break;
    case ExperimentKind::RsGeneral: run_rs_general(config, bw); break;
    case ExperimentKind::Skeleton: run_skeleton(config, bw); break;
    case ExperimentKind::LinearQ: run_linear_q_experiment(config, bw); break;
    case ExperimentKind::SaGeneric: run_sa_generic(config, bw); break;
    case ExperimentKind::Analyze: run_analyze(config, bw); break;
  }
  bw.finish();
  return bw.bundle;
}

}  // namespace rslab
