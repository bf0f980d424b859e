#include "rslab/schedule.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rslab/common.hpp"

namespace rslab {

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::LR1: return "lr1";
    case ScheduleKind::LR2: return "lr2";
    case ScheduleKind::Table: return "table";
  }
  return "?";
}

Schedule Schedule::lr1(double c_alpha, double nu) {
  require(c_alpha > 0.0, "schedule: c_alpha must be positive");
  require(nu > 2.0 / 3.0 && nu <= 1.0, "schedule: lr1 requires nu in (2/3, 1]");
  Schedule s;
  s.kind_ = ScheduleKind::LR1;
  s.c_alpha_ = c_alpha;
  s.nu_ = nu;
  return s;
}

Schedule Schedule::lr2(double c_alpha, double nu) {
  require(c_alpha > 0.0, "schedule: c_alpha must be positive");
  require(nu > 0.0 && nu < 1.0, "schedule: lr2 requires nu in (0, 1)");
  Schedule s;
  s.kind_ = ScheduleKind::LR2;
  s.c_alpha_ = c_alpha;
  s.nu_ = nu;
  return s;
}

Schedule Schedule::table(std::vector<double> values) {
  require(!values.empty(), "schedule: table must be non-empty");
  for (double v : values) require(v > 0.0, "schedule: table entries must be positive");
  Schedule s;
  s.kind_ = ScheduleKind::Table;
  s.c_alpha_ = values.front();
  s.nu_ = 0.0;
  s.table_ = std::move(values);
  return s;
}

double Schedule::alpha_at(std::int64_t t) const {
  require(t >= 0, "alpha_at: t must be non-negative");
  switch (kind_) {
    case ScheduleKind::LR1:
      return c_alpha_ / std::pow(static_cast<double>(t) + 3.0, nu_);
    case ScheduleKind::LR2: {
      double u = static_cast<double>(t) + 3.0;
      return c_alpha_ / (u * std::pow(std::log(u), nu_));
    }
    case ScheduleKind::Table:
      if (static_cast<std::size_t>(t) >= table_.size())
        throw std::out_of_range("alpha_at: t beyond table length " + std::to_string(table_.size()));
      return table_[static_cast<std::size_t>(t)];
  }
  return 0.0;
}

std::string Schedule::describe() const {
  std::ostringstream os;
  os << to_string(kind_) << "(c=" << format_full(c_alpha_) << ",nu=" << format_full(nu_);
  if (kind_ == ScheduleKind::Table) os << ",len=" << table_.size();
  os << ")";
  return os.str();
}

double segment_sum(const Schedule& s, std::int64_t lo, std::int64_t hi) {
  require(lo >= 0 && lo <= hi, "segment_sum: need 0 <= lo <= hi");
  KahanSum acc;
  for (std::int64_t t = lo; t < hi; ++t) acc.add(s.alpha_at(t));
  return acc.value();
}

Regime make_regime(double nu1, double nu2) {
  require(nu1 >= 0.0 && nu1 < 1.0, "regime: nu1 must lie in [0, 1)");
  require(nu2 > 0.5 && nu2 <= 1.0, "regime: nu2 must lie in (1/2, 1]");
  if (nu1 > 0.0) require(nu2 == 1.0, "regime: nu1 > 0 requires nu2 = 1");
  return Regime{nu1, nu2};
}

Regime select_regime(ScheduleKind kind, double nu,
                     std::optional<double> nu1, std::optional<double> nu2) {
  if (kind == ScheduleKind::LR1 && nu == 1.0) {
    if (!nu1.has_value())
      throw std::invalid_argument(
          "select_regime: the (lr1, nu=1) row requires a caller-chosen nu1 in (0,1)");
    require(*nu1 > 0.0 && *nu1 < 1.0, "select_regime: (lr1, nu=1) row needs nu1 in (0,1)");
    if (nu2.has_value()) require(*nu2 == 1.0, "select_regime: (lr1, nu=1) row fixes nu2 = 1");
    return Regime{*nu1, 1.0};
  }
  if (kind == ScheduleKind::LR1 && nu > 2.0 / 3.0 && nu < 1.0) {
    double hi = nu / (2.0 - nu);
    double v2 = nu2.value_or(0.5 * (0.5 + hi));
    require(v2 > 0.5 && v2 < hi,
            "select_regime: the (lr1, nu<1) row needs nu2 in (1/2, nu/(2-nu))");
    if (nu1.has_value()) require(*nu1 == 0.0, "select_regime: (lr1, nu<1) row fixes nu1 = 0");
    return Regime{0.0, v2};
  }
  if (kind == ScheduleKind::LR2 && nu > 0.0 && nu < 1.0) {
    if (nu1.has_value()) require(*nu1 == 0.0, "select_regime: lr2 row fixes nu1 = 0");
    if (nu2.has_value()) require(*nu2 == 1.0, "select_regime: lr2 row fixes nu2 = 1");
    return Regime{0.0, 1.0};
  }
  throw std::invalid_argument(
      "select_regime: (" + to_string(kind) + ", nu=" + std::to_string(nu) +
      ") matches no admissible row: need (lr1, nu=1), (lr1, nu in (2/3,1)), or (lr2, nu in (0,1))");
}

double skeleton_target(const Regime& r, double c_alpha, std::int64_t m) {
  require(c_alpha > 0.0, "skeleton_target: c_alpha must be positive");
  require(m >= 0, "skeleton_target: m must be non-negative");
  double u = static_cast<double>(m) + 3.0;
  double num = (r.nu1 == 0.0) ? 1.0 : std::pow(std::log(u), r.nu1);
  return c_alpha * num / std::pow(u, r.nu2);
}

namespace {

// First m such that alpha_bar <= 2T holds for 50 consecutive segments
// (window clipped at the end of the built range); -1 if never.
std::int64_t detect_m0(const std::vector<double>& targets, const std::vector<double>& realized) {
  const std::size_t n = realized.size();
  std::int64_t run_start = -1;
  std::size_t run_len = 0;
  for (std::size_t m = 0; m < n; ++m) {
    if (realized[m] <= 2.0 * targets[m]) {
      if (run_len == 0) run_start = static_cast<std::int64_t>(m);
      ++run_len;
      if (run_len >= 50 || m + 1 == n) return run_start;
    } else {
      run_len = 0;
      run_start = -1;
    }
  }
  return -1;
}

}  // namespace

SkeletonTimescale build_skeleton(const Schedule& s,
                                 const std::function<double(std::int64_t)>& target,
                                 std::int64_t horizon) {
  require(horizon >= 1, "build_skeleton: horizon must be positive");
  SkeletonTimescale sk;
  sk.anchors.push_back(0);
  std::int64_t t = 0;
  std::int64_t m = 0;
  while (t < horizon) {
    const double tm = target(m);
    require(tm > 0.0, "build_skeleton: target T_m must be positive");
    KahanSum acc;
    std::int64_t k = t;
    while (k < horizon && acc.value() < tm) {
      acc.add(s.alpha_at(k));
      ++k;
    }
    if (acc.value() < tm) {
      if (m == 0) {
        throw std::invalid_argument(
            "build_skeleton: horizon too small for the first anchor, partial sum " +
            format_full(acc.value()) + " < T_0 = " + format_full(tm));
      }
      break;  // incomplete trailing segment is dropped
    }
    sk.anchors.push_back(k);
    sk.targets.push_back(tm);
    sk.realized.push_back(acc.value());
    t = k;
    ++m;
  }
  sk.m0 = detect_m0(sk.targets, sk.realized);
  return sk;
}

SkeletonTimescale build_skeleton(const Schedule& s, const Regime& r, std::int64_t horizon) {
  const double c = s.c_alpha();
  return build_skeleton(
      s, [&r, c](std::int64_t m) { return skeleton_target(r, c, m); }, horizon);
}

void write_skeleton_csv(const SkeletonTimescale& sk, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_skeleton_csv: cannot open " + path);
  out << "m,t_m,T_m,alpha_bar_m\n";
  for (std::size_t m = 0; m < sk.segments(); ++m) {
    out << m << ',' << sk.anchors[m] << ',' << format_full(sk.targets[m]) << ','
        << format_full(sk.realized[m]) << '\n';
  }
}

}  // namespace rslab
