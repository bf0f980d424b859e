#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rslab {

enum class ScheduleKind { LR1, LR2, Table };

std::string to_string(ScheduleKind k);

// Learning-rate law alpha_t.
//   LR1:   c / (t+3)^nu          with nu in (2/3, 1]
//   LR2:   c / ((t+3) ln^nu(t+3)) with nu in (0, 1)
//   Table: explicit finite sequence of positive values
// LR1/LR2 are positive and strictly decreasing for all t >= 0.
class Schedule {
 public:
  static Schedule lr1(double c_alpha, double nu);
  static Schedule lr2(double c_alpha, double nu);
  static Schedule table(std::vector<double> values);

  double alpha_at(std::int64_t t) const;

  ScheduleKind kind() const { return kind_; }
  double c_alpha() const { return c_alpha_; }
  double nu() const { return nu_; }
  const std::vector<double>& values() const { return table_; }
  std::string describe() const;

 private:
  Schedule() = default;
  ScheduleKind kind_ = ScheduleKind::LR1;
  double c_alpha_ = 1.0;
  double nu_ = 1.0;
  std::vector<double> table_;
};

// Sum_{t=lo}^{hi-1} alpha_t, compensated. Empty range returns 0.
double segment_sum(const Schedule& s, std::int64_t lo, std::int64_t hi);

// Exponent pair for the anchor-target law T_m = c * ln^{nu1}(m+3) / (m+3)^{nu2}.
// Admissible shapes: (0 < nu1 < 1, nu2 = 1) or (nu1 = 0, nu2 in (1/2, 1]).
struct Regime {
  double nu1 = 0.0;
  double nu2 = 1.0;
};

Regime make_regime(double nu1, double nu2);

// Picks the (nu1, nu2) row matching a schedule kind and exponent:
//   LR1, nu = 1        -> nu1 must be supplied in (0,1), nu2 = 1
//   LR1, nu in (2/3,1) -> nu1 = 0, nu2 in (1/2, nu/(2-nu)), default midpoint
//   LR2, nu in (0,1)   -> (0, 1)
Regime select_regime(ScheduleKind kind, double nu,
                     std::optional<double> nu1 = std::nullopt,
                     std::optional<double> nu2 = std::nullopt);

double skeleton_target(const Regime& r, double c_alpha, std::int64_t m);

// Anchor sequence t_0 = 0 < t_1 < ... with per-segment step mass
// alpha_bar_m = sum_{t=t_m}^{t_{m+1}-1} alpha_t >= T_m, where t_{m+1} is the
// minimal such index. Bracketing holds on every segment:
//   T_m <= alpha_bar_m <= T_m + alpha_{t_{m+1}-1}.
struct SkeletonTimescale {
  std::vector<std::int64_t> anchors;  // size segments()+1, anchors[0] == 0
  std::vector<double> targets;        // T_m
  std::vector<double> realized;       // alpha_bar_m
  std::int64_t m0 = -1;               // first m with alpha_bar <= 2T for 50 consecutive segments

  std::size_t segments() const { return realized.size(); }
};

SkeletonTimescale build_skeleton(const Schedule& s,
                                 const std::function<double(std::int64_t)>& target,
                                 std::int64_t horizon);
SkeletonTimescale build_skeleton(const Schedule& s, const Regime& r, std::int64_t horizon);

// CSV export with columns m, t_m, T_m, alpha_bar_m.
void write_skeleton_csv(const SkeletonTimescale& sk, const std::string& path);

}  // namespace rslab
