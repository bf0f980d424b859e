#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rslab/common.hpp"
#include "rslab/schedule.hpp"

namespace rslab {

// Deterministic non-negative coefficient sequence (T_n, a_n, b_n, c_n ...).
class StepSeq {
 public:
  enum class Kind { PowerLaw, ScheduleLaw, Table };

  // c * (n + offset)^(-p); covers the inverse-linear C/(n+n0) case with p = 1.
  static StepSeq power_law(double c, double p, double offset);
  static StepSeq from_schedule(Schedule s);
  static StepSeq table(std::vector<double> values);

  double at(std::int64_t n) const;
  Kind kind() const { return kind_; }
  double coeff() const { return c_; }
  double exponent() const { return p_; }
  double offset() const { return offset_; }
  std::string describe() const;

 private:
  StepSeq() = default;
  Kind kind_ = Kind::PowerLaw;
  double c_ = 1.0, p_ = 1.0, offset_ = 1.0;
  std::shared_ptr<Schedule> schedule_;
  std::vector<double> table_;
};

// Scalar recursion z_{n+1} = (1 - alpha T_n) z_n + xi T_n (+ noise), with the
// pathwise growth contract |z_{n+1} - z_n| <= growth_b * T_n * (z_n + 1).
struct RSSpecialSpec {
  double alpha = 1.0;      // contraction coefficient
  double xi = 1.0;         // drift ceiling
  double growth_b = 2.0;   // increment-growth constant, >= alpha
  StepSeq t_seq = StepSeq::power_law(1.0, 0.75, 1.0);

  void validate() const;
  std::string describe() const;
};

struct NoiseModel {
  enum class Variant { Deterministic, BoundedMultiplicative, Example1 };

  static NoiseModel deterministic();
  static NoiseModel bounded_multiplicative(double sigma);  // sigma in [0, 1]
  static NoiseModel example1();

  Variant variant = Variant::Deterministic;
  double sigma = 0.0;
  std::string describe() const;
};

struct Path {
  std::vector<double> values;            // z_0 .. z_N, all >= 0
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
  std::uint64_t fingerprint = 0;
  bool diverged = false;
  std::vector<std::int64_t> spike_steps;  // example1 only: n where X_{n+1} = A_n
};

// Value above which a path is frozen and flagged diverged instead of
// producing non-finite values.
inline constexpr double kDivergenceCap = 1e300;

Path iterate_rs_special_deterministic(const RSSpecialSpec& spec, double z0, std::int64_t horizon);

Path simulate_example1(std::int64_t horizon, std::uint64_t seed, std::uint64_t path_id = 0);

Path simulate_rs_special(const RSSpecialSpec& spec, const NoiseModel& noise, double z0,
                         std::int64_t horizon, std::uint64_t seed, std::uint64_t path_id = 0);

// General template E_n[z_{n+1}] = (1 + a_n) z_n + x_n - y_n with the built-in
// drift rule x_n - y_n = -c_n (z_n - B)^+ and symmetric bounded noise keeping
// |z_{n+1} - z_n| <= b_n (z_n + 1) pathwise.
struct RSGeneralSpec {
  StepSeq a_seq = StepSeq::power_law(1.0, 2.0, 1.0);
  StepSeq b_seq = StepSeq::power_law(1.0, 0.75, 1.0);
  StepSeq c_seq = StepSeq::power_law(1.0, 0.9, 1.0);
  double threshold_b = 2.0;
  bool require_divergent_c = true;

  // Prefix certificates over [0, horizon): partial sums of a_n and b_n^2 look
  // convergent (last-half tail share below 5%) and partial sums of c_n do not.
  void certify(std::int64_t horizon) const;
  std::string describe() const;
};

Path simulate_rs_general(const RSGeneralSpec& spec, double z0, std::int64_t horizon,
                         std::uint64_t seed, std::uint64_t path_id = 0);

struct GrowthReport {
  bool ok = false;
  double worst_ratio = 0.0;   // max_n |dz| / (T_n (z_n + 1))
  std::int64_t worst_index = -1;
};

GrowthReport verify_growth_condition(const Path& path, const StepSeq& t_seq, double b);

// bound_n = (c + x0) * exp(l * sum_{i<n} a_i) for n = 0..len(a_seq).
std::vector<double> gronwall_envelope(double c, double l, double x0,
                                      const std::vector<double>& a_seq);

void write_path_csv(const Path& p, const std::string& file);
void write_path_binary(const Path& p, const std::string& file);
Path read_path_binary(const std::string& file);

}  // namespace rslab
