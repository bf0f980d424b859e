#include "rslab/processes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rslab {

StepSeq StepSeq::power_law(double c, double p, double offset) {
  require(c >= 0.0, "step_seq: coefficient must be non-negative");
  require(offset > 0.0, "step_seq: offset must be positive");
  StepSeq s;
  s.kind_ = Kind::PowerLaw;
  s.c_ = c;
  s.p_ = p;
  s.offset_ = offset;
  return s;
}

StepSeq StepSeq::from_schedule(Schedule sched) {
  StepSeq s;
  s.kind_ = Kind::ScheduleLaw;
  s.schedule_ = std::make_shared<Schedule>(std::move(sched));
  return s;
}

StepSeq StepSeq::table(std::vector<double> values) {
  require(!values.empty(), "step_seq: table must be non-empty");
  for (double v : values) require(v >= 0.0, "step_seq: table entries must be non-negative");
  StepSeq s;
  s.kind_ = Kind::Table;
  s.table_ = std::move(values);
  return s;
}

double StepSeq::at(std::int64_t n) const {
  require(n >= 0, "step_seq: index must be non-negative");
  switch (kind_) {
    case Kind::PowerLaw:
      return c_ * std::pow(static_cast<double>(n) + offset_, -p_);
    case Kind::ScheduleLaw:
      return schedule_->alpha_at(n);
    case Kind::Table:
      if (static_cast<std::size_t>(n) >= table_.size())
        throw std::out_of_range("step_seq: index beyond table length");
      return table_[static_cast<std::size_t>(n)];
  }
  return 0.0;
}

std::string StepSeq::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::PowerLaw:
      os << "pow(c=" << format_full(c_) << ",p=" << format_full(p_)
         << ",off=" << format_full(offset_) << ")";
      break;
    case Kind::ScheduleLaw:
      os << "sched[" << schedule_->describe() << "]";
      break;
    case Kind::Table:
      os << "table(len=" << table_.size() << ")";
      break;
  }
  return os.str();
}

void RSSpecialSpec::validate() const {
  require(alpha > 0.0, "rs_special: alpha must be positive");
  require(xi >= 0.0, "rs_special: xi must be non-negative");
  require(growth_b >= alpha, "rs_special: growth_b must be >= alpha");
  // Spot-check the step sequence: values in (0, 1], strictly decreasing.
  double prev = 2.0;
  for (std::int64_t n = 0; n < 64; ++n) {
    double t;
    try {
      t = t_seq.at(n);
    } catch (const std::out_of_range&) {
      break;
    }
    require(t > 0.0 && t <= 1.0, "rs_special: T_n must lie in (0, 1]");
    require(t < prev, "rs_special: T_n must be strictly decreasing");
    prev = t;
  }
}

std::string RSSpecialSpec::describe() const {
  std::ostringstream os;
  os << "rs_special(alpha=" << format_full(alpha) << ",xi=" << format_full(xi)
     << ",b=" << format_full(growth_b) << ",T=" << t_seq.describe() << ")";
  return os.str();
}

NoiseModel NoiseModel::deterministic() { return NoiseModel{Variant::Deterministic, 0.0}; }

NoiseModel NoiseModel::bounded_multiplicative(double sigma) {
  require(sigma >= 0.0 && sigma <= 1.0, "noise: sigma must lie in [0, 1]");
  return NoiseModel{Variant::BoundedMultiplicative, sigma};
}

NoiseModel NoiseModel::example1() { return NoiseModel{Variant::Example1, 0.0}; }

std::string NoiseModel::describe() const {
  switch (variant) {
    case Variant::Deterministic: return "deterministic";
    case Variant::BoundedMultiplicative: return "bounded_multiplicative(" + format_full(sigma) + ")";
    case Variant::Example1: return "example1";
  }
  return "?";
}

namespace {

std::uint64_t path_fingerprint(const std::string& desc) { return fnv1a(desc); }

bool freeze_if_diverged(Path& p, double& z, std::int64_t n, std::int64_t horizon) {
  if (std::isfinite(z) && z <= kDivergenceCap) return false;
  if (!std::isfinite(z)) z = kDivergenceCap;
  p.diverged = true;
  for (std::int64_t k = n; k <= horizon; ++k) p.values.push_back(z);
  return true;
}

}  // namespace

Path iterate_rs_special_deterministic(const RSSpecialSpec& spec, double z0, std::int64_t horizon) {
  spec.validate();
  require(z0 >= 0.0, "rs_special: z0 must be non-negative");
  require(horizon >= 1, "rs_special: horizon must be >= 1");
  Path p;
  p.fingerprint = path_fingerprint(spec.describe() + "|det|z0=" + format_full(z0));
  p.values.reserve(static_cast<std::size_t>(horizon) + 1);
  double z = z0;
  p.values.push_back(z);
  for (std::int64_t n = 0; n < horizon; ++n) {
    double t = spec.t_seq.at(n);
    if (spec.alpha * t > 1.0) {
      throw std::invalid_argument("rs_special: step-size violation alpha*T_n > 1 at n = " +
                                  std::to_string(n));
    }
    z = (1.0 - spec.alpha * t) * z + spec.xi * t;
    if (freeze_if_diverged(p, z, n + 1, horizon)) break;
    p.values.push_back(z);
  }
  return p;
}

Path simulate_example1(std::int64_t horizon, std::uint64_t seed, std::uint64_t path_id) {
  require(horizon >= 1, "example1: horizon must be >= 1");
  Path p;
  p.seed = seed;
  p.path_id = path_id;
  p.fingerprint = path_fingerprint("example1");
  p.values.reserve(static_cast<std::size_t>(horizon) + 1);
  CounterRng rng(seed, path_id);
  double z = 0.0;
  p.values.push_back(z);
  for (std::int64_t n = 0; n < horizon; ++n) {
    const double np1 = static_cast<double>(n) + 1.0;
    const double a_n = std::pow(np1, 0.25);
    const double p_n = 1.0 / np1;
    const double t_n = a_n * p_n;  // (n+1)^{-3/4}, exactly p_n * A_n
    const bool spike = rng.uniform(static_cast<std::uint64_t>(n), kSubNoise) < p_n;
    z = (1.0 - t_n) * z + (spike ? a_n : 0.0);
    if (spike) p.spike_steps.push_back(n);
    if (freeze_if_diverged(p, z, n + 1, horizon)) break;
    p.values.push_back(z);
  }
  return p;
}

Path simulate_rs_special(const RSSpecialSpec& spec, const NoiseModel& noise, double z0,
                         std::int64_t horizon, std::uint64_t seed, std::uint64_t path_id) {
  if (noise.variant == NoiseModel::Variant::Example1) {
    return simulate_example1(horizon, seed, path_id);  // ignores spec coefficients
  }
  spec.validate();
  require(z0 >= 0.0, "rs_special: z0 must be non-negative");
  require(horizon >= 1, "rs_special: horizon must be >= 1");
  if (noise.variant == NoiseModel::Variant::BoundedMultiplicative) {
    require(noise.sigma <= spec.alpha, "rs_special: sigma must not exceed alpha");
    require(spec.growth_b >= spec.alpha + spec.xi + noise.sigma,
            "rs_special: growth_b must cover alpha + xi + sigma for multiplicative noise");
  }
  if (noise.variant == NoiseModel::Variant::Deterministic || noise.sigma == 0.0) {
    Path p = iterate_rs_special_deterministic(spec, z0, horizon);
    p.seed = seed;
    p.path_id = path_id;
    return p;
  }
  Path p;
  p.seed = seed;
  p.path_id = path_id;
  p.fingerprint =
      path_fingerprint(spec.describe() + "|" + noise.describe() + "|z0=" + format_full(z0));
  p.values.reserve(static_cast<std::size_t>(horizon) + 1);
  CounterRng rng(seed, path_id);
  double z = z0;
  p.values.push_back(z);
  for (std::int64_t n = 0; n < horizon; ++n) {
    double t = spec.t_seq.at(n);
    if (spec.alpha * t > 1.0) {
      throw std::invalid_argument("rs_special: step-size violation alpha*T_n > 1 at n = " +
                                  std::to_string(n));
    }
    double u = rng.symmetric(static_cast<std::uint64_t>(n), kSubNoise);
    z = (1.0 - spec.alpha * t) * z + spec.xi * t + noise.sigma * t * (z + 1.0) * u;
    if (z < 0.0) {
      throw std::runtime_error("rs_special: noise model emitted a negative z at n = " +
                               std::to_string(n) + " (z = " + format_full(z) + ")");
    }
    if (freeze_if_diverged(p, z, n + 1, horizon)) break;
    p.values.push_back(z);
  }
  return p;
}

namespace {

// Dyadic-tail share certificates for sequence prefixes: "convergent-looking"
// means the last-half block contributes < 1% of the partial sum;
// "divergent-looking" means it contributes >= 1% of a non-trivial sum.
double block_share(const StepSeq& s, std::int64_t horizon, bool squared, double* total_out) {
  KahanSum total, tail;
  for (std::int64_t n = 0; n < horizon; ++n) {
    double v = s.at(n);
    if (squared) v *= v;
    total.add(v);
    if (n >= horizon / 2) tail.add(v);
  }
  if (total_out) *total_out = total.value();
  return total.value() > 0.0 ? tail.value() / total.value() : 0.0;
}

}  // namespace

void RSGeneralSpec::certify(std::int64_t horizon) const {
  require(horizon >= 16, "rs_general: horizon too short to certify sequences");
  require(threshold_b >= 0.0, "rs_general: threshold B must be non-negative");
  for (std::int64_t n = 0; n < std::min<std::int64_t>(horizon, 1024); ++n) {
    require(a_seq.at(n) >= 0.0 && b_seq.at(n) >= 0.0 && c_seq.at(n) >= 0.0,
            "rs_general: coefficient sequences must be non-negative");
    require(c_seq.at(n) <= 1.0, "rs_general: built-in step rule needs c_n <= 1");
  }
  double total = 0.0;
  double sa = block_share(a_seq, horizon, false, &total);
  require(sa < 0.05, "rs_general: partial sums of a_n do not look bounded (tail share " +
                         format_full(sa) + ")");
  double sb = block_share(b_seq, horizon, true, &total);
  require(sb < 0.05, "rs_general: partial sums of b_n^2 do not look bounded (tail share " +
                         format_full(sb) + ")");
  if (require_divergent_c) {
    double ctotal = 0.0;
    double sc = block_share(c_seq, horizon, false, &ctotal);
    require(ctotal > 0.0 && sc >= 0.01,
            "rs_general: partial sums of c_n do not look unbounded over the horizon "
            "(disable require_divergent_c to override)");
  }
}

std::string RSGeneralSpec::describe() const {
  std::ostringstream os;
  os << "rs_general(a=" << a_seq.describe() << ",b=" << b_seq.describe()
     << ",c=" << c_seq.describe() << ",B=" << format_full(threshold_b) << ")";
  return os.str();
}

Path simulate_rs_general(const RSGeneralSpec& spec, double z0, std::int64_t horizon,
                         std::uint64_t seed, std::uint64_t path_id) {
  require(z0 >= 0.0, "rs_general: z0 must be non-negative");
  require(horizon >= 1, "rs_general: horizon must be >= 1");
  spec.certify(horizon);
  Path p;
  p.seed = seed;
  p.path_id = path_id;
  p.fingerprint = path_fingerprint(spec.describe() + "|z0=" + format_full(z0));
  p.values.reserve(static_cast<std::size_t>(horizon) + 1);
  CounterRng rng(seed, path_id);
  double z = z0;
  p.values.push_back(z);
  for (std::int64_t n = 0; n < horizon; ++n) {
    const double a = spec.a_seq.at(n);
    const double b = spec.b_seq.at(n);
    const double c = spec.c_seq.at(n);
    const double over = std::max(z - spec.threshold_b, 0.0);
    const double mean = (1.0 + a) * z - c * over;
    const double drift = mean - z;
    const double cap = b * (z + 1.0);
    if (std::abs(drift) > cap) {
      throw std::invalid_argument(
          "rs_general: drift exceeds the growth budget b_n(z_n+1) at n = " + std::to_string(n) +
          "; the (a, b, c) triple is inadmissible for the built-in step rule");
    }
    double amp = std::min(cap - std::abs(drift), mean);  // keeps z' >= 0 and growth pathwise
    amp = std::max(amp, 0.0);
    const double u = rng.symmetric(static_cast<std::uint64_t>(n), kSubNoise);
    z = mean + amp * u;
    if (z < 0.0) {
      throw std::runtime_error("rs_general: step rule emitted a negative z at n = " +
                               std::to_string(n));
    }
    if (freeze_if_diverged(p, z, n + 1, horizon)) break;
    p.values.push_back(z);
  }
  return p;
}

GrowthReport verify_growth_condition(const Path& path, const StepSeq& t_seq, double b) {
  require(path.values.size() >= 2, "verify_growth_condition: path length must be >= 2");
  require(b > 0.0, "verify_growth_condition: b must be positive");
  GrowthReport r;
  r.worst_ratio = 0.0;
  r.worst_index = 0;
  for (std::size_t n = 0; n + 1 < path.values.size(); ++n) {
    const double t = t_seq.at(static_cast<std::int64_t>(n));
    const double denom = t * (path.values[n] + 1.0);
    const double ratio = std::abs(path.values[n + 1] - path.values[n]) / denom;
    if (ratio > r.worst_ratio) {
      r.worst_ratio = ratio;
      r.worst_index = static_cast<std::int64_t>(n);
    }
  }
  r.ok = r.worst_ratio <= b;
  return r;
}

std::vector<double> gronwall_envelope(double c, double l, double x0,
                                      const std::vector<double>& a_seq) {
  require(c >= 0.0 && l >= 0.0 && x0 >= 0.0, "gronwall: constants must be non-negative");
  std::vector<double> bound;
  bound.reserve(a_seq.size() + 1);
  KahanSum acc;
  bound.push_back((c + x0) * std::exp(l * acc.value()));
  for (double a : a_seq) {
    acc.add(a);
    bound.push_back((c + x0) * std::exp(l * acc.value()));
  }
  return bound;
}

void write_path_csv(const Path& p, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_path_csv: cannot open " + file);
  out << "n,z\n";
  for (std::size_t n = 0; n < p.values.size(); ++n) out << n << ',' << format_full(p.values[n]) << '\n';
}

void write_path_binary(const Path& p, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("write_path_binary: cannot open " + file);
  const std::uint64_t len = p.values.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(reinterpret_cast<const char*>(p.values.data()),
            static_cast<std::streamsize>(len * sizeof(double)));
}

Path read_path_binary(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("read_path_binary: cannot open " + file);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  Path p;
  p.values.resize(len);
  in.read(reinterpret_cast<char*>(p.values.data()), static_cast<std::streamsize>(len * sizeof(double)));
  if (!in) throw std::runtime_error("read_path_binary: truncated block in " + file);
  return p;
}

}  // namespace rslab
