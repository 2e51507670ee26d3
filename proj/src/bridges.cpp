#include "bridgen/bridges.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "bridgen/common.hpp"

namespace bridgen::bridges {

using Eigen::VectorXd;

BridgeSpec::BridgeSpec(BridgeKind kind, VectorXd pin, sde::NoiseSchedule schedule,
                       GaussianInit init)
    : kind_(kind),
      pin_(std::move(pin)),
      schedule_(std::move(schedule)),
      init_(std::move(init)) {
  check(pin_.size() >= 1, ErrorCode::Domain, "bridge pin must have dimension >= 1");
  check(init_.mean.size() == pin_.size(), ErrorCode::Domain,
        "mu_0 mean dimension mismatch");
  check(init_.var >= 0.0, ErrorCode::Domain, "mu_0 variance must be >= 0");
  // Brownian and forced drifts divide by beta_T - beta_t, and the pinning
  // argument needs sigma_t > 0 on [0, T).
  if (kind_ != BridgeKind::Lyapunov)
    check(schedule_.sigma0() > 0.0, ErrorCode::Config,
          "pinned bridges need sigma_t > 0 on [0, T)");
}

BridgeSpec BridgeSpec::brownian(VectorXd pin, sde::NoiseSchedule schedule,
                                GaussianInit init) {
  return {BridgeKind::Brownian, std::move(pin), std::move(schedule),
          std::move(init)};
}

BridgeSpec BridgeSpec::forced(VectorXd pin, sde::NoiseSchedule schedule,
                              sde::DriftFn force, GaussianInit init) {
  check(static_cast<bool>(force), ErrorCode::Config,
        "forced bridge needs a force field");
  BridgeSpec spec(BridgeKind::Forced, std::move(pin), std::move(schedule),
                  std::move(init));
  spec.force_ = std::move(force);
  return spec;
}

BridgeSpec BridgeSpec::lyapunov(VectorXd pin, sde::NoiseSchedule schedule,
                                LyapunovSpec lyap, GaussianInit init) {
  check(static_cast<bool>(lyap.grad) && static_cast<bool>(lyap.step_size),
        ErrorCode::Config, "lyapunov bridge needs grad U and alpha_t");
  BridgeSpec spec(BridgeKind::Lyapunov, std::move(pin), std::move(schedule),
                  std::move(init));
  spec.lyap_ = std::move(lyap);
  return spec;
}

GaussianInit BridgeSpec::training_init(const VectorXd& pin,
                                       const sde::NoiseSchedule& schedule) {
  return {pin, schedule.beta(schedule.horizon())};
}

VectorXd brownian_drift(const BridgeSpec& spec, const VectorXd& z, double t) {
  const auto& sched = spec.schedule();
  const double T = sched.horizon();
  check(t < T, ErrorCode::Singular,
        "bridge drift is singular at t >= T (t=" + std::to_string(t) + ")");
  const double s = sched.sigma(t);
  return s * s / (sched.beta(T) - sched.beta(t)) * (spec.pin() - z);
}

VectorXd forced_drift(const BridgeSpec& spec, const VectorXd& z, double t) {
  check(spec.kind() == BridgeKind::Forced, ErrorCode::Config,
        "forced_drift needs a forced bridge spec");
  VectorXd f = spec.drift_force(z, t);
  return spec.schedule().sigma(t) * f + brownian_drift(spec, z, t);
}

VectorXd lyapunov_drift(const BridgeSpec& spec, const VectorXd& z, double t) {
  check(spec.kind() == BridgeKind::Lyapunov, ErrorCode::Config,
        "lyapunov_drift needs a lyapunov bridge spec");
  return spec.drift(z, t);
}

VectorXd BridgeSpec::drift_force(const VectorXd& z, double t) const {
  check(kind_ == BridgeKind::Forced, ErrorCode::Config,
        "bridge has no force field");
  VectorXd f = force_(z, t);
  if (!f.allFinite())
    throw Error(ErrorCode::Numeric,
                "non-finite force at t=" + std::to_string(t) +
                    ", |z|=" + std::to_string(z.norm()));
  return f;
}

VectorXd BridgeSpec::drift(const VectorXd& z, double t) const {
  switch (kind_) {
    case BridgeKind::Brownian:
      return brownian_drift(*this, z, t);
    case BridgeKind::Forced: {
      VectorXd f = drift_force(z, t);
      return schedule_.sigma(t) * f + brownian_drift(*this, z, t);
    }
    case BridgeKind::Lyapunov: {
      check(t < schedule_.horizon(), ErrorCode::Singular,
            "drift not evaluable at t >= T");
      VectorXd d = -lyap_.step_size(t) * lyap_.grad(z, t);
      if (lyap_.perturbation) d += lyap_.perturbation(z, t);
      if (!d.allFinite())
        throw Error(ErrorCode::Numeric, "non-finite lyapunov drift");
      return d;
    }
  }
  return VectorXd::Zero(z.size());
}

sde::DriftFn BridgeSpec::drift_fn() const {
  return [this](const VectorXd& z, double t) { return drift(z, t); };
}

sde::TerminalJumpFn BridgeSpec::terminal_jump() const {
  if (kind_ == BridgeKind::Lyapunov) return {};
  // For any process pinned at x, E[Z_T | Z_t = z] = x.
  VectorXd pin = pin_;
  return [pin](const VectorXd& z, double) -> VectorXd { return pin - z; };
}

VectorXd BridgeSpec::sample_init(Rng& rng) const {
  VectorXd z = init_.mean;
  if (init_.var > 0.0) {
    const double sd = std::sqrt(init_.var);
    for (int i = 0; i < z.size(); ++i) z[i] += sd * rng.normal();
  }
  return z;
}

VectorXd BridgeSpec::sample_marginal(double t, Rng& rng,
                                     int fallback_steps) const {
  const double T = schedule_.horizon();
  check(t >= 0.0 && t <= T, ErrorCode::Domain, "marginal time outside [0, T]");
  if (t == 0.0) return sample_init(rng);

  if (kind_ == BridgeKind::Brownian) {
    if (t == T) return pin_;
    // Z_t = x + (Z_0 - x)(beta_T - beta_t)/beta_T + N(0, beta_t (beta_T - beta_t)/beta_T)
    const double bT = schedule_.beta(T);
    const double bt = schedule_.beta(t);
    const double shrink = (bT - bt) / bT;
    const double var = init_.var * shrink * shrink + bt * (bT - bt) / bT;
    const double sd = std::sqrt(std::max(var, 0.0));
    VectorXd z(pin_.size());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return pin_ + shrink * (init_.mean - pin_) + sd * z;
  }

  // No closed form: simulate up to t.
  int steps = std::max(1, static_cast<int>(std::ceil(fallback_steps * t / T)));
  sde::TimeGrid grid = sde::make_grid(steps, t);
  const bool full_horizon = (t == T);
  sde::Trajectory traj =
      sde::euler_maruyama(drift_fn(), schedule_, sample_init(rng), grid, rng,
                          full_horizon ? terminal_jump() : sde::TerminalJumpFn{});
  return traj.terminal();
}

sde::Trajectory BridgeSpec::simulate(const sde::TimeGrid& grid, Rng& rng) const {
  return sde::euler_maruyama(drift_fn(), schedule_, sample_init(rng), grid, rng,
                             terminal_jump());
}

sde::Trajectory BridgeSpec::simulate(const sde::TimeGrid& grid,
                                     std::uint64_t seed) const {
  Rng rng(seed);
  sde::Trajectory traj = simulate(grid, rng);
  traj.seed = seed;
  return traj;
}

PinningReport verify_pinning(const BridgeSpec& spec,
                             const std::vector<int>& steps_list, int n_paths,
                             std::uint64_t seed, double tol_factor) {
  check(n_paths >= 100, ErrorCode::Domain,
        "pinning verification needs at least 100 paths");
  check(!steps_list.empty(), ErrorCode::Domain, "empty steps list");

  PinningReport report;
  report.tol_factor = tol_factor;
  const double T = spec.schedule().horizon();
  const double sqrt_d = std::sqrt(static_cast<double>(spec.dim()));

  try {
    for (std::size_t level = 0; level < steps_list.size(); ++level) {
      const int steps = steps_list[level];
      sde::TimeGrid grid = sde::make_grid(steps, T);
      double sum = 0.0, worst = 0.0;
      for (int p = 0; p < n_paths; ++p) {
        Rng rng(seed, static_cast<std::uint64_t>(level) * 1000003u + p);
        sde::Trajectory traj = spec.simulate(grid, rng);
        double err = (traj.terminal() - spec.pin()).norm() / sqrt_d;
        sum += err;
        worst = std::max(worst, err);
      }
      PinningLevel lv;
      lv.steps = steps;
      lv.mean_err = sum / n_paths;
      lv.max_err = worst;
      lv.tol = tol_factor * spec.schedule().sigma(T - T / steps) *
               std::sqrt(T / steps);
      report.levels.push_back(lv);
    }
  } catch (const Error& e) {
    report.pass = false;
    report.note = std::string("simulation failed: ") + e.what();
    return report;
  }

  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < report.levels.size(); ++i)
    decreasing &= report.levels[i + 1].mean_err < report.levels[i].mean_err;
  const auto& finest = report.levels.back();
  report.pass = decreasing && finest.mean_err <= finest.tol;
  report.note = decreasing ? (report.pass ? "ok" : "finest level above tolerance")
                           : "terminal error not decreasing";
  return report;
}

GronwallReport gronwall_check(const GronwallSeries& series, double threshold) {
  const int n = series.grid.steps();
  check(n >= 20, ErrorCode::Domain, "gronwall check needs a finer grid");
  GronwallReport report;
  report.threshold = threshold;

  // Trapezoid cumulants over grid points t_0 .. t_{N-1}; t_N is never touched.
  double int_alpha = 0.0, int_weighted = 0.0;
  double prev_alpha = 0.0, prev_weight = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = series.grid.points[i];
    const double a = series.alpha(t);
    if (!std::isfinite(a)) {
      report.pass = false;
      report.note = "non-finite alpha at t=" + std::to_string(t);
      return report;
    }
    if (i > 0) int_alpha += 0.5 * (prev_alpha + a) * series.grid.dt(i - 1);
    const double zeta = std::exp(int_alpha);
    const double load = zeta * (series.pl_beta(t) + series.pl_gamma(t));
    if (!std::isfinite(load) || !std::isfinite(zeta)) {
      report.pass = false;
      report.note = "non-finite trace at t=" + std::to_string(t);
      return report;
    }
    if (i > 0) int_weighted += 0.5 * (prev_weight + load) * series.grid.dt(i - 1);
    prev_alpha = a;
    prev_weight = load;

    report.t.push_back(t);
    report.zeta.push_back(zeta);
    report.ratio.push_back(i == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : int_weighted == 0.0
                               ? std::numeric_limits<double>::infinity()
                               : zeta / int_weighted);
  }

  auto increasing_tail = [&](const std::vector<double>& v) {
    std::size_t start = std::max<std::size_t>(1, (v.size() * 9) / 10);
    for (std::size_t i = start; i + 1 < v.size(); ++i) {
      if (std::isinf(v[i]) && std::isinf(v[i + 1])) continue;
      if (!(v[i + 1] > v[i])) return false;
    }
    return true;
  };

  const bool diverges =
      report.zeta.back() >= threshold && report.ratio.back() >= threshold;
  const bool rising = increasing_tail(report.zeta) && increasing_tail(report.ratio);
  report.pass = diverges && rising;
  report.note = report.pass ? "ok"
                : !diverges ? "trace below divergence threshold"
                            : "trace not increasing near T";
  return report;
}

double pl_condition_probe(
    const std::function<double(const VectorXd&, double)>& U,
    const std::function<VectorXd(const VectorXd&, double)>& grad_U,
    const BridgeSpec& spec, int n_paths, const sde::TimeGrid& grid,
    std::uint64_t seed) {
  check(spec.dim() >= 1, ErrorCode::Domain, "degenerate zero-dimensional state");
  check(n_paths >= 1, ErrorCode::Domain, "need at least one path");

  const int n = grid.steps();
  std::vector<double> mean_u(n, 0.0), mean_g2(n, 0.0);
  for (int p = 0; p < n_paths; ++p) {
    Rng rng(seed, p);
    sde::Trajectory traj = spec.simulate(grid, rng);
    for (int i = 0; i < n; ++i) {  // t_N excluded: U_T vanishes at the pin
      const double t = grid.points[i];
      mean_u[i] += U(traj.states[i], t);
      mean_g2[i] += grad_U(traj.states[i], t).squaredNorm();
    }
  }
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    worst = std::max(worst, (mean_u[i] - mean_g2[i]) / n_paths);
  return worst;
}

std::string to_json(const PinningReport& report) {
  nlohmann::json j;
  j["pass"] = report.pass;
  j["tol_factor"] = report.tol_factor;
  j["note"] = report.note;
  j["error_metric"] = "per-coordinate RMS |Z_T - x|";
  j["levels"] = nlohmann::json::array();
  for (const auto& lv : report.levels)
    j["levels"].push_back({{"steps", lv.steps},
                           {"mean_err", lv.mean_err},
                           {"max_err", lv.max_err},
                           {"tol", lv.tol}});
  return j.dump(2);
}

std::string to_json(const GronwallReport& report) {
  nlohmann::json j;
  j["pass"] = report.pass;
  j["threshold"] = report.threshold;
  j["note"] = report.note;
  auto encode = [](const std::vector<double>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (double x : v) {
      if (std::isnan(x))
        arr.push_back(nullptr);
      else if (std::isinf(x))
        arr.push_back("inf");
      else
        arr.push_back(x);
    }
    return arr;
  };
  j["t"] = encode(report.t);
  j["zeta"] = encode(report.zeta);
  j["ratio"] = encode(report.ratio);
  return j.dump(2);
}

}  // namespace bridgen::bridges
