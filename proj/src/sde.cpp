#include "bridgen/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bridgen/common.hpp"

namespace bridgen::sde {

NoiseSchedule::NoiseSchedule(Kind kind, double s0, double s1, double power,
                             double horizon)
    : kind_(kind), sigma0_(s0), sigma1_(s1), power_(power), horizon_(horizon) {
  // sigma = 0 is allowed here (deterministic dynamics); bridges that need
  // sigma_t > 0 on [0, T) enforce it themselves.
  check(horizon > 0.0, ErrorCode::Config, "schedule horizon must be positive");
  check(s0 >= 0.0, ErrorCode::Config, "sigma_0 must be nonnegative");
  check(s1 >= 0.0, ErrorCode::Config, "sigma_T must be nonnegative");
  check(power > 0.0, ErrorCode::Config, "schedule power must be positive");
}

NoiseSchedule NoiseSchedule::constant(double sigma, double horizon) {
  return {Kind::Constant, sigma, sigma, 1.0, horizon};
}

NoiseSchedule NoiseSchedule::linear(double s0, double s1, double horizon) {
  return {Kind::Linear, s0, s1, 1.0, horizon};
}

NoiseSchedule NoiseSchedule::polynomial(double s0, double s1, double power,
                                        double horizon) {
  return {Kind::Polynomial, s0, s1, power, horizon};
}

void NoiseSchedule::check_time(double t) const {
  check(t >= 0.0 && t <= horizon_, ErrorCode::Domain,
        "time " + std::to_string(t) + " outside [0, " +
            std::to_string(horizon_) + "]");
}

double NoiseSchedule::sigma(double t) const {
  check_time(t);
  switch (kind_) {
    case Kind::Constant:
      return sigma0_;
    case Kind::Linear:
      return sigma0_ + (sigma1_ - sigma0_) * (t / horizon_);
    case Kind::Polynomial:
      return sigma1_ + (sigma0_ - sigma1_) * std::pow(1.0 - t / horizon_, power_);
  }
  return sigma0_;
}

namespace {

// Adaptive Simpson on [a, b]; f assumed smooth.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
  if (b <= a) return 0.0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  double scale = std::max(std::abs(whole), 1e-12);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, rel_tol * scale, 48);
}

}  // namespace

double NoiseSchedule::beta(double t) const {
  check_time(t);
  if (t == 0.0) return 0.0;
  switch (kind_) {
    case Kind::Constant:
      return sigma0_ * sigma0_ * t;
    case Kind::Linear: {
      // integral of (s0 + c u)^2 with c = (s1 - s0)/T
      double c = (sigma1_ - sigma0_) / horizon_;
      return sigma0_ * sigma0_ * t + sigma0_ * c * t * t + c * c * t * t * t / 3.0;
    }
    case Kind::Polynomial: {
      auto f = [this](double u) {
        double s = sigma(u);
        return s * s;
      };
      return integrate(f, 0.0, t, 1e-9);
    }
  }
  return 0.0;
}

double beta_integral(const NoiseSchedule& schedule, double t) {
  return schedule.beta(t);
}

TimeGrid make_grid(int steps, double horizon) {
  check(steps >= 1, ErrorCode::Domain, "grid needs at least one step");
  check(horizon > 0.0, ErrorCode::Domain, "grid horizon must be positive");
  TimeGrid grid;
  grid.points.resize(steps + 1);
  for (int i = 0; i <= steps; ++i)
    grid.points[i] = horizon * static_cast<double>(i) / steps;
  grid.points.back() = horizon;  // last point exactly T
  return grid;
}

TimeGrid make_grid(std::vector<double> points) {
  check(points.size() >= 2, ErrorCode::Domain, "grid needs at least two points");
  check(points.front() == 0.0, ErrorCode::Domain, "grid must start at 0");
  for (std::size_t i = 0; i + 1 < points.size(); ++i)
    check(points[i] < points[i + 1], ErrorCode::Domain,
          "grid points must be strictly increasing");
  TimeGrid grid;
  grid.points = std::move(points);
  return grid;
}

int Trajectory::index_at(double t) const {
  auto it = std::upper_bound(grid.points.begin(), grid.points.end(), t);
  int i = static_cast<int>(it - grid.points.begin()) - 1;
  return std::max(0, std::min(i, static_cast<int>(grid.points.size()) - 1));
}

Trajectory euler_maruyama(const DriftFn& drift, const NoiseSchedule& schedule,
                          const Eigen::VectorXd& z0, const TimeGrid& grid,
                          Rng& rng, const TerminalJumpFn& terminal_jump) {
  const int n = grid.steps();
  check(n >= 1, ErrorCode::Domain, "empty time grid");
  check(z0.allFinite(), ErrorCode::Numeric, "initial state not finite");

  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(n + 1);
  traj.states.push_back(z0);

  Eigen::VectorXd z = z0;
  Eigen::VectorXd noise(z.size());
  for (int i = 0; i < n; ++i) {
    const double t = grid.points[i];
    const double dt = grid.dt(i);
    const bool last = (i == n - 1);

    Eigen::VectorXd move;
    if (last && terminal_jump) {
      move = terminal_jump(z, t);
    } else {
      move = drift(z, t);
      if (!move.allFinite())
        throw Error(ErrorCode::Numeric,
                    "non-finite drift at step " + std::to_string(i) + " (t=" +
                        std::to_string(t) + ")");
      move *= dt;
    }

    const double scale = schedule.sigma(t) * std::sqrt(dt);
    for (int j = 0; j < noise.size(); ++j) noise[j] = rng.normal();
    z += move + scale * noise;
    if (!z.allFinite())
      throw Error(ErrorCode::Numeric,
                  "non-finite state after step " + std::to_string(i));
    traj.states.push_back(z);
  }
  return traj;
}

Trajectory euler_maruyama(const DriftFn& drift, const NoiseSchedule& schedule,
                          const Eigen::VectorXd& z0, const TimeGrid& grid,
                          std::uint64_t seed, const TerminalJumpFn& terminal_jump) {
  Rng rng(seed);
  Trajectory traj = euler_maruyama(drift, schedule, z0, grid, rng, terminal_jump);
  traj.seed = seed;
  return traj;
}

void write_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), ErrorCode::Io, "cannot open " + path);
  out.precision(17);
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    out << traj.grid.points[i];
    for (int j = 0; j < traj.states[i].size(); ++j)
      out << ' ' << traj.states[i][j];
    out << '\n';
  }
  check(out.good(), ErrorCode::Io, "write failed for " + path);
}

}  // namespace bridgen::sde
