#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bridgen/rng.hpp"

namespace bridgen::sde {

// Diffusion scale sigma_t on [0, T] and its integral beta_t = int_0^t sigma_s^2 ds.
// sigma_t must stay positive on [0, T); sigma_T = 0 is allowed.
class NoiseSchedule {
public:
  enum class Kind { Constant, Linear, Polynomial };

  static NoiseSchedule constant(double sigma, double horizon);
  // sigma interpolates from sigma0 at t=0 to sigma1 at t=T.
  static NoiseSchedule linear(double sigma0, double sigma1, double horizon);
  // sigma_t = sigma1 + (sigma0 - sigma1) * (1 - t/T)^power; power=1 is linear.
  static NoiseSchedule polynomial(double sigma0, double sigma1, double power,
                                  double horizon);

  double sigma(double t) const;
  double beta(double t) const;  // closed form for constant/linear, quadrature otherwise
  double horizon() const { return horizon_; }
  Kind kind() const { return kind_; }
  double sigma0() const { return sigma0_; }
  double sigma1() const { return sigma1_; }
  double power() const { return power_; }

private:
  NoiseSchedule(Kind kind, double s0, double s1, double power, double horizon);
  void check_time(double t) const;

  Kind kind_;
  double sigma0_, sigma1_, power_, horizon_;
};

double beta_integral(const NoiseSchedule& schedule, double t);

struct TimeGrid {
  std::vector<double> points;  // strictly increasing, first 0, last T

  int steps() const { return static_cast<int>(points.size()) - 1; }
  double horizon() const { return points.back(); }
  double dt(int i) const { return points[i + 1] - points[i]; }
};

TimeGrid make_grid(int steps, double horizon);
// User-supplied points; validates monotonicity and endpoints.
TimeGrid make_grid(std::vector<double> points);

struct Trajectory {
  std::vector<Eigen::VectorXd> states;  // aligned with grid points
  TimeGrid grid;
  std::uint64_t seed = 0;

  const Eigen::VectorXd& terminal() const { return states.back(); }
  // index of the grid point at or just below time t
  int index_at(double t) const;
};

using DriftFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;
// Mean displacement for the final step, replacing drift*dt. Bridges that pin
// supply the exact conditional mean jump so the terminal mean is unbiased for
// any schedule; diffusion noise on the step is kept.
using TerminalJumpFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;

// Z_{i+1} = Z_i + drift(Z_i, t_i) dt + sigma(t_i) sqrt(dt) xi_i.
// Drift is never evaluated at t_N. Throws ErrorCode::Numeric naming the step
// index when the drift or state turns non-finite.
Trajectory euler_maruyama(const DriftFn& drift, const NoiseSchedule& schedule,
                          const Eigen::VectorXd& z0, const TimeGrid& grid,
                          std::uint64_t seed,
                          const TerminalJumpFn& terminal_jump = {});
Trajectory euler_maruyama(const DriftFn& drift, const NoiseSchedule& schedule,
                          const Eigen::VectorXd& z0, const TimeGrid& grid,
                          Rng& rng, const TerminalJumpFn& terminal_jump = {});

// Columnar text: one row per grid point, time then the d state components.
void write_trajectory(const Trajectory& traj, const std::string& path);

}  // namespace bridgen::sde
