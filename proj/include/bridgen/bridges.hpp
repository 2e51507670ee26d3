#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bridgen/rng.hpp"
#include "bridgen/sde.hpp"

namespace bridgen::bridges {

enum class BridgeKind { Brownian, Forced, Lyapunov };

// Isotropic Gaussian initial distribution mu_0.
struct GaussianInit {
  Eigen::VectorXd mean;
  double var = 0.0;  // 0 = point mass
};

// General bridge drift -alpha_t grad_z U_t(z) + nu_t(z).
struct LyapunovSpec {
  std::function<double(const Eigen::VectorXd&, double)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> grad;
  std::function<double(double)> step_size;  // alpha_t
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> perturbation;  // nu_t, optional
};

// A conditional drift b_t(z|x) with its schedule and initial distribution.
// Brownian:  sigma_t^2 (x - z) / (beta_T - beta_t)
// Forced:    sigma_t f_t(z) + Brownian
// Lyapunov:  -alpha_t grad U_t(z) + nu_t(z)
class BridgeSpec {
public:
  static BridgeSpec brownian(Eigen::VectorXd pin, sde::NoiseSchedule schedule,
                             GaussianInit init);
  static BridgeSpec forced(Eigen::VectorXd pin, sde::NoiseSchedule schedule,
                           sde::DriftFn force, GaussianInit init);
  static BridgeSpec lyapunov(Eigen::VectorXd pin, sde::NoiseSchedule schedule,
                             LyapunovSpec lyap, GaussianInit init);

  // Training-time initialization Z_0 ~ N(x, beta_T I), matching the
  // time-reversed scaled Brownian motion started at the data point.
  static GaussianInit training_init(const Eigen::VectorXd& pin,
                                    const sde::NoiseSchedule& schedule);

  BridgeKind kind() const { return kind_; }
  const Eigen::VectorXd& pin() const { return pin_; }
  const sde::NoiseSchedule& schedule() const { return schedule_; }
  const GaussianInit& init() const { return init_; }
  int dim() const { return static_cast<int>(pin_.size()); }

  Eigen::VectorXd drift(const Eigen::VectorXd& z, double t) const;
  sde::DriftFn drift_fn() const;

  // f_t(z) of a forced bridge, with a finite-value check.
  Eigen::VectorXd drift_force(const Eigen::VectorXd& z, double t) const;

  // Pinned bridges (brownian/forced) supply the exact conditional mean jump
  // x - z for the integrator's final step; lyapunov bridges do not.
  sde::TerminalJumpFn terminal_jump() const;

  Eigen::VectorXd sample_init(Rng& rng) const;

  // Exact Gaussian marginal draw for the Brownian kind (t = T returns the pin,
  // t = 0 draws from mu_0); other kinds fall back to path simulation on a
  // uniform grid with fallback_steps steps over the horizon.
  Eigen::VectorXd sample_marginal(double t, Rng& rng,
                                  int fallback_steps = 256) const;

  sde::Trajectory simulate(const sde::TimeGrid& grid, Rng& rng) const;
  sde::Trajectory simulate(const sde::TimeGrid& grid, std::uint64_t seed) const;

private:
  BridgeSpec(BridgeKind kind, Eigen::VectorXd pin, sde::NoiseSchedule schedule,
             GaussianInit init);

  BridgeKind kind_;
  Eigen::VectorXd pin_;
  sde::NoiseSchedule schedule_;
  GaussianInit init_;
  sde::DriftFn force_;
  LyapunovSpec lyap_;
};

Eigen::VectorXd brownian_drift(const BridgeSpec& spec, const Eigen::VectorXd& z,
                               double t);
Eigen::VectorXd forced_drift(const BridgeSpec& spec, const Eigen::VectorXd& z,
                             double t);
Eigen::VectorXd lyapunov_drift(const BridgeSpec& spec, const Eigen::VectorXd& z,
                               double t);

// ---- numerical verification --------------------------------------------

struct PinningLevel {
  int steps = 0;
  double mean_err = 0.0;  // mean over paths of |Z_T - x| / sqrt(d)
  double max_err = 0.0;
  double tol = 0.0;  // tol_factor * sigma(T - T/steps) * sqrt(T/steps)
};

struct PinningReport {
  std::vector<PinningLevel> levels;
  bool pass = false;
  double tol_factor = 2.0;
  std::string note;
};

// Simulates n_paths trajectories per step count and measures the terminal
// error against the pin (per-coordinate RMS, so tolerances are dimension
// independent). PASS iff mean error decreases strictly across steps_list and
// the finest level is below its tolerance.
PinningReport verify_pinning(const BridgeSpec& spec,
                             const std::vector<int>& steps_list, int n_paths,
                             std::uint64_t seed, double tol_factor = 2.0);

// Step-size/perturbation data for the Gronwall divergence check. pl_beta and
// pl_gamma are the perturbation and Ito-correction bounds; they are unrelated
// to the schedule's beta_t integral.
struct GronwallSeries {
  std::function<double(double)> alpha;
  std::function<double(double)> pl_beta;
  std::function<double(double)> pl_gamma;
  sde::TimeGrid grid;
};

struct GronwallReport {
  std::vector<double> t;      // grid points except t_N
  std::vector<double> zeta;   // exp(int_0^t alpha)
  std::vector<double> ratio;  // zeta_t / int_0^t zeta_s (pl_beta + pl_gamma)
  bool pass = false;
  double threshold = 1e3;
  std::string note;
};

// Both traces must exceed the divergence threshold by the penultimate grid
// point and be increasing over the last tenth of the grid. The threshold is a
// finite proxy for divergence; it is an artifact constant, configurable here.
GronwallReport gronwall_check(const GronwallSeries& series,
                              double threshold = 1e3);

// Monte Carlo estimate of max_t { E[U_t(Z_t)] - E[|grad U_t(Z_t)|^2] } along
// simulated bridge paths; should be <= 0 (plus noise) for valid setups.
double pl_condition_probe(
    const std::function<double(const Eigen::VectorXd&, double)>& U,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>& grad_U,
    const BridgeSpec& spec, int n_paths, const sde::TimeGrid& grid,
    std::uint64_t seed);

std::string to_json(const PinningReport& report);
std::string to_json(const GronwallReport& report);

}  // namespace bridgen::bridges
