#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bridgen/bridges.hpp"
#include "bridgen/config.hpp"
#include "bridgen/energies.hpp"
#include "bridgen/geometry.hpp"
#include "bridgen/sde.hpp"

namespace bridgen::model {

// Serializable noise-schedule parameters.
struct ScheduleSpec {
  sde::NoiseSchedule::Kind kind = sde::NoiseSchedule::Kind::Constant;
  double sigma0 = 1.0;
  double sigma1 = 1.0;
  double power = 1.0;
  double horizon = 1.0;

  sde::NoiseSchedule build() const;
  static ScheduleSpec parse(const std::string& kind, double s0, double s1,
                            double power, double horizon);
  std::string kind_name() const;
};

struct NetArch {
  int hidden = 64;
  int trunk_layers = 2;
  int time_dim = 8;            // sinusoidal embedding size, even
  bool scale_types = true;     // one-hot inputs x 0.25
  bool scale_charge = true;    // charge input x 0.1
  bool charge_feature = false; // feed q(rounded type) per point; needs tables
  // Multiply the MLP output by sigma_t/sqrt(beta_T - beta_t) so the raw
  // network fits an O(sigma) field at every time.
  bool precondition = true;
};

enum class AlphaMode { Scheduled, Learnable };

// Learnable drift s_t(z) = alpha f_t(z) + net(z, t). The network is a shared
// per-point MLP over (encoded point features, a mean-pooled context vector,
// and a sinusoidal time embedding); weight sharing plus pooled context make
// it permutation-equivariant. Pooling sums in value-sorted order, so
// equivariance holds bitwise.
class DriftModel {
public:
  DriftModel(int type_count, ScheduleSpec schedule, NetArch arch,
             AlphaMode alpha_mode, double alpha0, std::uint64_t init_seed);

  // f = -grad E from the energies module; ef's stats/tables are borrowed.
  void bind_force(const energies::EnergyForce& ef);
  bool has_force() const { return force_.has_value(); }
  const energies::EnergyForce* force() const {
    return force_ ? &*force_ : nullptr;
  }
  // Required when arch.charge_feature is on; borrowed.
  void set_tables(const geometry::AtomTables* tables) { tables_ = tables; }

  int type_count() const { return k_; }
  int out_dim() const { return 3 + k_; }
  const ScheduleSpec& schedule_spec() const { return schedule_; }
  const NetArch& arch() const { return arch_; }
  AlphaMode alpha_mode() const { return alpha_mode_; }

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }
  int param_count() const { return static_cast<int>(theta_.size()); }

  double alpha_value() const { return alpha_; }
  void set_alpha(double a) { alpha_ = a; }
  // Learnable: the current parameter. Scheduled: alpha0/T decaying linearly
  // to 0 at t = T.
  double alpha_at(double t) const;

  // Full drift on a flat state of m points (m inferred from the state size).
  Eigen::VectorXd drift(const Eigen::VectorXd& state, double t) const;
  Eigen::VectorXd net_eval(const Eigen::VectorXd& state, double t) const;
  sde::DriftFn drift_fn() const;

  // Forward caches for reverse-mode accumulation.
  struct Tape {
    int m = 0;
    Eigen::MatrixXd feats;   // F x m
    Eigen::MatrixXd enc;     // H x m (tanh activations)
    Eigen::VectorXd context; // H
    Eigen::VectorXd temb;    // E
    std::vector<Eigen::MatrixXd> trunk;  // activations per layer, H x m
    Eigen::MatrixXd out;     // O x m, already scaled by out_scale
    double out_scale = 1.0;
  };
  void net_forward(const Eigen::VectorXd& state, double t, Tape& tape) const;
  // Accumulates d(loss)/d(theta) into grad given d(loss)/d(out).
  void net_backward(const Tape& tape, const Eigen::MatrixXd& d_out,
                    Eigen::VectorXd& grad) const;

private:
  int points_of(const Eigen::VectorXd& state) const;
  int feat_dim() const;

  int k_;
  ScheduleSpec schedule_;
  NetArch arch_;
  AlphaMode alpha_mode_;
  double alpha0_;
  double alpha_;
  Eigen::VectorXd theta_;
  std::optional<energies::EnergyForce> force_;
  const geometry::AtomTables* tables_ = nullptr;
};

struct TrainConfig {
  ScheduleSpec schedule;
  bridges::BridgeKind bridge = bridges::BridgeKind::Brownian;
  int steps = 100;  // time discretization for training bridges
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double momentum = 0.0;
  int time_samples = 4;  // loss time-sampling count per item
  std::uint64_t seed = 0;
  AlphaMode alpha_mode = AlphaMode::Scheduled;
  double alpha0 = 1e-3;
  NetArch arch;

  // Side information used to rebuild the force at sampling time.
  std::string energy = "none";  // none|amber|statistical|riesz|knn
  int knn_k = 4;
  double clip_norm = 1e3;
  std::string amber_terms = "bond,angle,lj,coulomb";
  std::string stats_path;
  std::string tables_path;

  config::KvConfig to_kv() const;
  static TrainConfig from_kv(const config::KvConfig& kv);
  void validate() const;
};

struct LossOptions {
  int time_samples = 4;
};

struct LossResult {
  double value = 0.0;
  Eigen::VectorXd grad;       // d(loss)/d(theta)
  double grad_alpha = 0.0;    // nonzero only for learnable alpha
};

struct BatchItem {
  const geometry::MarkedPointSet* x = nullptr;
  const sde::Trajectory* cached_path = nullptr;  // forced-bridge marginals
  std::uint64_t stream = 0;
};

// Monte Carlo estimate of the score-matching loss: the mean over sampled
// times of (T/2) |sigma_t^{-1} (s_theta(Z_t) - b_t(Z_t|x))|^2, averaged over
// the batch. Z_t comes from the exact Brownian marginal or a cached forced
// path; t is drawn uniformly on the grid excluding t_N. Gradients flow
// through the network, and through alpha when it is learnable.
LossResult sm_loss(const DriftModel& model, const std::vector<BatchItem>& batch,
                   bridges::BridgeKind kind, const sde::TimeGrid& grid,
                   const LossOptions& opts);

// Convenience wrapper deriving per-item streams from (seed, index) and
// simulating forced paths on the fly.
LossResult sm_loss(const DriftModel& model,
                   const std::vector<geometry::MarkedPointSet>& batch,
                   bridges::BridgeKind kind, const sde::TimeGrid& grid,
                   std::uint64_t seed, const LossOptions& opts);

// The matching term for an arbitrary drift field against a given bridge;
// zero exactly when the field equals the bridge drift on sampled states.
double matching_term(const sde::DriftFn& drift_field,
                     const bridges::BridgeSpec& bridge,
                     const sde::TimeGrid& grid, std::uint64_t seed,
                     int time_samples);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double alpha = 0.0;
};

struct Checkpoint {
  std::uint32_t version = 1;
  TrainConfig config;
  int type_count = 0;
  Eigen::VectorXd theta;
  double alpha = 0.0;
  std::uint64_t stats_fingerprint = 0;

  std::uint64_t fingerprint() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> trace;
  bool diverged = false;
};

// Plain SGD (optional momentum) on the score-matching loss; forced-bridge
// marginal paths are cached per item per epoch. Aborts on a non-finite loss
// and returns the last finite-epoch parameters.
TrainResult train(const TrainConfig& config,
                  const std::vector<geometry::MarkedPointSet>& dataset,
                  const energies::EnergyForce* force);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::vector<std::string> config_mismatch_warnings(const Checkpoint& ckpt,
                                                  const TrainConfig& expected);

// Rebuilds the drift model (force unbound; callers rebind from config).
DriftModel build_model(const Checkpoint& ckpt);

std::string bridge_kind_name(bridges::BridgeKind kind);
bridges::BridgeKind parse_bridge_kind(const std::string& name);

}  // namespace bridgen::model
