#include "bridgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bridgen/common.hpp"
#include "bridgen/io.hpp"

namespace bridgen::model {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::MarkedPointSet;

// ---- schedule spec --------------------------------------------------------

sde::NoiseSchedule ScheduleSpec::build() const {
  switch (kind) {
    case sde::NoiseSchedule::Kind::Constant:
      return sde::NoiseSchedule::constant(sigma0, horizon);
    case sde::NoiseSchedule::Kind::Linear:
      return sde::NoiseSchedule::linear(sigma0, sigma1, horizon);
    case sde::NoiseSchedule::Kind::Polynomial:
      return sde::NoiseSchedule::polynomial(sigma0, sigma1, power, horizon);
  }
  return sde::NoiseSchedule::constant(sigma0, horizon);
}

ScheduleSpec ScheduleSpec::parse(const std::string& kind, double s0, double s1,
                                 double power, double horizon) {
  ScheduleSpec spec;
  if (kind == "constant")
    spec.kind = sde::NoiseSchedule::Kind::Constant;
  else if (kind == "linear")
    spec.kind = sde::NoiseSchedule::Kind::Linear;
  else if (kind == "polynomial")
    spec.kind = sde::NoiseSchedule::Kind::Polynomial;
  else
    throw Error(ErrorCode::Config, "unknown schedule kind '" + kind + "'");
  spec.sigma0 = s0;
  spec.sigma1 = s1;
  spec.power = power;
  spec.horizon = horizon;
  spec.build();  // validates
  return spec;
}

std::string ScheduleSpec::kind_name() const {
  switch (kind) {
    case sde::NoiseSchedule::Kind::Constant: return "constant";
    case sde::NoiseSchedule::Kind::Linear: return "linear";
    case sde::NoiseSchedule::Kind::Polynomial: return "polynomial";
  }
  return "constant";
}

std::string bridge_kind_name(bridges::BridgeKind kind) {
  switch (kind) {
    case bridges::BridgeKind::Brownian: return "brownian";
    case bridges::BridgeKind::Forced: return "forced";
    case bridges::BridgeKind::Lyapunov: return "lyapunov";
  }
  return "brownian";
}

bridges::BridgeKind parse_bridge_kind(const std::string& name) {
  if (name == "brownian") return bridges::BridgeKind::Brownian;
  if (name == "forced") return bridges::BridgeKind::Forced;
  if (name == "lyapunov") return bridges::BridgeKind::Lyapunov;
  throw Error(ErrorCode::Config, "unknown bridge kind '" + name + "'");
}

// ---- parameter layout -----------------------------------------------------

namespace {

struct Layout {
  int F, H, E, L, O;
  int w0, b0;
  std::vector<int> w, b, w_in;
  int wo, bo;
  int total;
};

Layout make_layout(int F, int H, int E, int L, int O) {
  Layout lay;
  lay.F = F;
  lay.H = H;
  lay.E = E;
  lay.L = L;
  lay.O = O;
  int n = 0;
  lay.w0 = n; n += H * F;
  lay.b0 = n; n += H;
  for (int l = 0; l < L; ++l) {
    int in = (l == 0) ? 2 * H + E : H;
    lay.w_in.push_back(in);
    lay.w.push_back(n); n += H * in;
    lay.b.push_back(n); n += H;
  }
  lay.wo = n; n += O * H;
  lay.bo = n; n += O;
  lay.total = n;
  return lay;
}

using CMap = Eigen::Map<const MatrixXd>;
using CVec = Eigen::Map<const VectorXd>;
using MMap = Eigen::Map<MatrixXd>;
using MVec = Eigen::Map<VectorXd>;

// Mean over columns per row, summed in value-sorted order so the result is
// invariant to column permutation down to the last bit.
VectorXd sorted_col_mean(const MatrixXd& a) {
  const int rows = static_cast<int>(a.rows());
  const int cols = static_cast<int>(a.cols());
  VectorXd out(rows);
  std::vector<double> buf(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) buf[c] = a(r, c);
    std::sort(buf.begin(), buf.end());
    double acc = 0.0;
    for (double v : buf) acc += v;
    out[r] = acc / cols;
  }
  return out;
}

}  // namespace

// ---- drift model ----------------------------------------------------------

DriftModel::DriftModel(int type_count, ScheduleSpec schedule, NetArch arch,
                       AlphaMode alpha_mode, double alpha0,
                       std::uint64_t init_seed)
    : k_(type_count),
      schedule_(schedule),
      arch_(arch),
      alpha_mode_(alpha_mode),
      alpha0_(alpha0),
      alpha_(alpha0) {
  check(k_ >= 0, ErrorCode::Config, "negative type count");
  check(arch_.hidden >= 1 && arch_.trunk_layers >= 1, ErrorCode::Config,
        "network needs at least one hidden unit and trunk layer");
  check(arch_.time_dim >= 2 && arch_.time_dim % 2 == 0, ErrorCode::Config,
        "time embedding size must be even and >= 2");
  schedule_.build();  // validates

  Layout lay = make_layout(feat_dim(), arch_.hidden, arch_.time_dim,
                           arch_.trunk_layers, out_dim());
  theta_ = VectorXd::Zero(lay.total);

  // Xavier-uniform hidden layers; the output layer starts at zero so a fresh
  // model is the zero drift.
  Rng rng(init_seed, 0x6d6f64656cull);
  auto fill = [&](int off, int rows, int cols) {
    double s = std::sqrt(6.0 / (rows + cols));
    for (int i = 0; i < rows * cols; ++i)
      theta_[off + i] = s * (2.0 * rng.uniform() - 1.0);
  };
  fill(lay.w0, lay.H, lay.F);
  for (int l = 0; l < lay.L; ++l) fill(lay.w[l], lay.H, lay.w_in[l]);
}

int DriftModel::feat_dim() const {
  return 3 + k_ + ((k_ > 0 && arch_.charge_feature) ? 1 : 0);
}

void DriftModel::bind_force(const energies::EnergyForce& ef) {
  force_ = ef;
  if (ef.tables != nullptr) tables_ = ef.tables;
}

double DriftModel::alpha_at(double t) const {
  if (alpha_mode_ == AlphaMode::Learnable) return alpha_;
  const double T = schedule_.horizon;
  return std::max(0.0, alpha0_ / T * (1.0 - t / T));
}

int DriftModel::points_of(const VectorXd& state) const {
  const int per = 3 + k_;
  check(state.size() > 0 && state.size() % per == 0, ErrorCode::Domain,
        "state size is not a multiple of 3+k");
  return static_cast<int>(state.size()) / per;
}

void DriftModel::net_forward(const VectorXd& state, double t, Tape& tape) const {
  const int m = points_of(state);
  const int F = feat_dim(), H = arch_.hidden, E = arch_.time_dim;
  const int L = arch_.trunk_layers, O = out_dim();
  const Layout lay = make_layout(F, H, E, L, O);
  const double T = schedule_.horizon;

  tape.m = m;
  tape.feats.resize(F, m);
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) tape.feats(c, i) = state[3 * i + c];
    if (k_ > 0) {
      const double ts = arch_.scale_types ? 0.25 : 1.0;
      int best = 0;
      double best_v = state[3 * m + k_ * i];
      for (int c = 0; c < k_; ++c) {
        double v = state[3 * m + k_ * i + c];
        tape.feats(3 + c, i) = ts * v;
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      if (arch_.charge_feature) {
        check(tables_ != nullptr, ErrorCode::Config,
              "charge feature needs atom tables bound");
        const double cs = arch_.scale_charge ? 0.1 : 1.0;
        tape.feats(3 + k_, i) = cs * tables_->info(best).charge;
      }
    }
  }

  tape.temb.resize(E);
  for (int j = 0; j < E / 2; ++j) {
    double w = 3.141592653589793 * std::pow(2.0, j) / T;
    tape.temb[2 * j] = std::sin(w * t);
    tape.temb[2 * j + 1] = std::cos(w * t);
  }

  // Per-point matrix-vector products keep every point's arithmetic identical
  // regardless of its column position, so permutation equivariance holds down
  // to the last bit (blocked matrix-matrix kernels would not).
  CMap w0(theta_.data() + lay.w0, H, F);
  CVec b0(theta_.data() + lay.b0, H);
  tape.enc.resize(H, m);
  VectorXd tmp(H);
  for (int i = 0; i < m; ++i) {
    tmp.noalias() = w0 * tape.feats.col(i);
    tmp += b0;
    for (int r = 0; r < H; ++r) tape.enc(r, i) = std::tanh(tmp[r]);
  }
  tape.context = sorted_col_mean(tape.enc);

  MatrixXd u(2 * H + E, m);
  u.topRows(H) = tape.enc;
  u.middleRows(H, H).colwise() = tape.context;
  u.bottomRows(E).colwise() = tape.temb;

  tape.trunk.assign(L, MatrixXd());
  const MatrixXd* prev = &u;
  for (int l = 0; l < L; ++l) {
    CMap wl(theta_.data() + lay.w[l], H, lay.w_in[l]);
    CVec bl(theta_.data() + lay.b[l], H);
    tape.trunk[l].resize(H, m);
    for (int i = 0; i < m; ++i) {
      tmp.noalias() = wl * prev->col(i);
      tmp += bl;
      for (int r = 0; r < H; ++r) tape.trunk[l](r, i) = std::tanh(tmp[r]);
    }
    prev = &tape.trunk[l];
  }

  // Bridge drifts grow like sigma^2/(beta_T - beta_t) while the training
  // marginal spread shrinks like sqrt(beta_T - beta_t); scaling the output by
  // sigma/sqrt(beta_T - beta_t) keeps the raw regression target O(sigma) at
  // every time, which plain SGD can fit.
  tape.out_scale = 1.0;
  if (arch_.precondition) {
    const sde::NoiseSchedule sched = schedule_.build();
    tape.out_scale =
        sched.sigma(t) / std::sqrt(sched.beta(T) - sched.beta(t));
  }

  CMap wo(theta_.data() + lay.wo, O, H);
  CVec bo(theta_.data() + lay.bo, O);
  tape.out.resize(O, m);
  VectorXd out_tmp(O);
  for (int i = 0; i < m; ++i) {
    out_tmp.noalias() = wo * prev->col(i);
    out_tmp += bo;
    tape.out.col(i) = tape.out_scale * out_tmp;
  }
}

void DriftModel::net_backward(const Tape& tape, const MatrixXd& d_out,
                              VectorXd& grad) const {
  const int m = tape.m;
  const int F = feat_dim(), H = arch_.hidden, E = arch_.time_dim;
  const int L = arch_.trunk_layers, O = out_dim();
  const Layout lay = make_layout(F, H, E, L, O);
  check(grad.size() == theta_.size(), ErrorCode::Domain,
        "gradient buffer size mismatch");

  MatrixXd u(2 * H + E, m);
  u.topRows(H) = tape.enc;
  u.middleRows(H, H).colwise() = tape.context;
  u.bottomRows(E).colwise() = tape.temb;

  MatrixXd d_pre = tape.out_scale * d_out;  // chain through the output scale
  CMap wo(theta_.data() + lay.wo, O, H);
  MMap gwo(grad.data() + lay.wo, O, H);
  MVec gbo(grad.data() + lay.bo, O);
  gwo += d_pre * tape.trunk[L - 1].transpose();
  gbo += d_pre.rowwise().sum();

  MatrixXd delta = wo.transpose() * d_pre;  // H x m
  for (int l = L - 1; l >= 0; --l) {
    MatrixXd dpre =
        delta.cwiseProduct((1.0 - tape.trunk[l].array().square()).matrix());
    const MatrixXd& input = (l == 0) ? u : tape.trunk[l - 1];
    CMap wl(theta_.data() + lay.w[l], H, lay.w_in[l]);
    MMap gwl(grad.data() + lay.w[l], H, lay.w_in[l]);
    MVec gbl(grad.data() + lay.b[l], H);
    gwl += dpre * input.transpose();
    gbl += dpre.rowwise().sum();
    delta = wl.transpose() * dpre;
  }

  // delta is (2H+E) x m: direct encoder path plus the pooled-context path.
  MatrixXd d_enc = delta.topRows(H);
  VectorXd d_ctx = delta.middleRows(H, H).rowwise().sum() / m;
  d_enc.colwise() += d_ctx;

  MatrixXd dpre0 =
      d_enc.cwiseProduct((1.0 - tape.enc.array().square()).matrix());
  MMap gw0(grad.data() + lay.w0, H, F);
  MVec gb0(grad.data() + lay.b0, H);
  gw0 += dpre0 * tape.feats.transpose();
  gb0 += dpre0.rowwise().sum();
}

namespace {

VectorXd assemble_flat(const MatrixXd& out, int m, int k) {
  VectorXd flat(m * (3 + k));
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) flat[3 * i + c] = out(c, i);
    for (int c = 0; c < k; ++c) flat[3 * m + k * i + c] = out(3 + c, i);
  }
  return flat;
}

MatrixXd to_pointwise(const VectorXd& flat, int m, int k) {
  MatrixXd out(3 + k, m);
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) out(c, i) = flat[3 * i + c];
    for (int c = 0; c < k; ++c) out(3 + c, i) = flat[3 * m + k * i + c];
  }
  return out;
}

// Per-point contributions summed in sorted order: permutation-invariant
// bitwise.
double sorted_sqnorm(const VectorXd& flat, int m, int k) {
  std::vector<double> per_point(m, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) per_point[i] += flat[3 * i + c] * flat[3 * i + c];
    for (int c = 0; c < k; ++c) {
      double v = flat[3 * m + k * i + c];
      per_point[i] += v * v;
    }
  }
  std::sort(per_point.begin(), per_point.end());
  double acc = 0.0;
  for (double v : per_point) acc += v;
  return acc;
}

}  // namespace

VectorXd DriftModel::net_eval(const VectorXd& state, double t) const {
  Tape tape;
  net_forward(state, t, tape);
  return assemble_flat(tape.out, tape.m, k_);
}

Eigen::VectorXd DriftModel::drift(const VectorXd& state, double t) const {
  VectorXd s = net_eval(state, t);
  if (force_) {
    sde::DriftFn f = energies::make_force(*force_, k_);
    s += alpha_at(t) * f(state, t);
  }
  return s;
}

sde::DriftFn DriftModel::drift_fn() const {
  return [this](const VectorXd& z, double t) { return drift(z, t); };
}

// ---- loss -----------------------------------------------------------------

LossResult sm_loss(const DriftModel& model, const std::vector<BatchItem>& batch,
                   bridges::BridgeKind kind, const sde::TimeGrid& grid,
                   const LossOptions& opts) {
  check(!batch.empty(), ErrorCode::Domain, "empty batch");
  check(kind != bridges::BridgeKind::Lyapunov, ErrorCode::Config,
        "training supports brownian and forced bridges");
  check(opts.time_samples >= 1, ErrorCode::Config, "time_samples must be >= 1");

  const sde::NoiseSchedule sched = [&] {
    ScheduleSpec ss = model.schedule_spec();
    return ss.build();
  }();
  const double T = grid.horizon();
  const int N = grid.steps();
  const int k = model.type_count();

  LossResult res;
  res.grad = VectorXd::Zero(model.param_count());

  sde::DriftFn force;
  if (model.has_force()) force = energies::make_force(*model.force(), k);
  if (kind == bridges::BridgeKind::Forced)
    check(static_cast<bool>(force), ErrorCode::Config,
          "forced-bridge training needs a bound force");

  for (const BatchItem& item : batch) {
    const MarkedPointSet& x = *item.x;
    check(x.type_count() == k, ErrorCode::Domain,
          "item type count does not match the model");
    const int m = x.size();
    VectorXd pin = geometry::flatten(x);
    bridges::GaussianInit init = bridges::BridgeSpec::training_init(pin, sched);
    bridges::BridgeSpec spec =
        kind == bridges::BridgeKind::Brownian
            ? bridges::BridgeSpec::brownian(pin, sched, init)
            : bridges::BridgeSpec::forced(pin, sched, force, init);

    Rng rng(item.stream);
    for (int j = 0; j < opts.time_samples; ++j) {
      const int idx = rng.uniform_int(N);  // t_N excluded by construction
      const double t = grid.points[idx];
      VectorXd zt;
      if (kind == bridges::BridgeKind::Forced && item.cached_path != nullptr)
        zt = item.cached_path->states[idx];
      else
        zt = spec.sample_marginal(t, rng);

      VectorXd b = spec.drift(zt, t);
      const double sig = sched.sigma(t);
      const double w =
          T / (sig * sig * opts.time_samples * static_cast<double>(batch.size()));

      DriftModel::Tape tape;
      model.net_forward(zt, t, tape);
      VectorXd s = assemble_flat(tape.out, m, k);
      VectorXd fterm;
      if (model.has_force()) {
        fterm = force(zt, t);
        s += model.alpha_at(t) * fterm;
      }
      VectorXd r = s - b;
      res.value += 0.5 * w * sorted_sqnorm(r, m, k);

      MatrixXd d_out = w * to_pointwise(r, m, k);
      model.net_backward(tape, d_out, res.grad);
      if (model.alpha_mode() == AlphaMode::Learnable && model.has_force())
        res.grad_alpha += w * r.dot(fterm);
    }
  }
  return res;
}

LossResult sm_loss(const DriftModel& model,
                   const std::vector<MarkedPointSet>& batch,
                   bridges::BridgeKind kind, const sde::TimeGrid& grid,
                   std::uint64_t seed, const LossOptions& opts) {
  std::vector<sde::Trajectory> paths;
  std::vector<BatchItem> items;
  items.reserve(batch.size());
  if (kind == bridges::BridgeKind::Forced) {
    paths.reserve(batch.size());
    const sde::NoiseSchedule sched = model.schedule_spec().build();
    sde::DriftFn force = energies::make_force(*model.force(), model.type_count());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      VectorXd pin = geometry::flatten(batch[i]);
      auto spec = bridges::BridgeSpec::forced(
          pin, sched, force, bridges::BridgeSpec::training_init(pin, sched));
      Rng rng(seed, 0x7061746800ull + i);
      paths.push_back(spec.simulate(grid, rng));
    }
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    BatchItem item;
    item.x = &batch[i];
    item.cached_path = paths.empty() ? nullptr : &paths[i];
    Rng mix(seed, 0x6c6f737300ull + i);
    item.stream = mix.next();
    items.push_back(item);
  }
  return sm_loss(model, items, kind, grid, opts);
}

double matching_term(const sde::DriftFn& drift_field,
                     const bridges::BridgeSpec& bridge,
                     const sde::TimeGrid& grid, std::uint64_t seed,
                     int time_samples) {
  check(time_samples >= 1, ErrorCode::Domain, "time_samples must be >= 1");
  const double T = grid.horizon();
  const int N = grid.steps();
  Rng rng(seed);
  double acc = 0.0;
  for (int j = 0; j < time_samples; ++j) {
    const int idx = rng.uniform_int(N);
    const double t = grid.points[idx];
    VectorXd zt = bridge.sample_marginal(t, rng);
    VectorXd r = drift_field(zt, t) - bridge.drift(zt, t);
    const double sig = bridge.schedule().sigma(t);
    acc += 0.5 * T * r.squaredNorm() / (sig * sig);
  }
  return acc / time_samples;
}

// ---- training -------------------------------------------------------------

void TrainConfig::validate() const {
  schedule.build();
  check(steps >= 1, ErrorCode::Config, "steps must be >= 1");
  check(epochs >= 1, ErrorCode::Config, "epochs must be >= 1");
  check(batch_size >= 1, ErrorCode::Config, "batch_size must be >= 1");
  check(learning_rate >= 0.0, ErrorCode::Config, "learning_rate must be >= 0");
  check(momentum >= 0.0 && momentum < 1.0, ErrorCode::Config,
        "momentum must be in [0, 1)");
  check(time_samples >= 1, ErrorCode::Config, "time_samples must be >= 1");
}

config::KvConfig TrainConfig::to_kv() const {
  config::KvConfig kv;
  kv.set("schedule", schedule.kind_name());
  kv.set("sigma0", schedule.sigma0);
  kv.set("sigma1", schedule.sigma1);
  kv.set("schedule_power", schedule.power);
  kv.set("horizon", schedule.horizon);
  kv.set("bridge", bridge_kind_name(bridge));
  kv.set("steps", static_cast<long>(steps));
  kv.set("epochs", static_cast<long>(epochs));
  kv.set("batch_size", static_cast<long>(batch_size));
  kv.set("learning_rate", learning_rate);
  kv.set("momentum", momentum);
  kv.set("time_samples", static_cast<long>(time_samples));
  kv.set("seed", seed);
  kv.set("alpha_mode",
         alpha_mode == AlphaMode::Scheduled ? "scheduled" : "learnable");
  kv.set("alpha0", alpha0);
  kv.set("hidden", static_cast<long>(arch.hidden));
  kv.set("trunk_layers", static_cast<long>(arch.trunk_layers));
  kv.set("time_dim", static_cast<long>(arch.time_dim));
  kv.set("scale_types", arch.scale_types ? "true" : "false");
  kv.set("scale_charge", arch.scale_charge ? "true" : "false");
  kv.set("charge_feature", arch.charge_feature ? "true" : "false");
  kv.set("precondition", arch.precondition ? "true" : "false");
  kv.set("energy", energy);
  kv.set("knn_k", static_cast<long>(knn_k));
  kv.set("clip_norm", clip_norm);
  kv.set("amber_terms", amber_terms);
  kv.set("stats_path", stats_path);
  kv.set("tables_path", tables_path);
  return kv;
}

TrainConfig TrainConfig::from_kv(const config::KvConfig& kv) {
  TrainConfig c;
  c.schedule = ScheduleSpec::parse(
      kv.get("schedule", "constant"), kv.get_double("sigma0", 1.0),
      kv.get_double("sigma1", 1.0), kv.get_double("schedule_power", 1.0),
      kv.get_double("horizon", 1.0));
  c.bridge = parse_bridge_kind(kv.get("bridge", "brownian"));
  c.steps = kv.get_int("steps", 100);
  c.epochs = kv.get_int("epochs", 100);
  c.batch_size = kv.get_int("batch_size", 16);
  c.learning_rate = kv.get_double("learning_rate", 1e-4);
  c.momentum = kv.get_double("momentum", 0.0);
  c.time_samples = kv.get_int("time_samples", 4);
  c.seed = kv.get_u64("seed", 0);
  std::string mode = kv.get("alpha_mode", "scheduled");
  if (mode == "scheduled")
    c.alpha_mode = AlphaMode::Scheduled;
  else if (mode == "learnable")
    c.alpha_mode = AlphaMode::Learnable;
  else
    throw Error(ErrorCode::Config, "unknown alpha_mode '" + mode + "'");
  c.alpha0 = kv.get_double("alpha0", 1e-3);
  c.arch.hidden = kv.get_int("hidden", 64);
  c.arch.trunk_layers = kv.get_int("trunk_layers", 2);
  c.arch.time_dim = kv.get_int("time_dim", 8);
  c.arch.scale_types = kv.get_bool("scale_types", true);
  c.arch.scale_charge = kv.get_bool("scale_charge", true);
  c.arch.charge_feature = kv.get_bool("charge_feature", false);
  c.arch.precondition = kv.get_bool("precondition", true);
  c.energy = kv.get("energy", "none");
  c.knn_k = kv.get_int("knn_k", 4);
  c.clip_norm = kv.get_double("clip_norm", 1e3);
  c.amber_terms = kv.get("amber_terms", "bond,angle,lj,coulomb");
  c.stats_path = kv.get("stats_path", "");
  c.tables_path = kv.get("tables_path", "");
  c.validate();
  return c;
}

namespace {

std::uint64_t mix_stream(std::uint64_t tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = tag ^ (a * 0x9e3779b97f4a7c15ull) ^ (b + 0x632be59bd9b4e019ull);
  x ^= x >> 29;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 32;
  return x;
}

}  // namespace

TrainResult train(const TrainConfig& config,
                  const std::vector<MarkedPointSet>& dataset,
                  const energies::EnergyForce* force) {
  config.validate();
  check(!dataset.empty(), ErrorCode::Data, "empty training dataset");
  const int k = dataset.front().type_count();
  for (const auto& item : dataset)
    check(item.type_count() == k, ErrorCode::Data,
          "all items must share the type count");
  if (config.bridge == bridges::BridgeKind::Forced)
    check(force != nullptr, ErrorCode::Config,
          "forced-bridge training needs an energy force");

  const sde::NoiseSchedule sched = config.schedule.build();
  const double T = sched.horizon();
  const double beta_T = sched.beta(T);

  // The learned sampler starts from N(0, beta_T I) while training bridges
  // start from N(x, beta_T I); these agree only when beta_T dominates the
  // data spread.
  {
    geometry::Moments coord_var;
    for (const auto& item : dataset)
      for (int i = 0; i < item.size(); ++i)
        for (int c = 0; c < 3; ++c) coord_var.add(item.coords(i, c));
    double var = coord_var.variance(0.0);
    if (beta_T < 4.0 * var)
      warn("beta_T = " + std::to_string(beta_T) + " is below 4x data variance " +
           std::to_string(var) + "; initial distributions may mismatch");
  }

  DriftModel model(k, config.schedule, config.arch, config.alpha_mode,
                   config.alpha0, config.seed);
  if (force != nullptr) model.bind_force(*force);

  const sde::TimeGrid grid = sde::make_grid(config.steps, T);
  const int n = static_cast<int>(dataset.size());

  sde::DriftFn force_fn;
  if (force != nullptr) force_fn = energies::make_force(*force, k);

  TrainResult result;
  VectorXd velocity = VectorXd::Zero(model.param_count());
  double alpha_velocity = 0.0;
  VectorXd last_good_theta = model.params();
  double last_good_alpha = model.alpha_value();

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Forced bridges have no closed-form marginal; one path per item per
    // epoch serves all time samples.
    std::vector<sde::Trajectory> paths;
    if (config.bridge == bridges::BridgeKind::Forced) {
      paths.resize(n);
      for (int i = 0; i < n; ++i) {
        VectorXd pin = geometry::flatten(dataset[i]);
        auto spec = bridges::BridgeSpec::forced(
            pin, sched, force_fn, bridges::BridgeSpec::training_init(pin, sched));
        Rng rng(config.seed, mix_stream(0x70617468, epoch, i));
        paths[i] = spec.simulate(grid, rng);
      }
    }

    {
      Rng shuffle_rng(config.seed, mix_stream(0x73687566, epoch, 0));
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    }

    double epoch_loss = 0.0;
    LossOptions opts;
    opts.time_samples = config.time_samples;
    for (int start = 0; start < n; start += config.batch_size) {
      const int stop = std::min(n, start + config.batch_size);
      std::vector<BatchItem> batch;
      for (int b = start; b < stop; ++b) {
        BatchItem item;
        item.x = &dataset[order[b]];
        item.cached_path = paths.empty() ? nullptr : &paths[order[b]];
        item.stream = mix_stream(config.seed ^ 0x6c6f7373, epoch, order[b]);
        batch.push_back(item);
      }
      LossResult lr = sm_loss(model, batch, config.bridge, grid, opts);
      epoch_loss += lr.value * static_cast<double>(stop - start);

      velocity = config.momentum * velocity - config.learning_rate * lr.grad;
      model.params() += velocity;
      if (config.alpha_mode == AlphaMode::Learnable) {
        alpha_velocity = config.momentum * alpha_velocity -
                         config.learning_rate * lr.grad_alpha;
        model.set_alpha(model.alpha_value() + alpha_velocity);
      }
    }
    epoch_loss /= static_cast<double>(n);

    if (!std::isfinite(epoch_loss) || !model.params().allFinite()) {
      warn("loss diverged at epoch " + std::to_string(epoch) +
           "; keeping last finite parameters");
      model.params() = last_good_theta;
      model.set_alpha(last_good_alpha);
      result.diverged = true;
      break;
    }
    last_good_theta = model.params();
    last_good_alpha = model.alpha_value();
    result.trace.push_back({epoch, epoch_loss, model.alpha_value()});
  }

  result.checkpoint.version = 1;
  result.checkpoint.config = config;
  result.checkpoint.type_count = k;
  result.checkpoint.theta = model.params();
  result.checkpoint.alpha = model.alpha_value();
  if (force != nullptr && force->stats != nullptr)
    result.checkpoint.stats_fingerprint = io::stats_fingerprint(*force->stats);
  return result;
}

// ---- checkpoint i/o -------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'B', 'G', 'E', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size())
    throw Error(ErrorCode::Data, "checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::uint64_t Checkpoint::fingerprint() const {
  std::string text = config.to_kv().serialize();
  std::uint64_t h = fnv1a(text);
  h = fnv1a(theta.data(), sizeof(double) * theta.size(), h);
  h = fnv1a(&alpha, sizeof(alpha), h);
  return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put(buf, ckpt.version);
  put(buf, ckpt.stats_fingerprint);
  put(buf, static_cast<std::int32_t>(ckpt.type_count));
  put(buf, ckpt.alpha);
  std::string cfg = ckpt.config.to_kv().serialize();
  put(buf, static_cast<std::uint32_t>(cfg.size()));
  buf += cfg;
  put(buf, static_cast<std::uint64_t>(ckpt.theta.size()));
  buf.append(reinterpret_cast<const char*>(ckpt.theta.data()),
             sizeof(double) * ckpt.theta.size());
  std::uint64_t checksum = fnv1a(buf.data(), buf.size());
  put(buf, checksum);
  io::write_file(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string buf = io::read_file(path);
  check(buf.size() > sizeof(kMagic) + sizeof(std::uint64_t), ErrorCode::Data,
        path + ": checkpoint truncated");
  check(std::memcmp(buf.data(), kMagic, sizeof(kMagic)) == 0, ErrorCode::Data,
        path + ": not a checkpoint file");

  std::uint64_t stored_checksum;
  std::memcpy(&stored_checksum, buf.data() + buf.size() - sizeof(std::uint64_t),
              sizeof(std::uint64_t));
  std::uint64_t actual =
      fnv1a(buf.data(), buf.size() - sizeof(std::uint64_t));
  check(stored_checksum == actual, ErrorCode::Data,
        path + ": checkpoint integrity check failed");

  std::size_t pos = sizeof(kMagic);
  Checkpoint ckpt;
  ckpt.version = take<std::uint32_t>(buf, pos);
  check(ckpt.version == 1, ErrorCode::Data,
        path + ": unsupported checkpoint version " +
            std::to_string(ckpt.version));
  ckpt.stats_fingerprint = take<std::uint64_t>(buf, pos);
  ckpt.type_count = take<std::int32_t>(buf, pos);
  ckpt.alpha = take<double>(buf, pos);
  std::uint32_t cfg_len = take<std::uint32_t>(buf, pos);
  if (pos + cfg_len > buf.size())
    throw Error(ErrorCode::Data, path + ": checkpoint truncated");
  ckpt.config = TrainConfig::from_kv(
      config::KvConfig::parse(buf.substr(pos, cfg_len)));
  pos += cfg_len;
  std::uint64_t theta_n = take<std::uint64_t>(buf, pos);
  if (pos + theta_n * sizeof(double) > buf.size())
    throw Error(ErrorCode::Data, path + ": checkpoint truncated");
  ckpt.theta.resize(theta_n);
  std::memcpy(ckpt.theta.data(), buf.data() + pos, theta_n * sizeof(double));
  return ckpt;
}

std::vector<std::string> config_mismatch_warnings(const Checkpoint& ckpt,
                                                  const TrainConfig& expected) {
  std::vector<std::string> warnings;
  auto a = ckpt.config.to_kv().entries();
  auto b = expected.to_kv().entries();
  for (const auto& [key, value] : a) {
    auto it = b.find(key);
    if (it != b.end() && it->second != value)
      warnings.push_back("config mismatch for '" + key + "': checkpoint has '" +
                         value + "', expected '" + it->second + "'");
  }
  return warnings;
}

DriftModel build_model(const Checkpoint& ckpt) {
  DriftModel model(ckpt.type_count, ckpt.config.schedule, ckpt.config.arch,
                   ckpt.config.alpha_mode, ckpt.config.alpha0, 0);
  check(model.param_count() == ckpt.theta.size(), ErrorCode::Data,
        "checkpoint parameter count mismatch");
  model.params() = ckpt.theta;
  model.set_alpha(ckpt.alpha);
  return model;
}

}  // namespace bridgen::model
