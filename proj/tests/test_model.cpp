#include "bridgen/model.hpp"

#include <cmath>
#include <doctest.h>
#include <filesystem>

#include "bridgen/common.hpp"
#include "bridgen/eval.hpp"
#include "bridgen/io.hpp"
#include "bridgen/rng.hpp"

using namespace bridgen;
using namespace bridgen::model;
using Eigen::VectorXd;
using geometry::MarkedPointSet;

namespace {

ScheduleSpec unit_schedule(double sigma = 1.0) {
  ScheduleSpec s;
  s.kind = sde::NoiseSchedule::Kind::Constant;
  s.sigma0 = s.sigma1 = sigma;
  s.horizon = 1.0;
  return s;
}

MarkedPointSet random_cloud(int m, Rng& rng) {
  MarkedPointSet x;
  x.coords.resize(m, 3);
  x.types.resize(m, 0);
  for (int i = 0; i < m * 3; ++i) x.coords.data()[i] = rng.normal();
  return x;
}

void randomize_params(DriftModel& m, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  for (int i = 0; i < m.param_count(); ++i)
    m.params()[i] = scale * (2.0 * rng.uniform() - 1.0);
}

}  // namespace

TEST_CASE("a fresh model with zero output layer is the zero drift") {
  NetArch arch;
  arch.hidden = 16;
  DriftModel m(0, unit_schedule(), arch, AlphaMode::Scheduled, 0.0, 42);
  Rng rng(1);
  auto x = random_cloud(5, rng);
  CHECK(m.drift(geometry::flatten(x), 0.3).norm() == 0.0);

  m.params().setZero();  // all-zero weights, no bias path active
  CHECK(m.drift(geometry::flatten(x), 0.7).norm() == 0.0);
}

TEST_CASE("zero network with alpha = 1 reproduces the prior force exactly") {
  energies::EnergyForce ef;
  ef.kind = energies::EnergyKind::Riesz;
  NetArch arch;
  arch.hidden = 16;
  DriftModel m(0, unit_schedule(), arch, AlphaMode::Learnable, 1.0, 0);
  m.params().setZero();
  m.bind_force(ef);

  Rng rng(2);
  auto x = random_cloud(6, rng);
  VectorXd state = geometry::flatten(x);
  auto force = energies::make_force(ef, 0);
  CHECK(m.drift(state, 0.4) == force(state, 0.4));
}

TEST_CASE("scheduled alpha decays linearly to zero at T") {
  DriftModel m(0, unit_schedule(), NetArch{}, AlphaMode::Scheduled, 1e-3, 0);
  CHECK(m.alpha_at(0.0) == doctest::Approx(1e-3));
  CHECK(m.alpha_at(0.5) == doctest::Approx(5e-4));
  CHECK(m.alpha_at(1.0) == 0.0);
}

TEST_CASE("drift is permutation-equivariant bitwise") {
  NetArch arch;
  arch.hidden = 24;
  DriftModel m(0, unit_schedule(), arch, AlphaMode::Scheduled, 0.0, 7);
  randomize_params(m, 99);

  Rng rng(3);
  auto x = random_cloud(9, rng);
  VectorXd out = m.drift(geometry::flatten(x), 0.37);

  std::vector<int> perm = {4, 8, 0, 2, 7, 1, 3, 6, 5};
  MarkedPointSet xp;
  xp.coords.resize(9, 3);
  xp.types.resize(9, 0);
  for (int i = 0; i < 9; ++i) xp.coords.row(i) = x.coords.row(perm[i]);
  VectorXd outp = m.drift(geometry::flatten(xp), 0.37);

  for (int i = 0; i < 9; ++i)
    for (int c = 0; c < 3; ++c) CHECK(outp[3 * i + c] == out[3 * perm[i] + c]);
}

TEST_CASE("loss is deterministic and invariant under point permutation") {
  energies::EnergyForce ef;
  ef.kind = energies::EnergyKind::Riesz;
  NetArch arch;
  arch.hidden = 16;
  DriftModel m(0, unit_schedule(), arch, AlphaMode::Learnable, 0.3, 5);
  randomize_params(m, 17);
  m.bind_force(ef);
  auto grid = sde::make_grid(32, 1.0);
  LossOptions opts;
  opts.time_samples = 5;

  Rng rng(11);
  auto x = random_cloud(7, rng);
  std::vector<int> perm = {6, 2, 0, 5, 1, 4, 3};
  MarkedPointSet xp;
  xp.coords.resize(7, 3);
  xp.types.resize(7, 0);
  for (int i = 0; i < 7; ++i) xp.coords.row(i) = x.coords.row(perm[i]);

  // Cached forced-bridge marginals, permuted consistently, so both items see
  // the same states up to point order.
  sde::Trajectory base, permuted;
  base.grid = permuted.grid = grid;
  Rng noise(23);
  for (int s = 0; s <= grid.steps(); ++s) {
    Eigen::VectorXd state(21);
    for (int q = 0; q < 21; ++q) state[q] = noise.normal();
    Eigen::VectorXd state_p(21);
    for (int i = 0; i < 7; ++i)
      for (int c = 0; c < 3; ++c)
        state_p[3 * i + c] = state[3 * perm[i] + c];
    base.states.push_back(state);
    permuted.states.push_back(state_p);
  }

  BatchItem item_a{&x, &base, 77};
  BatchItem item_b{&xp, &permuted, 77};
  auto a = sm_loss(m, {item_a}, bridges::BridgeKind::Forced, grid, opts);
  auto b = sm_loss(m, {item_b}, bridges::BridgeKind::Forced, grid, opts);
  CHECK(a.value == b.value);  // bitwise: contributions sum in sorted order
  CHECK(a.grad_alpha == doctest::Approx(b.grad_alpha).epsilon(1e-12));

  auto again = sm_loss(m, {item_a}, bridges::BridgeKind::Forced, grid, opts);
  CHECK(a.value == again.value);  // deterministic given the stream
  CHECK(a.grad == again.grad);
}

TEST_CASE("teacher forcing: matching term vanishes at the bridge drift") {
  auto sched = unit_schedule().build();
  VectorXd pin(3);
  pin << 0.5, -0.25, 1.0;
  auto bridge = bridges::BridgeSpec::brownian(
      pin, sched, bridges::BridgeSpec::training_init(pin, sched));
  double term = matching_term(bridge.drift_fn(), bridge, sde::make_grid(64, 1.0),
                              5, 32);
  CHECK(term == 0.0);
}

TEST_CASE("doubling the weighted residual quadruples the matching term") {
  auto sched = unit_schedule().build();
  VectorXd pin = VectorXd::Zero(2);
  auto bridge = bridges::BridgeSpec::brownian(
      pin, sched, bridges::BridgeSpec::training_init(pin, sched));
  auto grid = sde::make_grid(64, 1.0);

  auto off_by = [&](double c) {
    return [c, &bridge](const VectorXd& z, double t) {
      return (bridge.drift(z, t).array() + c).matrix().eval();
    };
  };
  double e1 = matching_term(off_by(1.0), bridge, grid, 5, 32);
  double e2 = matching_term(off_by(2.0), bridge, grid, 5, 32);
  CHECK(e2 == doctest::Approx(4.0 * e1).epsilon(1e-12));
}

TEST_CASE("loss gradient matches finite differences") {
  NetArch arch;
  arch.hidden = 10;
  arch.trunk_layers = 2;
  arch.time_dim = 4;
  DriftModel m(0, unit_schedule(), arch, AlphaMode::Scheduled, 0.0, 3);
  randomize_params(m, 31);

  Rng rng(4);
  std::vector<MarkedPointSet> batch = {random_cloud(4, rng), random_cloud(3, rng)};
  auto grid = sde::make_grid(32, 1.0);
  LossOptions opts;
  opts.time_samples = 3;
  const std::uint64_t seed = 77;

  auto loss_at = [&](DriftModel& model) {
    return sm_loss(model, batch, bridges::BridgeKind::Brownian, grid, seed, opts)
        .value;
  };
  LossResult base =
      sm_loss(m, batch, bridges::BridgeKind::Brownian, grid, seed, opts);

  // probes spread uniformly across the flat layout, touching every layer
  for (int probe = 0; probe < 20; ++probe) {
    int i = static_cast<int>(
        (static_cast<long>(probe) * (m.param_count() - 1)) / 19);
    double h = 1e-5 * std::max(1.0, std::abs(m.params()[i]));
    double orig = m.params()[i];
    m.params()[i] = orig + h;
    double lp = loss_at(m);
    m.params()[i] = orig - h;
    double lm = loss_at(m);
    m.params()[i] = orig;
    double fd = (lp - lm) / (2.0 * h);
    CHECK(std::abs(base.grad[i] - fd) <=
          1e-4 * std::max({std::abs(fd), std::abs(base.grad[i]), 1e-6}));
  }
}

TEST_CASE("alpha gradient matches finite differences when learnable") {
  energies::EnergyForce ef;
  ef.kind = energies::EnergyKind::Riesz;
  NetArch arch;
  arch.hidden = 8;
  DriftModel m(0, unit_schedule(), arch, AlphaMode::Learnable, 0.2, 3);
  randomize_params(m, 5);
  m.bind_force(ef);

  Rng rng(6);
  std::vector<MarkedPointSet> batch = {random_cloud(5, rng)};
  auto grid = sde::make_grid(32, 1.0);
  LossOptions opts;
  opts.time_samples = 4;
  const std::uint64_t seed = 15;

  LossResult base =
      sm_loss(m, batch, bridges::BridgeKind::Brownian, grid, seed, opts);
  double h = 1e-6;
  m.set_alpha(0.2 + h);
  double lp =
      sm_loss(m, batch, bridges::BridgeKind::Brownian, grid, seed, opts).value;
  m.set_alpha(0.2 - h);
  double lm =
      sm_loss(m, batch, bridges::BridgeKind::Brownian, grid, seed, opts).value;
  m.set_alpha(0.2);
  double fd = (lp - lm) / (2.0 * h);
  CHECK(std::abs(base.grad_alpha - fd) <=
        1e-4 * std::max(std::abs(fd), 1e-6));
}

TEST_CASE("training with learning rate zero is a no-op") {
  TrainConfig tc;
  tc.schedule = unit_schedule();
  tc.steps = 16;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.learning_rate = 0.0;
  tc.seed = 9;
  tc.arch.hidden = 8;

  Rng rng(10);
  std::vector<MarkedPointSet> data = {random_cloud(4, rng), random_cloud(4, rng)};
  auto result = train(tc, data, nullptr);

  DriftModel fresh(0, tc.schedule, tc.arch, tc.alpha_mode, tc.alpha0, tc.seed);
  CHECK(result.checkpoint.theta == fresh.params());
  CHECK(!result.diverged);
}

TEST_CASE("training is deterministic given the seed") {
  TrainConfig tc;
  tc.schedule = unit_schedule();
  tc.steps = 16;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 1e-3;
  tc.seed = 123;
  tc.arch.hidden = 8;

  Rng rng(12);
  std::vector<MarkedPointSet> data;
  for (int i = 0; i < 5; ++i) data.push_back(random_cloud(4, rng));

  auto a = train(tc, data, nullptr);
  auto b = train(tc, data, nullptr);
  CHECK(a.checkpoint.theta == b.checkpoint.theta);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].loss == b.trace[i].loss);
}

TEST_CASE("checkpoint round trip is bit-exact; corruption is rejected") {
  TrainConfig tc;
  tc.schedule = unit_schedule();
  tc.epochs = 1;
  tc.arch.hidden = 8;
  tc.seed = 77;
  Checkpoint ckpt;
  ckpt.config = tc;
  ckpt.type_count = 0;
  DriftModel m(0, tc.schedule, tc.arch, tc.alpha_mode, tc.alpha0, tc.seed);
  randomize_params(m, 55);
  ckpt.theta = m.params();
  ckpt.alpha = 0.125;
  ckpt.stats_fingerprint = 0xabcdef;

  auto dir = std::filesystem::temp_directory_path() / "bridgen_ckpt_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "c.bin").string();
  save_checkpoint(path, ckpt);
  auto back = load_checkpoint(path);
  CHECK(back.theta == ckpt.theta);
  CHECK(back.alpha == ckpt.alpha);
  CHECK(back.stats_fingerprint == ckpt.stats_fingerprint);
  CHECK(back.config.to_kv().serialize() == tc.to_kv().serialize());
  CHECK(back.fingerprint() == ckpt.fingerprint());

  auto model_back = build_model(back);
  CHECK(model_back.params() == m.params());

  // truncation breaks the checksum
  std::string bytes = io::read_file(path);
  io::write_file(path, bytes.substr(0, bytes.size() - 7));
  CHECK_THROWS_AS(load_checkpoint(path), Error);

  // cross-config loads warn
  TrainConfig other = tc;
  other.learning_rate = 0.5;
  other.steps = 11;
  auto warnings = config_mismatch_warnings(ckpt, other);
  CHECK(warnings.size() == 2);
  CHECK(config_mismatch_warnings(ckpt, tc).empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("single-point dataset recovers the closed-form bridge drift") {
  // dataset = {origin}; the optimal drift is sigma^2 (x - z)/(beta_T - beta_t)
  TrainConfig tc;
  tc.schedule = unit_schedule(1.0);
  tc.steps = 50;
  tc.epochs = 6000;
  tc.batch_size = 1;
  tc.learning_rate = 1e-3;
  tc.momentum = 0.9;
  tc.time_samples = 16;
  tc.seed = 2024;
  tc.arch.hidden = 32;
  tc.arch.trunk_layers = 2;

  MarkedPointSet origin;
  origin.coords = geometry::Coords::Zero(1, 3);
  origin.types.resize(1, 0);
  auto result = train(tc, {origin}, nullptr);
  REQUIRE(!result.diverged);
  auto m = build_model(result.checkpoint);

  auto sched = tc.schedule.build();
  VectorXd pin = VectorXd::Zero(3);
  auto bridge = bridges::BridgeSpec::brownian(
      pin, sched, bridges::BridgeSpec::training_init(pin, sched));

  for (double t : {0.25, 0.5, 0.75}) {
    double num = 0.0, den = 0.0;
    for (int probe = 0; probe < 64; ++probe) {
      Rng rng(31337, probe);
      VectorXd z = bridge.sample_marginal(t, rng);
      VectorXd want = bridge.drift(z, t);
      VectorXd got = m.drift(z, t);
      num += (got - want).squaredNorm();
      den += want.squaredNorm();
    }
    double rel = std::sqrt(num / den);
    INFO("t=", t, " rel=", rel);
    CHECK(rel <= 0.10);
  }
}

TEST_CASE("circle dataset: generated samples concentrate near the circle") {
  std::vector<MarkedPointSet> data;
  for (int j = 0; j < 64; ++j) {
    double th = 2.0 * M_PI * j / 64.0;
    MarkedPointSet p;
    p.coords.resize(1, 3);
    p.coords << std::cos(th), std::sin(th), 0.0;
    p.types.resize(1, 0);
    data.push_back(p);
  }

  TrainConfig tc;
  tc.schedule = unit_schedule(1.2);  // beta_T = 1.44 >= 4x data variance
  tc.steps = 100;
  tc.epochs = 6000;
  tc.batch_size = 16;
  tc.learning_rate = 1e-3;
  tc.momentum = 0.9;
  tc.time_samples = 8;
  tc.seed = 7;
  tc.arch.hidden = 64;
  tc.arch.trunk_layers = 2;

  auto result = train(tc, data, nullptr);
  REQUIRE(!result.diverged);
  auto m = build_model(result.checkpoint);

  // the drift is defined at every t, so sampling may use a finer grid than
  // training; the late-time dynamics are stiff
  eval::SampleOptions opts;
  opts.steps = 2000;
  opts.seed = 99;
  auto batch = eval::sample(m, 400, 1, opts);
  int near = 0;
  for (const auto& item : batch.items) {
    double x = item.coords(0, 0), y = item.coords(0, 1), z = item.coords(0, 2);
    double d = std::hypot(std::hypot(x, y) - 1.0, z);
    if (d <= 0.15) ++near;
  }
  INFO("near fraction = ", near / 400.0);
  CHECK(near >= 0.95 * 400);
}
