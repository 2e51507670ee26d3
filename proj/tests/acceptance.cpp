// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances in code.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "bridgen/bridges.hpp"
#include "bridgen/cli.hpp"
#include "bridgen/energies.hpp"
#include "bridgen/eval.hpp"
#include "bridgen/geometry.hpp"
#include "bridgen/io.hpp"
#include "bridgen/model.hpp"
#include "bridgen/rng.hpp"
#include "bridgen/sde.hpp"

using namespace bridgen;
using Eigen::VectorXd;
using geometry::MarkedPointSet;
namespace fs = std::filesystem;

namespace {

struct Harness {
  int failures = 0;
  std::chrono::steady_clock::time_point t0;

  void start() { t0 = std::chrono::steady_clock::now(); }
  void report(int n, const std::string& name, bool pass,
              const std::string& detail) {
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("criterion %2d [%s]: %s (%.1fs) %s\n", n,
                pass ? "PASS" : "FAIL", name.c_str(), secs, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

MarkedPointSet sphere_cloud(int m, std::uint64_t seed) {
  MarkedPointSet x;
  x.coords.resize(m, 3);
  x.types.resize(m, 0);
  Rng rng(seed);
  for (int i = 0; i < m; ++i) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    x.coords.row(i) = v / v.norm();
  }
  return x;
}

geometry::AtomTables load_tables() {
  return io::load_atom_tables(std::string(BRIDGEN_DATA_DIR) +
                              "/atom_tables.json");
}

MarkedPointSet random_molecule(Rng& rng, int m, int k_types, int k_total) {
  while (true) {
    MarkedPointSet mol;
    mol.coords.resize(m, 3);
    mol.types = Eigen::MatrixXd::Zero(m, k_total);
    for (int i = 0; i < m; ++i) {
      mol.types(i, rng.uniform_int(k_types)) = 1.0;
      for (int c = 0; c < 3; ++c) mol.coords(i, c) = 1.1 * rng.normal();
    }
    double min_d = 1e300;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        min_d = std::min(min_d, (mol.coords.row(i) - mol.coords.row(j)).norm());
    if (min_d < 0.5) continue;
    bool degenerate = false;
    for (int j = 0; j < m && !degenerate; ++j)
      for (int i = 0; i < m && !degenerate; ++i)
        for (int l = i + 1; l < m && !degenerate; ++l) {
          if (i == j || l == j) continue;
          double a = geometry::angle(mol.coords.row(i), mol.coords.row(j),
                                     mol.coords.row(l));
          if (a < 0.2 || a > M_PI - 0.2) degenerate = true;
        }
    if (!degenerate) return mol;
  }
}

// ----- criterion 1: Brownian bridge variance law ---------------------------

void criterion_1(Harness& h) {
  h.start();
  auto sched = sde::NoiseSchedule::constant(1.0, 1.0);
  VectorXd pin = VectorXd::Zero(1);
  auto spec = bridges::BridgeSpec::brownian(pin, sched, {pin, 0.0});
  auto grid = sde::make_grid(1000, 1.0);
  const int n_paths = 20000;
  const int idx[3] = {250, 500, 750};

  double sum[3] = {0, 0, 0}, sum2[3] = {0, 0, 0};
  for (int p = 0; p < n_paths; ++p) {
    Rng rng(101, p);
    auto traj = spec.simulate(grid, rng);
    for (int q = 0; q < 3; ++q) {
      double v = traj.states[idx[q]][0];
      sum[q] += v;
      sum2[q] += v * v;
    }
  }
  bool pass = true;
  std::string detail;
  for (int q = 0; q < 3; ++q) {
    double t = grid.points[idx[q]];
    double mean = sum[q] / n_paths;
    double var = sum2[q] / n_paths - mean * mean;
    double want = t * (1.0 - t);
    pass &= std::abs(var - want) <= 0.03 * want;
    detail += fmt("t=%.2f var=%.4f (want %.4f) ", t, var, want);
  }
  h.report(1, "Brownian bridge variance law", pass, detail);
}

// ----- criterion 2: terminal pinning ---------------------------------------

void criterion_2(Harness& h) {
  h.start();
  auto cloud = sphere_cloud(64, 2024);
  VectorXd pin = geometry::flatten(cloud);
  auto sched = sde::NoiseSchedule::constant(1.0, 1.0);
  bridges::GaussianInit init = bridges::BridgeSpec::training_init(pin, sched);

  auto stats = geometry::extract_stats({cloud}, 4, nullptr);
  energies::EnergyForce ef;
  ef.kind = energies::EnergyKind::KnnUniform;
  ef.stats = &stats;
  ef.k = 4;
  auto force = energies::make_force(ef, 0);

  auto plain = bridges::BridgeSpec::brownian(pin, sched, init);
  auto forced = bridges::BridgeSpec::forced(pin, sched, force, init);

  const std::vector<int> steps = {50, 200, 1000};
  auto pr = bridges::verify_pinning(plain, steps, 120, 7);
  auto fr = bridges::verify_pinning(forced, steps, 120, 7);

  auto decreasing = [](const bridges::PinningReport& r) {
    for (std::size_t i = 0; i + 1 < r.levels.size(); ++i)
      if (!(r.levels[i + 1].mean_err < r.levels[i].mean_err)) return false;
    return true;
  };
  bool pass = pr.pass && fr.pass && decreasing(pr) && decreasing(fr) &&
              pr.levels.back().mean_err <= 0.05 &&
              fr.levels.back().mean_err <= 0.05;
  h.report(2, "terminal pinning, plain and knn-forced", pass,
           fmt("plain err@1000=%.4f forced err@1000=%.4f (bar 0.05)",
               pr.levels.back().mean_err, fr.levels.back().mean_err));
}

// ----- criterion 3: Gronwall checker ----------------------------------------

void criterion_3(Harness& h) {
  h.start();
  bridges::GronwallSeries pole;
  pole.grid = sde::make_grid(100000, 1.0);
  pole.alpha = [](double t) { return 1.0 / (1.0 - t); };
  pole.pl_beta = [](double) { return 1.0; };
  pole.pl_gamma = [](double) { return 0.5; };
  auto good = bridges::gronwall_check(pole);

  bridges::GronwallSeries flat = pole;
  flat.alpha = [](double) { return 2.0; };
  auto bad = bridges::gronwall_check(flat);

  bool pass = good.pass && !bad.pass;
  h.report(3, "Gronwall checker: pole passes, constant fails", pass,
           fmt("pole zeta_end=%.3g ratio_end=%.3g; constant zeta_end=%.3g",
               good.zeta.back(), good.ratio.back(), bad.zeta.back()));
}

// ----- criterion 4: gradient oracle -----------------------------------------

void criterion_4(Harness& h) {
  h.start();
  auto tables = load_tables();
  Rng gen(40404);
  std::vector<MarkedPointSet> ref_set;
  for (int n = 0; n < 30; ++n)
    ref_set.push_back(random_molecule(gen, 8, 4, tables.types.size()));
  auto stats = geometry::extract_stats(ref_set, 3, &tables);

  struct Kind {
    const char* name;
    energies::EnergyForce ef;
    bool typed;
  };
  std::vector<Kind> kinds(4);
  kinds[0] = {"amber", {}, true};
  kinds[0].ef.kind = energies::EnergyKind::Amber;
  kinds[1] = {"statistical", {}, true};
  kinds[1].ef.kind = energies::EnergyKind::Statistical;
  kinds[1].ef.k = 3;
  kinds[2] = {"riesz", {}, false};
  kinds[2].ef.kind = energies::EnergyKind::Riesz;
  kinds[3] = {"knn", {}, false};
  kinds[3].ef.kind = energies::EnergyKind::KnnUniform;
  kinds[3].ef.k = 4;
  for (auto& k : kinds) {
    k.ef.stats = &stats;
    k.ef.tables = &tables;
  }

  bool pass = true;
  std::string detail;
  for (auto& kind : kinds) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      auto mol = random_molecule(gen, kind.typed ? 8 : 12, 4,
                                 tables.types.size());
      if (!kind.typed) mol.types.resize(mol.size(), 0);
      auto analytic = energies::energy_grad(mol, kind.ef);
      auto fd = energies::fd_gradient(mol, kind.ef, 1e-5);
      double rel = (analytic - fd).norm() / std::max(fd.norm(), 1e-12);
      worst = std::max(worst, rel);
    }
    pass &= worst <= 1e-5;
    detail += fmt("%s=%.2g ", kind.name, worst);
  }
  h.report(4, "analytic gradients vs central differences (50 configs each)",
           pass, "worst rel err: " + detail);
}

// ----- criterion 5: energy identities and invariances ------------------------

void criterion_5(Harness& h) {
  h.start();
  auto tables = load_tables();
  bool pass = true;
  std::string detail;

  {  // two-point riesz at distance 1 and LJ at sigma
    MarkedPointSet two;
    two.coords.resize(2, 3);
    two.coords << 0, 0, 0, 1, 0, 0;
    two.types.resize(2, 0);
    pass &= (energies::riesz_energy(two) == 1.0);

    MarkedPointSet pair = two;
    pair.types = Eigen::MatrixXd::Zero(2, tables.types.size());
    pair.types(0, 0) = pair.types(1, 0) = 1.0;
    geometry::DatasetStats empty;
    energies::EnergyForce lj;
    lj.kind = energies::EnergyKind::Amber;
    lj.stats = &empty;
    lj.tables = &tables;
    lj.term_mask = {false, false, true, false};
    pass &= (energies::energy(pair, lj) == -1.0);
    detail += fmt("riesz=%g lj=%g ", energies::riesz_energy(two),
                  energies::energy(pair, lj));
  }

  {  // stat and amber bond/angle vanish at the statistics means; one atom of
     // each type, so every statistics key has a single geometric source
    MarkedPointSet mol;
    mol.coords.resize(4, 3);
    mol.types = Eigen::MatrixXd::Zero(4, tables.types.size());
    for (int i = 0; i < 4; ++i) mol.types(i, i) = 1.0;  // H, C, N, O
    mol.coords << 0, 0, 0, 1.2, 0, 0, 0.7, 1.3, 0, 0.4, 0.5, 1.4;
    auto stats = geometry::extract_stats({mol}, 2, &tables);
    energies::EnergyForce st;
    st.kind = energies::EnergyKind::Statistical;
    st.stats = &stats;
    st.tables = &tables;
    st.k = 2;
    energies::EnergyForce am = st;
    am.kind = energies::EnergyKind::Amber;
    am.term_mask = {true, true, false, false};
    pass &= std::abs(energies::energy(mol, st)) <= 1e-18;
    pass &= std::abs(energies::energy(mol, am)) <= 1e-18;
  }

  {  // invariance under translation/rotation/permutation, 1e-10
    Rng rng(777);
    auto stats_src = std::vector<MarkedPointSet>();
    for (int i = 0; i < 10; ++i)
      stats_src.push_back(random_molecule(rng, 8, 4, tables.types.size()));
    auto stats = geometry::extract_stats(stats_src, 3, &tables);

    std::vector<energies::EnergyForce> kinds(4);
    kinds[0].kind = energies::EnergyKind::Amber;
    kinds[1].kind = energies::EnergyKind::Statistical;
    kinds[1].k = 3;
    kinds[2].kind = energies::EnergyKind::Riesz;
    kinds[3].kind = energies::EnergyKind::KnnUniform;
    kinds[3].k = 3;
    for (auto& ef : kinds) {
      ef.stats = &stats;
      ef.tables = &tables;
    }

    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      auto mol = random_molecule(rng, 7, 4, tables.types.size());
      Eigen::Matrix3d rot;
      {
        Eigen::Matrix3d a;
        for (int i = 0; i < 9; ++i) a.data()[i] = rng.normal();
        Eigen::HouseholderQR<Eigen::Matrix3d> qr(a);
        rot = qr.householderQ();
        if (rot.determinant() < 0) rot.col(0) *= -1.0;
      }
      for (const auto& base : kinds) {
        MarkedPointSet x = mol;
        if (base.kind == energies::EnergyKind::Riesz ||
            base.kind == energies::EnergyKind::KnnUniform)
          x.types.resize(x.size(), 0);
        double e0 = energies::energy(x, base);
        double scale = std::max(1.0, std::abs(e0));

        MarkedPointSet moved = x;
        moved.coords = (x.coords * rot.transpose()).rowwise() +
                       Eigen::RowVector3d(0.4, -1.2, 0.9);
        worst = std::max(worst, std::abs(energies::energy(moved, base) - e0) /
                                    scale);

        MarkedPointSet perm = x;
        std::vector<int> p(x.size());
        std::iota(p.begin(), p.end(), 0);
        for (int i = x.size() - 1; i > 0; --i)
          std::swap(p[i], p[rng.uniform_int(i + 1)]);
        for (int i = 0; i < x.size(); ++i) {
          perm.coords.row(i) = x.coords.row(p[i]);
          if (x.type_count() > 0) perm.types.row(i) = x.types.row(p[i]);
        }
        worst = std::max(worst,
                         std::abs(energies::energy(perm, base) - e0) / scale);
      }
    }
    pass &= worst <= 1e-10;
    detail += fmt("worst invariance dev=%.2g", worst);
  }
  h.report(5, "energy identities and invariances", pass, detail);
}

// ----- criterion 6: loss optimum --------------------------------------------

void criterion_6(Harness& h) {
  h.start();
  bool pass = true;
  std::string detail;

  {  // teacher forcing
    auto sched = sde::NoiseSchedule::constant(1.0, 1.0);
    VectorXd pin(3);
    pin << 0.4, -1.0, 0.3;
    auto bridge = bridges::BridgeSpec::brownian(
        pin, sched, bridges::BridgeSpec::training_init(pin, sched));
    double term = model::matching_term(bridge.drift_fn(), bridge,
                                       sde::make_grid(64, 1.0), 3, 64);
    pass &= (term <= 1e-12);
    detail += fmt("teacher-forced term=%.2g ", term);

    energies::EnergyForce ef;
    ef.kind = energies::EnergyKind::Riesz;
    auto force = energies::make_force(ef, 0);
    auto cloud = sphere_cloud(8, 3);
    VectorXd cpin = geometry::flatten(cloud);
    auto fbridge = bridges::BridgeSpec::forced(
        cpin, sched, force, bridges::BridgeSpec::training_init(cpin, sched));
    double fterm = model::matching_term(fbridge.drift_fn(), fbridge,
                                        sde::make_grid(64, 1.0), 3, 16);
    pass &= (fterm <= 1e-12);
  }

  {  // single-point dataset recovers the closed-form drift within 10%
    model::TrainConfig tc;
    tc.schedule.sigma0 = tc.schedule.sigma1 = 1.0;
    tc.schedule.horizon = 1.0;
    tc.steps = 50;
    tc.epochs = 6000;
    tc.batch_size = 1;
    tc.learning_rate = 1e-3;
    tc.momentum = 0.9;
    tc.time_samples = 16;
    tc.seed = 2024;
    tc.arch.hidden = 32;

    MarkedPointSet origin;
    origin.coords = geometry::Coords::Zero(1, 3);
    origin.types.resize(1, 0);
    auto result = model::train(tc, {origin}, nullptr);
    pass &= !result.diverged;
    auto m = model::build_model(result.checkpoint);

    auto sched = tc.schedule.build();
    VectorXd pin = VectorXd::Zero(3);
    auto bridge = bridges::BridgeSpec::brownian(
        pin, sched, bridges::BridgeSpec::training_init(pin, sched));
    double worst = 0.0;
    for (double t : {0.25, 0.5, 0.75}) {
      double num = 0.0, den = 0.0;
      for (int probe = 0; probe < 64; ++probe) {
        Rng rng(31337, probe);
        VectorXd z = bridge.sample_marginal(t, rng);
        num += (m.drift(z, t) - bridge.drift(z, t)).squaredNorm();
        den += bridge.drift(z, t).squaredNorm();
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
    pass &= (worst <= 0.10);
    detail += fmt("single-point worst rel=%.3f (bar 0.10)", worst);
  }
  h.report(6, "loss optimum: teacher forcing and drift recovery", pass, detail);
}

// ----- criteria 7 and 8: sphere benchmark -----------------------------------

void criteria_7_8(Harness& h) {
  h.start();
  const int n_train = 20, n_eval = 20, m = 128;
  std::vector<MarkedPointSet> train_set, eval_set;
  for (int i = 0; i < n_train; ++i) train_set.push_back(sphere_cloud(m, 1000 + i));
  for (int i = 0; i < n_eval; ++i) eval_set.push_back(sphere_cloud(m, 5000 + i));

  auto stats = geometry::extract_stats(train_set, 4, nullptr);
  energies::EnergyForce ef;
  ef.kind = energies::EnergyKind::KnnUniform;
  ef.stats = &stats;
  ef.k = 4;
  ef.clip_norm = 10.0;

  model::TrainConfig base;
  base.schedule.sigma0 = base.schedule.sigma1 = 1.2;
  base.schedule.horizon = 1.0;
  base.steps = 50;
  base.epochs = 500;
  base.batch_size = 4;
  base.learning_rate = 1e-5;
  base.momentum = 0.9;
  base.time_samples = 2;
  base.seed = 99;
  base.arch.hidden = 48;

  model::TrainConfig force_cfg = base;
  force_cfg.bridge = bridges::BridgeKind::Forced;
  force_cfg.alpha_mode = model::AlphaMode::Learnable;
  force_cfg.alpha0 = 0.1;
  force_cfg.energy = "knn";
  force_cfg.clip_norm = 10.0;
  auto force_res = model::train(force_cfg, train_set, &ef);

  model::TrainConfig plain_cfg = base;
  auto plain_res = model::train(plain_cfg, train_set, nullptr);

  auto fm = model::build_model(force_res.checkpoint);
  fm.bind_force(ef);
  auto pm = model::build_model(plain_res.checkpoint);

  std::vector<geometry::Coords> refs;
  for (const auto& x : eval_set) refs.push_back(x.coords);

  auto knn_var = [](const eval::SampleBatch& b) {
    double acc = 0.0;
    for (const auto& item : b.items)
      acc += eval::uniformity_stats(item.coords, 4).second;
    return acc / b.items.size();
  };
  auto sample_metrics = [&](const model::DriftModel& dm, int steps) {
    eval::SampleOptions opts;
    opts.steps = steps;
    opts.seed = 777;
    auto batch = eval::sample(dm, 20, m, opts);
    std::vector<geometry::Coords> gen;
    for (const auto& x : batch.items) gen.push_back(x.coords);
    auto [mmd, cov] = eval::mmd_cov(gen, refs, eval::CloudMetric::Chamfer);
    return std::make_tuple(knn_var(batch), mmd, cov);
  };

  auto [fvar100, fmmd100, fcov100] = sample_metrics(fm, 100);
  auto [pvar100, pmmd100, pcov100] = sample_metrics(pm, 100);

  bool pass7 = !force_res.diverged && !plain_res.diverged &&
               fvar100 < pvar100 && fmmd100 <= 1.25 * pmmd100;
  h.report(7, "uniformity effect on sphere clouds", pass7,
           fmt("knn-dist var: force=%.5f plain=%.5f; mmd-cd: force=%.4f "
               "plain=%.4f (force must be < var and <= 1.25x mmd)",
               fvar100, pvar100, fmmd100, pmmd100));

  h.start();
  auto [fvar10, fmmd10, fcov10] = sample_metrics(fm, 10);
  auto [pvar10, pmmd10, pcov10] = sample_metrics(pm, 10);
  double fdeg = fmmd10 - fmmd100;
  double pdeg = pmmd10 - pmmd100;
  bool pass8 = fdeg <= pdeg + 0.10 * pmmd100;
  h.report(8, "fewer-steps robustness (100 -> 10)", pass8,
           fmt("mmd-cd degradation: force=%+.4f plain=%+.4f (margin %.4f)",
               fdeg, pdeg, 0.10 * pmmd100));
}

// ----- criterion 9: metric oracles ------------------------------------------

void criterion_9(Harness& h) {
  h.start();
  bool pass = true;
  std::string detail;
  Rng rng(606);

  {  // EMD vs exhaustive permutations
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      geometry::Coords a(8, 3), b(8, 3);
      for (int i = 0; i < 24; ++i) {
        a.data()[i] = rng.normal();
        b.data()[i] = rng.normal();
      }
      std::vector<int> perm(8);
      std::iota(perm.begin(), perm.end(), 0);
      double best = 1e300;
      do {
        double total = 0.0;
        for (int i = 0; i < 8; ++i) total += (a.row(i) - b.row(perm[i])).norm();
        best = std::min(best, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::abs(eval::emd(a, b) - best / 8.0));
    }
    pass &= worst <= 1e-10;
    detail += fmt("emd dev=%.2g ", worst);
  }
  {  // chamfer vs double loop
    geometry::Coords a(9, 3), b(7, 3);
    for (int i = 0; i < 27; ++i) a.data()[i] = rng.normal();
    for (int i = 0; i < 21; ++i) b.data()[i] = rng.normal();
    double oracle = 0.0;
    for (int i = 0; i < 9; ++i) {
      double best = 1e300;
      for (int j = 0; j < 7; ++j)
        best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
      oracle += best / 9.0;
    }
    for (int j = 0; j < 7; ++j) {
      double best = 1e300;
      for (int i = 0; i < 9; ++i)
        best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
      oracle += best / 7.0;
    }
    pass &= std::abs(eval::chamfer(a, b) - oracle) <= 1e-12;
  }
  {  // mmd_cov(X, X) = (0, 1)
    std::vector<geometry::Coords> X;
    for (int i = 0; i < 5; ++i) {
      geometry::Coords c(6, 3);
      for (int q = 0; q < 18; ++q) c.data()[q] = rng.normal();
      X.push_back(c);
    }
    for (auto metric : {eval::CloudMetric::Chamfer, eval::CloudMetric::Emd}) {
      auto [mmd, cov] = eval::mmd_cov(X, X, metric);
      pass &= (mmd == 0.0 && cov == 1.0);
    }
    detail += "mmd_cov(X,X)=(0,1)";
  }
  h.report(9, "metric oracles (emd, chamfer, mmd/cov)", pass, detail);
}

// ----- criterion 10: bit-exact reproducibility -------------------------------

void criterion_10(Harness& h) {
  h.start();
  const fs::path root = fs::temp_directory_path() / "bridgen_acceptance_repro";
  fs::remove_all(root);
  fs::create_directories(root);

  auto run_cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "bridgen");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
  };
  auto slurp = [](const fs::path& p) { return io::read_file(p.string()); };

  bool pass = true;
  std::string detail;

  // dataset of small clouds
  auto data = root / "clouds";
  fs::create_directories(data);
  for (int i = 0; i < 4; ++i) {
    auto cloud = sphere_cloud(16, 42 + i);
    io::write_cloud((data / ("c" + std::to_string(i) + ".txt")).string(),
                    cloud.coords);
  }

  // extract-stats twice
  pass &= run_cli({"extract-stats", "--data", data.string(), "--out",
                   (root / "stats.json").string(), "--k", "4"}) == 0;
  pass &= run_cli({"extract-stats", "--config",
                   (root / "stats.json.config").string(), "--set",
                   "out=" + (root / "stats2.json").string()}) == 0;
  pass &= slurp(root / "stats.json") == slurp(root / "stats2.json");
  detail += "stats ";

  // train from flags, retrain from the resolved config
  pass &= run_cli({"train", "--data", data.string(), "--out",
                   (root / "run1").string(), "--seed", "5", "--set",
                   "epochs=4", "--set", "steps=10", "--set", "hidden=8",
                   "--set", "batch_size=2", "--set", "learning_rate=1e-4"}) == 0;
  pass &= run_cli({"train", "--config",
                   (root / "run1" / "resolved.config").string(), "--out",
                   (root / "run2").string()}) == 0;
  pass &= slurp(root / "run1" / "checkpoint.bin") ==
          slurp(root / "run2" / "checkpoint.bin");
  pass &= slurp(root / "run1" / "train_log.csv") ==
          slurp(root / "run2" / "train_log.csv");
  detail += "checkpoint ";

  // sample twice from the same checkpoint/config
  for (const char* out : {"s1", "s2"})
    pass &= run_cli({"sample", "--checkpoint",
                     (root / "run1" / "checkpoint.bin").string(), "--out",
                     (root / out).string(), "--n", "2", "--points", "16",
                     "--steps", "10", "--seed", "13"}) == 0;
  pass &= slurp(root / "s1" / "sample_000.txt") ==
          slurp(root / "s2" / "sample_000.txt");
  pass &= slurp(root / "s1" / "sample_001.txt") ==
          slurp(root / "s2" / "sample_001.txt");
  detail += "samples ";

  // verify twice (report bytes)
  for (const char* out : {"v1", "v2"})
    pass &= run_cli({"verify", "--out", (root / out).string(), "--seed", "3",
                     "--set", "pin_points=8", "--set", "steps_list=20,60",
                     "--set", "n_paths=100", "--set", "g_steps=30000"}) == 0;
  pass &= slurp(root / "v1" / "pinning.json") ==
          slurp(root / "v2" / "pinning.json");
  pass &= slurp(root / "v1" / "gronwall.json") ==
          slurp(root / "v2" / "gronwall.json");
  detail += "reports ";

  // eval twice
  for (const char* out : {"e1", "e2"})
    pass &= run_cli({"eval", "--generated", (root / "s1").string(),
                     "--reference", data.string(), "--out",
                     (root / out).string()}) == 0;
  pass &= slurp(root / "e1" / "report.json") ==
          slurp(root / "e2" / "report.json");
  detail += "eval";

  h.report(10, "bit-exact reproducibility from resolved configs", pass, detail);
  fs::remove_all(root);
}

}  // namespace

int main() {
  Harness h;
  std::printf("bridgen acceptance suite\n");
  try {
    criterion_1(h);
    criterion_2(h);
    criterion_3(h);
    criterion_4(h);
    criterion_5(h);
    criterion_6(h);
    criteria_7_8(h);
    criterion_9(h);
    criterion_10(h);
  } catch (const std::exception& e) {
    std::printf("acceptance suite aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s\n", h.failures == 0 ? "all criteria PASS"
                                      : fmt("%d criteria FAILED", h.failures)
                                            .c_str());
  return h.failures == 0 ? 0 : 1;
}
