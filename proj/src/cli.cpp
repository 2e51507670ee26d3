#include "bridgen/cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "bridgen/bridges.hpp"
#include "bridgen/common.hpp"
#include "bridgen/energies.hpp"
#include "bridgen/eval.hpp"
#include "bridgen/io.hpp"
#include "bridgen/model.hpp"

namespace bridgen::cli {

namespace fs = std::filesystem;
using config::KvConfig;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
      return 2;
    case ErrorCode::Data:
    case ErrorCode::Io:
      return 3;
    case ErrorCode::Domain:
    case ErrorCode::Singular:
    case ErrorCode::Numeric:
      return 4;
  }
  return 1;
}

namespace {

// Reads keys while recording every resolved value, so the written config is
// sufficient to reproduce the run.
class Resolver {
public:
  explicit Resolver(const KvConfig& in) : in_(in) {}

  std::string str(const std::string& key, const std::string& fallback) {
    std::string v = in_.get(key, fallback);
    out_.set(key, v);
    return v;
  }
  std::string require(const std::string& key) {
    std::string v = in_.require(key);
    out_.set(key, v);
    return v;
  }
  double num(const std::string& key, double fallback) {
    double v = in_.get_double(key, fallback);
    out_.set(key, v);
    return v;
  }
  long integer(const std::string& key, long fallback) {
    long v = in_.get_long(key, fallback);
    out_.set(key, v);
    return v;
  }
  bool flag(const std::string& key, bool fallback) {
    bool v = in_.get_bool(key, fallback);
    out_.set(key, v ? "true" : "false");
    return v;
  }
  std::uint64_t seed() {
    if (seed_resolved_) return seed_;
    if (in_.has("seed")) {
      seed_ = in_.get_u64("seed", 0);
    } else {
      std::random_device rd;
      seed_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
      std::printf("seed not given; generated %" PRIu64 " (recorded)\n", seed_);
    }
    out_.set("seed", seed_);
    seed_resolved_ = true;
    return seed_;
  }
  bool has(const std::string& key) const { return in_.has(key); }
  const KvConfig& resolved() const { return out_; }

private:
  const KvConfig& in_;
  KvConfig out_;
  std::uint64_t seed_ = 0;
  bool seed_resolved_ = false;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  check(!ec && fs::is_directory(dir), ErrorCode::Io,
        "cannot create directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Owns the side information an energy force borrows.
struct ForceBundle {
  std::unique_ptr<geometry::AtomTables> tables;
  std::unique_ptr<geometry::DatasetStats> stats;
  energies::EnergyForce ef;
  bool active = false;
};

energies::EnergyKind parse_energy_kind(const std::string& name) {
  if (name == "amber") return energies::EnergyKind::Amber;
  if (name == "statistical") return energies::EnergyKind::Statistical;
  if (name == "riesz") return energies::EnergyKind::Riesz;
  if (name == "knn") return energies::EnergyKind::KnnUniform;
  throw Error(ErrorCode::Config, "unknown energy kind '" + name + "'");
}

energies::TermMask parse_term_mask(const std::string& csv) {
  energies::TermMask mask{false, false, false, false};
  std::istringstream in(csv);
  std::string term;
  while (std::getline(in, term, ',')) {
    if (term == "bond")
      mask.bond = true;
    else if (term == "angle")
      mask.angle = true;
    else if (term == "lj")
      mask.lj = true;
    else if (term == "coulomb")
      mask.coulomb = true;
    else
      throw Error(ErrorCode::Config, "unknown amber term '" + term + "'");
  }
  return mask;
}

ForceBundle make_force_bundle(const std::string& energy, int k, double clip,
                              const std::string& stats_path,
                              const std::string& tables_path,
                              const std::string& amber_terms =
                                  "bond,angle,lj,coulomb") {
  ForceBundle bundle;
  if (!tables_path.empty()) {
    bundle.tables = std::make_unique<geometry::AtomTables>(
        io::load_atom_tables(tables_path));
    bundle.ef.tables = bundle.tables.get();
  }
  if (energy == "none") return bundle;
  bundle.ef.kind = parse_energy_kind(energy);
  bundle.ef.k = k;
  bundle.ef.clip_norm = clip;
  bundle.ef.term_mask = parse_term_mask(amber_terms);
  const bool needs_stats = energy != "riesz";
  const bool needs_tables = energy == "amber";
  if (!stats_path.empty()) {
    bundle.stats =
        std::make_unique<geometry::DatasetStats>(io::load_stats(stats_path));
    bundle.ef.stats = bundle.stats.get();
  }
  check(!needs_stats || bundle.ef.stats != nullptr, ErrorCode::Config,
        "energy '" + energy + "' needs stats_path");
  check(!needs_tables || bundle.ef.tables != nullptr, ErrorCode::Config,
        "energy '" + energy + "' needs tables_path");
  bundle.active = true;
  return bundle;
}

void write_train_log(const std::string& path,
                     const std::vector<model::EpochLog>& trace) {
  std::string csv = "epoch,loss,alpha\n";
  char buf[80];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.epoch, row.loss,
                  row.alpha);
    csv += buf;
  }
  io::write_file(path, csv);
}

geometry::Coords synthetic_sphere_cloud(int points, std::uint64_t seed) {
  geometry::Coords coords(points, 3);
  Rng rng(seed, 0x737068657265ull);
  for (int i = 0; i < points; ++i) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    double n = v.norm();
    if (n < 1e-12) v = Eigen::Vector3d(1, 0, 0), n = 1.0;
    coords.row(i) = v / n;
  }
  return coords;
}

}  // namespace

int cmd_extract_stats(const KvConfig& cfg) {
  Resolver r(cfg);
  std::string data_dir = r.require("data_dir");
  std::string out_path = r.require("out");
  int k = static_cast<int>(r.integer("k", 4));
  std::string tables_path = r.str("tables_path", "");

  std::unique_ptr<geometry::AtomTables> tables;
  if (!tables_path.empty())
    tables = std::make_unique<geometry::AtomTables>(
        io::load_atom_tables(tables_path));

  auto dataset = io::load_dataset(data_dir, tables.get(), /*center=*/false);
  auto stats = geometry::extract_stats(dataset, k, tables.get());
  io::save_stats(out_path, stats);
  r.resolved().save(out_path + ".config");
  std::printf("extract-stats: %zu items, K=%d, knn_mean=%.6g -> %s\n",
              dataset.size(), k, stats.knn_mean, out_path.c_str());
  return 0;
}

int cmd_train(const KvConfig& cfg) {
  Resolver r(cfg);
  std::string data_dir = r.require("data_dir");
  std::string out_dir = r.require("out_dir");
  bool center = r.flag("center", true);

  model::TrainConfig tc;
  {
    // TrainConfig keys resolve through the same recorder.
    KvConfig merged;
    merged.merge(cfg);
    merged.set("seed", r.seed());
    tc = model::TrainConfig::from_kv(merged);
    KvConfig echo = tc.to_kv();
    for (const auto& [key, value] : echo.entries()) r.str(key, value);
  }

  ForceBundle force =
      make_force_bundle(tc.energy, tc.knn_k, tc.clip_norm, tc.stats_path,
                        tc.tables_path, tc.amber_terms);
  if (tc.bridge == bridges::BridgeKind::Forced)
    check(force.active, ErrorCode::Config,
          "bridge=forced requires an energy (energy=... plus side info)");

  auto dataset = io::load_dataset(data_dir, force.tables.get(), center);
  ensure_dir(out_dir);

  model::TrainResult result =
      model::train(tc, dataset, force.active ? &force.ef : nullptr);

  model::save_checkpoint(join(out_dir, "checkpoint.bin"), result.checkpoint);
  write_train_log(join(out_dir, "train_log.csv"), result.trace);
  r.resolved().save(join(out_dir, "resolved.config"));

  if (result.diverged) {
    std::printf("train: diverged; last finite checkpoint written to %s\n",
                out_dir.c_str());
    return 4;
  }
  std::printf("train: %zu items, %d epochs, final loss %.6g -> %s\n",
              dataset.size(), tc.epochs,
              result.trace.empty() ? 0.0 : result.trace.back().loss,
              out_dir.c_str());
  return 0;
}

int cmd_sample(const KvConfig& cfg) {
  Resolver r(cfg);
  std::string ckpt_path = r.require("checkpoint");
  std::string out_dir = r.require("out_dir");
  int n = static_cast<int>(r.integer("n", 8));
  int points = static_cast<int>(r.integer("points", 0));
  bool frames = r.flag("frames", false);

  model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
  int steps = static_cast<int>(r.integer("steps", ckpt.config.steps));
  std::uint64_t seed = r.seed();
  check(points >= 1, ErrorCode::Config, "points must be given (>= 1)");

  model::DriftModel drift_model = model::build_model(ckpt);
  std::string stats_path = r.str("stats_path", ckpt.config.stats_path);
  std::string tables_path = r.str("tables_path", ckpt.config.tables_path);
  ForceBundle force = make_force_bundle(
      ckpt.config.energy, ckpt.config.knn_k, ckpt.config.clip_norm, stats_path,
      tables_path, ckpt.config.amber_terms);
  if (force.active) {
    if (ckpt.stats_fingerprint != 0 && force.ef.stats != nullptr &&
        io::stats_fingerprint(*force.ef.stats) != ckpt.stats_fingerprint)
      warn("stats file differs from the one used at training time");
    drift_model.bind_force(force.ef);
  }
  const bool typed = drift_model.type_count() > 0;
  if (typed || drift_model.arch().charge_feature) {
    check(force.tables != nullptr, ErrorCode::Config,
          "typed checkpoints need tables_path for symbols/charges");
    drift_model.set_tables(force.tables.get());
  }

  eval::SampleOptions opts;
  opts.steps = steps;
  opts.seed = seed;
  opts.keep_frames = frames;
  eval::SampleBatch batch =
      eval::sample(drift_model, n, points, opts, ckpt.fingerprint());

  ensure_dir(out_dir);
  char name[64];
  for (int i = 0; i < n; ++i) {
    if (typed) {
      std::snprintf(name, sizeof(name), "sample_%03d.xyz", i);
      io::write_xyz(join(out_dir, name), batch.items[i], *force.tables);
    } else {
      std::snprintf(name, sizeof(name), "sample_%03d.txt", i);
      io::write_cloud(join(out_dir, name), batch.items[i].coords);
    }
  }
  if (frames) {
    ensure_dir(join(out_dir, "frames"));
    for (int i = 0; i < n; ++i) {
      std::snprintf(name, sizeof(name), "frames/item_%03d.txt", i);
      std::string text;
      for (std::size_t f = 0; f < batch.frames[i].size(); ++f) {
        text += "# frame " + std::to_string(f) + "\n";
        std::ostringstream rows;
        rows.precision(17);
        const auto& c = batch.frames[i][f];
        for (int p = 0; p < c.rows(); ++p)
          rows << c(p, 0) << ' ' << c(p, 1) << ' ' << c(p, 2) << '\n';
        text += rows.str();
      }
      io::write_file(join(out_dir, name), text);
    }
  }
  r.resolved().save(join(out_dir, "resolved.config"));
  std::printf("sample: %d items x %d points, %d steps -> %s\n", n, points,
              steps, out_dir.c_str());
  return 0;
}

int cmd_verify(const KvConfig& cfg) {
  Resolver r(cfg);
  std::string out_dir = r.require("out_dir");
  std::string mode = r.str("mode", "both");
  check(mode == "pinning" || mode == "gronwall" || mode == "both",
        ErrorCode::Config, "mode must be pinning|gronwall|both");
  ensure_dir(out_dir);
  bool all_pass = true;

  if (mode != "gronwall") {
    model::ScheduleSpec ss = model::ScheduleSpec::parse(
        r.str("schedule", "constant"), r.num("sigma0", 1.0), r.num("sigma1", 1.0),
        r.num("schedule_power", 1.0), r.num("horizon", 1.0));
    sde::NoiseSchedule sched = ss.build();

    std::string pin_file = r.str("pin_file", "");
    geometry::Coords pin_coords =
        pin_file.empty()
            ? synthetic_sphere_cloud(static_cast<int>(r.integer("pin_points", 64)),
                                     r.seed())
            : io::read_cloud(pin_file).coords;
    geometry::MarkedPointSet pin_set;
    pin_set.coords = pin_coords;
    pin_set.types.resize(pin_coords.rows(), 0);
    Eigen::VectorXd pin = geometry::flatten(pin_set);

    std::string bridge = r.str("bridge", "brownian");
    std::string energy = r.str("energy", "none");
    bridges::GaussianInit init = bridges::BridgeSpec::training_init(pin, sched);

    std::unique_ptr<geometry::DatasetStats> own_stats;
    ForceBundle force;
    if (bridge == "forced") {
      check(energy != "none", ErrorCode::Config,
            "forced bridge needs an energy kind");
      int k = static_cast<int>(r.integer("knn_k", 4));
      double clip = r.num("clip_norm", 1e3);
      std::string stats_path = r.str("stats_path", "");
      if (stats_path.empty() && energy != "riesz") {
        // statistics of the pin cloud itself
        own_stats = std::make_unique<geometry::DatasetStats>(
            geometry::extract_stats({pin_set}, k, nullptr));
        force.ef.kind = parse_energy_kind(energy);
        force.ef.k = k;
        force.ef.clip_norm = clip;
        force.ef.stats = own_stats.get();
        force.active = true;
      } else {
        force = make_force_bundle(energy, k, clip, stats_path,
                                  r.str("tables_path", ""));
      }
    }

    bridges::BridgeSpec spec =
        bridge == "forced"
            ? bridges::BridgeSpec::forced(pin, sched,
                                          energies::make_force(force.ef, 0), init)
            : bridges::BridgeSpec::brownian(pin, sched, init);

    std::vector<int> steps_list;
    {
      std::istringstream ss_steps(r.str("steps_list", "50,200,1000"));
      std::string tok;
      while (std::getline(ss_steps, tok, ',')) steps_list.push_back(std::stoi(tok));
    }
    bridges::PinningReport report = bridges::verify_pinning(
        spec, steps_list, static_cast<int>(r.integer("n_paths", 200)), r.seed(),
        r.num("tol_factor", 2.0));
    io::write_file(join(out_dir, "pinning.json"), bridges::to_json(report));
    std::printf("pinning (%s bridge): %s\n", bridge.c_str(),
                report.pass ? "PASS" : "FAIL");
    for (const auto& lv : report.levels)
      std::printf("  steps=%d mean_err=%.6g max_err=%.6g tol=%.6g\n", lv.steps,
                  lv.mean_err, lv.max_err, lv.tol);
    all_pass &= report.pass;
  }

  if (mode != "pinning") {
    double horizon = r.num("g_horizon", 1.0);
    int g_steps = static_cast<int>(r.integer("g_steps", 100000));
    double scale = r.num("g_alpha_scale", 1.0);
    double pl_const = r.num("g_pl_const", 1.0);
    std::string form = r.str("g_alpha_form", "pole");
    check(form == "pole" || form == "constant", ErrorCode::Config,
          "g_alpha_form must be pole|constant");

    bridges::GronwallSeries series;
    series.grid = sde::make_grid(g_steps, horizon);
    if (form == "pole")
      series.alpha = [scale, horizon](double t) { return scale / (horizon - t); };
    else
      series.alpha = [scale](double) { return scale; };
    series.pl_beta = [pl_const](double) { return pl_const; };
    series.pl_gamma = [](double) { return 0.0; };

    bridges::GronwallReport report =
        bridges::gronwall_check(series, r.num("g_threshold", 1e3));
    io::write_file(join(out_dir, "gronwall.json"), bridges::to_json(report));
    // Columnar trace for plotting.
    {
      std::ostringstream dat;
      dat.precision(12);
      for (std::size_t i = 0; i < report.t.size(); ++i)
        dat << report.t[i] << ' ' << report.zeta[i] << ' ' << report.ratio[i]
            << '\n';
      io::write_file(join(out_dir, "gronwall_trace.dat"), dat.str());
    }
    std::printf("gronwall (%s alpha): %s\n", form.c_str(),
                report.pass ? "PASS" : "FAIL");
    all_pass &= report.pass;
  }

  r.resolved().save(join(out_dir, "resolved.config"));
  return all_pass ? 0 : 4;
}

int cmd_eval(const KvConfig& cfg) {
  Resolver r(cfg);
  std::string gen_dir = r.require("generated_dir");
  std::string ref_dir = r.require("reference_dir");
  std::string out_dir = r.require("out_dir");
  int k = static_cast<int>(r.integer("k", 4));
  bool center = r.flag("center", true);
  std::string tables_path = r.str("tables_path", "");

  std::unique_ptr<geometry::AtomTables> tables;
  if (!tables_path.empty())
    tables = std::make_unique<geometry::AtomTables>(
        io::load_atom_tables(tables_path));

  auto generated = io::load_dataset(gen_dir, tables.get(), center);
  auto reference = io::load_dataset(ref_dir, tables.get(), center);
  eval::MetricReport report =
      eval::evaluate(generated, reference, tables.get(), k);

  ensure_dir(out_dir);
  io::write_file(join(out_dir, "report.json"), eval::to_json(report) + "\n");
  io::write_file(join(out_dir, "report.txt"), eval::to_table(report));
  r.resolved().save(join(out_dir, "resolved.config"));
  std::fputs(eval::to_table(report).c_str(), stdout);
  return 0;
}

int cmd_energy(const KvConfig& cfg) {
  Resolver r(cfg);
  std::string input = r.require("input");
  std::string energy = r.require("energy");
  int k = static_cast<int>(r.integer("k", 4));
  bool fd_check = r.flag("fd_check", false);
  double h = r.num("fd_step", 1e-5);
  std::string out_path = r.str("out", "");

  ForceBundle force = make_force_bundle(
      energy, k, r.num("clip_norm", 1e3), r.str("stats_path", ""),
      r.str("tables_path", ""), r.str("amber_terms", "bond,angle,lj,coulomb"));
  check(force.active, ErrorCode::Config, "energy must not be 'none'");

  geometry::MarkedPointSet x;
  std::string ext = fs::path(input).extension().string();
  if (ext == ".xyz") {
    check(force.tables != nullptr, ErrorCode::Config,
          "tables_path required for .xyz input");
    x = io::read_xyz(input, *force.tables);
  } else if (ext == ".ply") {
    x = io::read_ply(input);
  } else {
    x = io::read_cloud(input);
  }

  double e = energies::energy(x, force.ef);
  geometry::Coords grad = energies::energy_grad(x, force.ef);
  std::printf("energy[%s] = %.12g\n", energy.c_str(), e);
  std::printf("grad norm = %.12g, max point norm = %.12g\n", grad.norm(),
              grad.rowwise().norm().maxCoeff());
  if (fd_check) {
    geometry::Coords fd = energies::fd_gradient(x, force.ef, h);
    double rel = (grad - fd).norm() / std::max(fd.norm(), 1e-12);
    std::printf("fd check (h=%.3g): relative error %.3g\n", h, rel);
  }
  if (!out_path.empty()) {
    std::ostringstream dump;
    dump.precision(17);
    dump << "# energy " << e << "\n";
    for (int i = 0; i < grad.rows(); ++i)
      dump << grad(i, 0) << ' ' << grad(i, 1) << ' ' << grad(i, 2) << '\n';
    io::write_file(out_path, dump.str());
    r.resolved().save(out_path + ".config");
  }
  return 0;
}

namespace {

KvConfig gather(const std::string& config_path,
                const std::vector<std::string>& sets, const KvConfig& flags) {
  KvConfig merged;
  if (!config_path.empty()) merged.merge(KvConfig::load(config_path));
  KvConfig overrides;
  for (const auto& kv : sets) {
    auto eq = kv.find('=');
    check(eq != std::string::npos, ErrorCode::Config,
          "--set expects key=value, got '" + kv + "'");
    overrides.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  merged.merge(overrides);
  merged.merge(flags);  // explicit flags win
  return merged;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"bridgen: prior-informed diffusion bridge toolkit"};
  app.require_subcommand(1);

  struct SubState {
    CLI::App* sub = nullptr;
    std::string config_path;
    std::vector<std::string> sets;
    KvConfig flags;
  };
  std::map<std::string, SubState> subs;

  auto add_sub = [&](const std::string& name, const std::string& desc) {
    SubState& st = subs[name];
    st.sub = app.add_subcommand(name, desc);
    st.sub->add_option("--config", st.config_path, "key=value config file");
    st.sub->add_option("--set", st.sets, "override: key=value");
    return st.sub;
  };

  auto bind = [&](const std::string& sub, const std::string& flag,
                  const std::string& key, const std::string& desc) {
    auto* opt = subs[sub].sub->add_option(flag, desc);
    opt->each([&subs, sub, key](const std::string& v) {
      subs.at(sub).flags.set(key, v);
    });
  };

  add_sub("extract-stats", "compute dataset statistics side information");
  bind("extract-stats", "--data", "data_dir", "dataset directory");
  bind("extract-stats", "--out", "out", "output stats file");
  bind("extract-stats", "--k", "k", "neighbor count");
  bind("extract-stats", "--tables", "tables_path", "atom tables file");

  add_sub("train", "train a drift model");
  bind("train", "--data", "data_dir", "dataset directory");
  bind("train", "--out", "out_dir", "output directory");
  bind("train", "--seed", "seed", "RNG seed");

  add_sub("sample", "sample from a trained model");
  bind("sample", "--checkpoint", "checkpoint", "checkpoint file");
  bind("sample", "--out", "out_dir", "output directory");
  bind("sample", "--n", "n", "number of items");
  bind("sample", "--points", "points", "points per item");
  bind("sample", "--steps", "steps", "integration steps");
  bind("sample", "--seed", "seed", "RNG seed");
  bind("sample", "--frames", "frames", "true to retain per-step frames");

  add_sub("verify", "bridge pinning and Gronwall checks");
  bind("verify", "--out", "out_dir", "output directory");
  bind("verify", "--mode", "mode", "pinning|gronwall|both");
  bind("verify", "--seed", "seed", "RNG seed");

  add_sub("eval", "evaluate generated samples against a reference set");
  bind("eval", "--generated", "generated_dir", "generated samples directory");
  bind("eval", "--reference", "reference_dir", "reference directory");
  bind("eval", "--out", "out_dir", "output directory");
  bind("eval", "--tables", "tables_path", "atom tables file");
  bind("eval", "--k", "k", "neighbor count");

  add_sub("energy", "evaluate an energy and its gradient on a file");
  bind("energy", "--input", "input", "molecule or cloud file");
  bind("energy", "--energy", "energy", "amber|statistical|riesz|knn");
  bind("energy", "--stats", "stats_path", "stats file");
  bind("energy", "--tables", "tables_path", "atom tables file");
  bind("energy", "--k", "k", "neighbor count");
  bind("energy", "--fd-check", "fd_check", "true to compare with differences");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto& [name, st] : subs) {
      if (!st.sub->parsed()) continue;
      KvConfig cfg = gather(st.config_path, st.sets, st.flags);
      if (name == "extract-stats") return cmd_extract_stats(cfg);
      if (name == "train") return cmd_train(cfg);
      if (name == "sample") return cmd_sample(cfg);
      if (name == "verify") return cmd_verify(cfg);
      if (name == "eval") return cmd_eval(cfg);
      if (name == "energy") return cmd_energy(cfg);
    }
    throw Error(ErrorCode::Config, "no subcommand given");
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace bridgen::cli
