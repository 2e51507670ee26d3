#include "bridgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bridgen/common.hpp"
#include "bridgen/rng.hpp"

namespace bridgen::eval {

using Eigen::VectorXd;
using geometry::Coords;
using geometry::MarkedPointSet;

SampleBatch sample(const model::DriftModel& drift_model, int n_items,
                   int points_per_item, const SampleOptions& opts,
                   std::uint64_t checkpoint_fingerprint) {
  check(n_items >= 1 && points_per_item >= 1, ErrorCode::Domain,
        "need at least one item and one point");
  check(opts.steps >= 1, ErrorCode::Domain, "steps must be >= 1");

  const sde::NoiseSchedule sched = drift_model.schedule_spec().build();
  const double T = sched.horizon();
  const double sd0 = std::sqrt(sched.beta(T));
  const sde::TimeGrid grid = sde::make_grid(opts.steps, T);
  const int k = drift_model.type_count();
  const int dim = points_per_item * (3 + k);

  SampleBatch batch;
  batch.steps = opts.steps;
  batch.seed = opts.seed;
  batch.checkpoint_fingerprint = checkpoint_fingerprint;

  for (int item = 0; item < n_items; ++item) {
    Rng rng(opts.seed, item);
    VectorXd z0(dim);
    for (int i = 0; i < dim; ++i) z0[i] = sd0 * rng.normal();
    sde::Trajectory traj =
        sde::euler_maruyama(drift_model.drift_fn(), sched, z0, grid, rng);
    MarkedPointSet x = geometry::unflatten(traj.terminal(), points_per_item, k);
    if (k > 0) x.types = geometry::round_types(x.types);
    if (opts.keep_frames) {
      std::vector<Coords> item_frames;
      item_frames.reserve(traj.states.size());
      for (const auto& state : traj.states)
        item_frames.push_back(
            geometry::unflatten(state, points_per_item, k).coords);
      batch.frames.push_back(std::move(item_frames));
    }
    batch.items.push_back(std::move(x));
  }
  return batch;
}

double chamfer(const Coords& a, const Coords& b) {
  check(a.rows() >= 1 && b.rows() >= 1, ErrorCode::Domain, "empty cloud");
  double acc_a = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b.rows(); ++j)
      best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    acc_a += best;
  }
  double acc_b = 0.0;
  for (int j = 0; j < b.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.rows(); ++i)
      best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    acc_b += best;
  }
  return acc_a / a.rows() + acc_b / b.rows();
}

namespace {

// O(n^3) assignment with potentials (shortest augmenting paths).
double hungarian_min_cost(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total;
}

Coords subsample(const Coords& a, int target) {
  if (a.rows() == target) return a;
  Coords out(target, 3);
  for (int i = 0; i < target; ++i)
    out.row(i) = a.row(static_cast<int>(
        static_cast<long long>(i) * a.rows() / target));
  return out;
}

}  // namespace

double emd(const Coords& a, const Coords& b) {
  check(a.rows() >= 1 && b.rows() >= 1, ErrorCode::Domain, "empty cloud");
  const int n = static_cast<int>(std::min(a.rows(), b.rows()));
  Coords aa = subsample(a, n);
  Coords bb = subsample(b, n);
  check(aa.rows() == bb.rows(), ErrorCode::Domain,
        "size mismatch after resampling");
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = (aa.row(i) - bb.row(j)).norm();
  return hungarian_min_cost(cost) / n;
}

double cloud_distance(const Coords& a, const Coords& b, CloudMetric metric) {
  return metric == CloudMetric::Chamfer ? chamfer(a, b) : emd(a, b);
}

std::pair<double, double> mmd_cov(const std::vector<Coords>& generated,
                                  const std::vector<Coords>& reference,
                                  CloudMetric metric) {
  check(!generated.empty() && !reference.empty(), ErrorCode::Domain,
        "mmd/cov needs nonempty sets");
  const int ng = static_cast<int>(generated.size());
  const int nr = static_cast<int>(reference.size());
  Eigen::MatrixXd d(ng, nr);
  for (int g = 0; g < ng; ++g)
    for (int r = 0; r < nr; ++r)
      d(g, r) = cloud_distance(generated[g], reference[r], metric);

  double mmd = 0.0;
  for (int r = 0; r < nr; ++r) mmd += d.col(r).minCoeff();
  mmd /= nr;

  std::set<int> covered;
  for (int g = 0; g < ng; ++g) {
    int best = 0;
    for (int r = 1; r < nr; ++r)
      if (d(g, r) < d(g, best)) best = r;  // ties keep the lower index
    covered.insert(best);
  }
  double cov = static_cast<double>(covered.size()) / nr;
  return {mmd, cov};
}

std::pair<double, double> uniformity_stats(const Coords& cloud, int K) {
  auto knn = geometry::knn_graph(cloud, K);
  geometry::Moments mom;
  for (int i = 0; i < cloud.rows(); ++i)
    mom.add(geometry::knn_dist(cloud, knn, i));
  return {mom.mean, mom.variance(0.0)};
}

std::string molecule_fingerprint(const MarkedPointSet& mol,
                                 const geometry::AtomTables& tables) {
  Eigen::MatrixXd onehot = geometry::round_types(mol.types);
  auto bonds = geometry::infer_bonds(mol.coords, onehot, tables);
  const int m = mol.size();
  std::vector<std::vector<int>> adj(m);
  for (auto [i, j] : bonds) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<std::string> tokens;
  tokens.reserve(m);
  for (int i = 0; i < m; ++i) {
    std::vector<std::string> nb;
    for (int j : adj[i])
      nb.push_back(tables.info(geometry::rounded_type(onehot, j)).symbol);
    std::sort(nb.begin(), nb.end());
    std::string token =
        tables.info(geometry::rounded_type(onehot, i)).symbol + "/" +
        std::to_string(adj[i].size()) + ":";
    for (const auto& s : nb) token += s + ",";
    tokens.push_back(token);
  }
  std::sort(tokens.begin(), tokens.end());
  std::string fp;
  for (const auto& t : tokens) fp += t + ";";
  return fp;
}

double uniqueness(const std::vector<MarkedPointSet>& mols,
                  const geometry::AtomTables& tables) {
  check(!mols.empty(), ErrorCode::Domain, "empty batch");
  std::set<std::string> distinct;
  for (const auto& mol : mols) distinct.insert(molecule_fingerprint(mol, tables));
  return static_cast<double>(distinct.size()) / mols.size();
}

MetricReport evaluate(const std::vector<MarkedPointSet>& generated,
                      const std::vector<MarkedPointSet>& reference,
                      const geometry::AtomTables* tables, int knn_k) {
  check(!generated.empty(), ErrorCode::Data, "no generated items");
  check(!reference.empty(), ErrorCode::Data, "no reference items");

  MetricReport report;
  report.n_generated = static_cast<int>(generated.size());
  report.n_reference = static_cast<int>(reference.size());
  report.knn_k = knn_k;

  std::vector<Coords> gen, ref;
  for (const auto& x : generated) gen.push_back(x.coords);
  for (const auto& x : reference) ref.push_back(x.coords);
  std::tie(report.mmd_cd, report.cov_cd) =
      mmd_cov(gen, ref, CloudMetric::Chamfer);
  std::tie(report.mmd_emd, report.cov_emd) = mmd_cov(gen, ref, CloudMetric::Emd);

  bool uniform_ok = true;
  for (const auto& c : gen) uniform_ok &= (c.rows() > knn_k);
  if (uniform_ok) {
    report.has_uniformity = true;
    geometry::Moments means, vars;
    for (const auto& c : gen) {
      auto [mu, var] = uniformity_stats(c, knn_k);
      means.add(mu);
      vars.add(var);
    }
    report.knn_dist_mean = means.mean;
    report.knn_dist_var = vars.mean;
  }

  if (tables != nullptr && generated.front().type_count() > 0) {
    report.has_stability = true;
    double atom_acc = 0.0;
    int stable = 0;
    for (const auto& mol : generated) {
      atom_acc += geometry::atom_stability(mol, *tables);
      stable += geometry::molecule_stable(mol, *tables) ? 1 : 0;
    }
    report.atom_stability = atom_acc / generated.size();
    report.mol_stability = static_cast<double>(stable) / generated.size();
    report.uniqueness_fraction = uniqueness(generated, *tables);
  }
  return report;
}

std::string to_json(const MetricReport& report) {
  nlohmann::json j;
  j["n_generated"] = report.n_generated;
  j["n_reference"] = report.n_reference;
  j["mmd_cd"] = report.mmd_cd;
  j["mmd_emd"] = report.mmd_emd;
  j["cov_cd"] = report.cov_cd;
  j["cov_emd"] = report.cov_emd;
  if (report.has_uniformity) {
    j["knn_k"] = report.knn_k;
    j["knn_dist_mean"] = report.knn_dist_mean;
    j["knn_dist_var"] = report.knn_dist_var;
  }
  if (report.has_stability) {
    j["atom_stability"] = report.atom_stability;
    j["mol_stability"] = report.mol_stability;
    j["uniqueness"] = report.uniqueness_fraction;
  }
  return j.dump(2);
}

std::string to_table(const MetricReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << "metric            value\n";
  out << "mmd_cd            " << report.mmd_cd << "\n";
  out << "mmd_emd           " << report.mmd_emd << "\n";
  out << "cov_cd            " << report.cov_cd << "\n";
  out << "cov_emd           " << report.cov_emd << "\n";
  if (report.has_uniformity) {
    out << "knn_dist_mean     " << report.knn_dist_mean << "\n";
    out << "knn_dist_var      " << report.knn_dist_var << "\n";
  }
  if (report.has_stability) {
    out << "atom_stability    " << report.atom_stability << "\n";
    out << "mol_stability     " << report.mol_stability << "\n";
    out << "uniqueness        " << report.uniqueness_fraction << "\n";
  }
  return out.str();
}

}  // namespace bridgen::eval
