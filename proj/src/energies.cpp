#include "bridgen/energies.hpp"

#include <cmath>
#include <string>

#include "bridgen/common.hpp"

namespace bridgen::energies {

using geometry::Coords;
using geometry::MarkedPointSet;

namespace {

void warn_absent_once(const char* what) {
  static bool warned = false;
  if (!warned) {
    warn(std::string("statistics entry absent for some ") + what +
         "; treating as zero contribution");
    warned = true;
  }
}

double checked_dist(const Coords& coords, int i, int j, double eps) {
  double d = (coords.row(i) - coords.row(j)).norm();
  if (d < eps)
    throw Error(ErrorCode::Singular, "points " + std::to_string(i) + " and " +
                                         std::to_string(j) +
                                         " nearly coincident (d=" +
                                         std::to_string(d) + ")");
  return d;
}

// d(angle)/d(xi), d(angle)/d(xj), d(angle)/d(xk) for the vertex-j angle.
struct AngleGrad {
  Eigen::Vector3d gi, gj, gk;
};

AngleGrad angle_gradient(const Coords& coords, int i, int j, int k) {
  Eigen::Vector3d a = coords.row(i) - coords.row(j);
  Eigen::Vector3d b = coords.row(k) - coords.row(j);
  double na = a.norm(), nb = b.norm();
  check(na > 0.0 && nb > 0.0, ErrorCode::Singular,
        "degenerate angle: zero-length arm");
  double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  double s = std::max(std::sqrt(1.0 - c * c), 1e-12);
  Eigen::Vector3d dc_da = b / (na * nb) - c * a / (na * na);
  Eigen::Vector3d dc_db = a / (na * nb) - c * b / (nb * nb);
  AngleGrad g;
  g.gi = -dc_da / s;
  g.gk = -dc_db / s;
  g.gj = -(g.gi + g.gk);
  return g;
}

const geometry::DatasetStats& need_stats(const EnergyForce& ef) {
  check(ef.stats != nullptr, ErrorCode::Config,
        "this energy requires dataset statistics");
  return *ef.stats;
}

const geometry::AtomTables& need_tables(const EnergyForce& ef) {
  check(ef.tables != nullptr, ErrorCode::Config,
        "this energy requires atom tables");
  return *ef.tables;
}

}  // namespace

FrozenGraph freeze_graph(const MarkedPointSet& x, const EnergyForce& ef) {
  FrozenGraph g;
  const int m = x.size();
  const bool typed = x.type_count() > 0;

  if (typed) {
    Eigen::MatrixXd onehot = geometry::round_types(x.types);
    g.type_of.resize(m);
    for (int i = 0; i < m; ++i) g.type_of[i] = geometry::rounded_type(onehot, i);
    if (ef.kind == EnergyKind::Amber) {
      g.bonds = geometry::infer_bonds(x.coords, onehot, need_tables(ef));
      std::vector<std::vector<int>> adj(m);
      for (auto [i, j] : g.bonds) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
      for (int j = 0; j < m; ++j)
        for (std::size_t a = 0; a < adj[j].size(); ++a)
          for (std::size_t b = a + 1; b < adj[j].size(); ++b)
            g.bond_angles.push_back({std::min(adj[j][a], adj[j][b]), j,
                                     std::max(adj[j][a], adj[j][b])});
    }
  } else {
    check(ef.kind == EnergyKind::Riesz || ef.kind == EnergyKind::KnnUniform,
          ErrorCode::Config, "typed input required for this energy");
  }

  if (ef.kind == EnergyKind::Statistical || ef.kind == EnergyKind::KnnUniform) {
    g.knn = geometry::knn_graph(x.coords, ef.k);
    if (ef.kind == EnergyKind::Statistical) {
      for (int j = 0; j < m; ++j)
        for (std::size_t a = 0; a < g.knn[j].size(); ++a)
          for (std::size_t b = a + 1; b < g.knn[j].size(); ++b)
            g.knn_angles.push_back({std::min(g.knn[j][a], g.knn[j][b]), j,
                                    std::max(g.knn[j][a], g.knn[j][b])});
    }
  }
  return g;
}

double energy_on_graph(const Coords& coords, const FrozenGraph& g,
                       const EnergyForce& ef) {
  const int m = static_cast<int>(coords.rows());
  double e = 0.0;
  switch (ef.kind) {
    case EnergyKind::Amber: {
      const auto& stats = need_stats(ef);
      const auto& tables = need_tables(ef);
      if (ef.term_mask.bond) {
        for (auto [i, j] : g.bonds) {
          auto l0 = stats.ref_bond_len(g.type_of[i], g.type_of[j]);
          if (!l0) {
            warn_absent_once("bond type pair");
            continue;
          }
          double d = (coords.row(i) - coords.row(j)).norm() - *l0;
          e += d * d;
        }
      }
      if (ef.term_mask.angle) {
        for (auto [i, j, k] : g.bond_angles) {
          auto w0 = stats.ref_angle(g.type_of[i], g.type_of[j], g.type_of[k]);
          if (!w0) {
            warn_absent_once("angle type triple");
            continue;
          }
          double d = geometry::angle(coords.row(i), coords.row(j),
                                     coords.row(k)) - *w0;
          e += d * d;
        }
      }
      if (ef.term_mask.lj) {
        double s = tables.lj_sigma;
        for (int i = 0; i < m; ++i)
          for (int j = i + 1; j < m; ++j) {
            double r = s / checked_dist(coords, i, j, ef.eps_dist);
            double r6 = r * r * r * r * r * r;
            e += r6 * r6 - 2.0 * r6;
          }
      }
      if (ef.term_mask.coulomb) {
        for (int i = 0; i < m; ++i)
          for (int j = i + 1; j < m; ++j)
            e += tables.coulomb_kappa * tables.info(g.type_of[i]).charge *
                 tables.info(g.type_of[j]).charge /
                 checked_dist(coords, i, j, ef.eps_dist);
      }
      return e;
    }
    case EnergyKind::Statistical: {
      const auto& stats = need_stats(ef);
      for (int i = 0; i < m; ++i)
        for (int j : g.knn[i]) {
          auto st = stats.knn_pair_stats(g.type_of[i], g.type_of[j]);
          if (!st) {
            warn_absent_once("knn type pair");
            continue;
          }
          double d = (coords.row(i) - coords.row(j)).norm() - st->first;
          e += d * d / st->second;
        }
      for (auto [i, j, k] : g.knn_angles) {
        auto st = stats.knn_triple_stats(g.type_of[i], g.type_of[j],
                                         g.type_of[k]);
        if (!st) {
          warn_absent_once("knn type triple");
          continue;
        }
        double d = geometry::angle(coords.row(i), coords.row(j),
                                   coords.row(k)) - st->first;
        e += d * d / st->second;
      }
      return e;
    }
    case EnergyKind::Riesz: {
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
          double d = checked_dist(coords, i, j, ef.eps_dist);
          e += 1.0 / (d * d);
        }
      return e;
    }
    case EnergyKind::KnnUniform: {
      const double mu = need_stats(ef).knn_mean;
      for (int i = 0; i < m; ++i) {
        double d = geometry::knn_dist(coords, g.knn, i) - mu;
        e += d * d;
      }
      return e;
    }
  }
  return e;
}

Coords grad_on_graph(const Coords& coords, const FrozenGraph& g,
                     const EnergyForce& ef) {
  const int m = static_cast<int>(coords.rows());
  Coords grad = Coords::Zero(m, 3);

  auto add_pair = [&](int i, int j, double de_dlen) {
    Eigen::Vector3d u = coords.row(i) - coords.row(j);
    double d = u.norm();
    Eigen::Vector3d gi = de_dlen * u / d;
    grad.row(i) += gi;
    grad.row(j) -= gi;
  };

  switch (ef.kind) {
    case EnergyKind::Amber: {
      const auto& stats = need_stats(ef);
      const auto& tables = need_tables(ef);
      if (ef.term_mask.bond) {
        for (auto [i, j] : g.bonds) {
          auto l0 = stats.ref_bond_len(g.type_of[i], g.type_of[j]);
          if (!l0) continue;
          double d = (coords.row(i) - coords.row(j)).norm();
          add_pair(i, j, 2.0 * (d - *l0));
        }
      }
      if (ef.term_mask.angle) {
        for (auto [i, j, k] : g.bond_angles) {
          auto w0 = stats.ref_angle(g.type_of[i], g.type_of[j], g.type_of[k]);
          if (!w0) continue;
          double ang = geometry::angle(coords.row(i), coords.row(j),
                                       coords.row(k));
          AngleGrad ag = angle_gradient(coords, i, j, k);
          double de = 2.0 * (ang - *w0);
          grad.row(i) += de * ag.gi;
          grad.row(j) += de * ag.gj;
          grad.row(k) += de * ag.gk;
        }
      }
      if (ef.term_mask.lj) {
        double s = tables.lj_sigma;
        for (int i = 0; i < m; ++i)
          for (int j = i + 1; j < m; ++j) {
            double d = checked_dist(coords, i, j, ef.eps_dist);
            double r = s / d;
            double r6 = r * r * r * r * r * r;
            add_pair(i, j, 12.0 * (r6 - r6 * r6) / d);
          }
      }
      if (ef.term_mask.coulomb) {
        for (int i = 0; i < m; ++i)
          for (int j = i + 1; j < m; ++j) {
            double d = checked_dist(coords, i, j, ef.eps_dist);
            double qq = tables.coulomb_kappa * tables.info(g.type_of[i]).charge *
                        tables.info(g.type_of[j]).charge;
            add_pair(i, j, -qq / (d * d));
          }
      }
      return grad;
    }
    case EnergyKind::Statistical: {
      const auto& stats = need_stats(ef);
      for (int i = 0; i < m; ++i)
        for (int j : g.knn[i]) {
          auto st = stats.knn_pair_stats(g.type_of[i], g.type_of[j]);
          if (!st) continue;
          double d = (coords.row(i) - coords.row(j)).norm();
          add_pair(i, j, 2.0 * (d - st->first) / st->second);
        }
      for (auto [i, j, k] : g.knn_angles) {
        auto st = stats.knn_triple_stats(g.type_of[i], g.type_of[j],
                                         g.type_of[k]);
        if (!st) continue;
        double ang = geometry::angle(coords.row(i), coords.row(j),
                                     coords.row(k));
        AngleGrad ag = angle_gradient(coords, i, j, k);
        double de = 2.0 * (ang - st->first) / st->second;
        grad.row(i) += de * ag.gi;
        grad.row(j) += de * ag.gj;
        grad.row(k) += de * ag.gk;
      }
      return grad;
    }
    case EnergyKind::Riesz: {
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
          double d = checked_dist(coords, i, j, ef.eps_dist);
          add_pair(i, j, -2.0 / (d * d * d));
        }
      return grad;
    }
    case EnergyKind::KnnUniform: {
      const double mu = need_stats(ef).knn_mean;
      const double K = static_cast<double>(ef.k);
      for (int i = 0; i < m; ++i) {
        double de = 2.0 * (geometry::knn_dist(coords, g.knn, i) - mu);
        for (int j : g.knn[i]) {
          Eigen::Vector3d u = coords.row(i) - coords.row(j);
          grad.row(i) += de * 2.0 / K * u;
          grad.row(j) -= de * 2.0 / K * u;
        }
      }
      return grad;
    }
  }
  return grad;
}

double energy(const MarkedPointSet& x, const EnergyForce& ef) {
  return energy_on_graph(x.coords, freeze_graph(x, ef), ef);
}

Coords energy_grad(const MarkedPointSet& x, const EnergyForce& ef) {
  return grad_on_graph(x.coords, freeze_graph(x, ef), ef);
}

Coords fd_gradient(const MarkedPointSet& x, const EnergyForce& ef, double h) {
  check(h > 0.0, ErrorCode::Domain, "finite-difference step must be positive");
  FrozenGraph g = freeze_graph(x, ef);
  Coords grad(x.size(), 3);
  Coords probe = x.coords;
  for (int i = 0; i < x.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      double orig = probe(i, c);
      probe(i, c) = orig + h;
      double ep = energy_on_graph(probe, g, ef);
      probe(i, c) = orig - h;
      double em = energy_on_graph(probe, g, ef);
      probe(i, c) = orig;
      grad(i, c) = (ep - em) / (2.0 * h);
    }
  return grad;
}

double amber_energy(const MarkedPointSet& x, const EnergyForce& ef) {
  EnergyForce e = ef;
  e.kind = EnergyKind::Amber;
  return energy(x, e);
}

double stat_energy(const MarkedPointSet& x, const EnergyForce& ef) {
  EnergyForce e = ef;
  e.kind = EnergyKind::Statistical;
  return energy(x, e);
}

double riesz_energy(const MarkedPointSet& x) {
  EnergyForce e;
  e.kind = EnergyKind::Riesz;
  return energy(x, e);
}

double knn_energy(const MarkedPointSet& x, const EnergyForce& ef) {
  EnergyForce e = ef;
  e.kind = EnergyKind::KnnUniform;
  return energy(x, e);
}

sde::DriftFn make_force(const EnergyForce& ef, int k) {
  return [ef, k](const Eigen::VectorXd& state, double) -> Eigen::VectorXd {
    check(state.size() % (3 + k) == 0, ErrorCode::Domain,
          "state size is not a multiple of 3+k");
    const int m = static_cast<int>(state.size()) / (3 + k);
    MarkedPointSet x = geometry::unflatten(state, m, k);
    Coords g = energy_grad(x, ef);
    if (!g.allFinite())
      throw Error(ErrorCode::Numeric,
                  "non-finite force at state with |z| = " +
                      std::to_string(state.norm()));
    Eigen::VectorXd f = Eigen::VectorXd::Zero(state.size());
    for (int i = 0; i < m; ++i) {
      Eigen::Vector3d fi = -g.row(i);
      double n = fi.norm();
      if (n > ef.clip_norm) fi *= ef.clip_norm / n;
      for (int c = 0; c < 3; ++c) f[3 * i + c] = fi[c];
    }
    return f;  // type channel stays zero
  };
}

}  // namespace bridgen::energies
