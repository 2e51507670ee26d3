#pragma once

#include <Eigen/Dense>

#include "bridgen/geometry.hpp"
#include "bridgen/sde.hpp"

namespace bridgen::energies {

enum class EnergyKind { Amber, Statistical, Riesz, KnnUniform };

struct TermMask {
  bool bond = true;
  bool angle = true;
  bool lj = true;
  bool coulomb = true;
};

// A scalar energy E(x) with analytic coordinate gradient; the prior force fed
// to bridges and the drift model is f = -grad E. stats/tables are borrowed
// and must outlive the EnergyForce.
struct EnergyForce {
  EnergyKind kind = EnergyKind::Riesz;
  const geometry::DatasetStats* stats = nullptr;
  const geometry::AtomTables* tables = nullptr;
  int k = 4;           // neighbor count for knn-based energies
  TermMask term_mask;  // amber ablations
  double eps_dist = 1e-6;   // singular-distance guard
  double clip_norm = 1e3;   // max per-point force norm fed to drifts
};

// Discrete structure held fixed while differentiating: bond set, knn
// membership, and rounded types are treated as constants of x.
struct FrozenGraph {
  std::vector<int> type_of;  // empty for untyped clouds
  geometry::BondList bonds;
  std::vector<std::array<int, 3>> bond_angles;  // (i, j, k): vertex j, i < k
  std::vector<std::vector<int>> knn;
  std::vector<std::array<int, 3>> knn_angles;
};

FrozenGraph freeze_graph(const geometry::MarkedPointSet& x,
                         const EnergyForce& ef);

double energy_on_graph(const geometry::Coords& coords, const FrozenGraph& g,
                       const EnergyForce& ef);
geometry::Coords grad_on_graph(const geometry::Coords& coords,
                               const FrozenGraph& g, const EnergyForce& ef);

// Graph frozen at x, then evaluated; the public entry points.
double energy(const geometry::MarkedPointSet& x, const EnergyForce& ef);
geometry::Coords energy_grad(const geometry::MarkedPointSet& x,
                             const EnergyForce& ef);

// Central differences with the graph refrozen at the base point for every
// probe; the verification oracle for energy_grad.
geometry::Coords fd_gradient(const geometry::MarkedPointSet& x,
                             const EnergyForce& ef, double h);

// Per-kind wrappers.
double amber_energy(const geometry::MarkedPointSet& x, const EnergyForce& ef);
double stat_energy(const geometry::MarkedPointSet& x, const EnergyForce& ef);
double riesz_energy(const geometry::MarkedPointSet& x);
double knn_energy(const geometry::MarkedPointSet& x, const EnergyForce& ef);

// Flat-state force field f(z, t) = -grad E on the coordinate channel, clipped
// to ef.clip_norm per point; zero on the type channel. The point count is
// inferred from the state size and k. The returned callable copies ef; the
// referenced stats/tables must outlive it.
sde::DriftFn make_force(const EnergyForce& ef, int k);

}  // namespace bridgen::energies
