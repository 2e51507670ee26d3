#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bridgen::geometry {

using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// A molecule or point cloud: coordinates plus a continuous type vector per
// point. k = 0 for untyped clouds; typed and untyped share all coordinate ops.
struct MarkedPointSet {
  Coords coords;          // m x 3
  Eigen::MatrixXd types;  // m x k

  int size() const { return static_cast<int>(coords.rows()); }
  int type_count() const { return static_cast<int>(types.cols()); }
};

// Flat state layout used by the SDE machinery: coords row-major, then types
// row-major. Dimension m*(3+k).
Eigen::VectorXd flatten(const MarkedPointSet& x);
MarkedPointSet unflatten(const Eigen::VectorXd& state, int m, int k);

// Each row becomes the indicator of its maximal entry; ties break toward the
// lowest index. Idempotent on one-hot input.
Eigen::MatrixXd round_types(const Eigen::MatrixXd& types);
int rounded_type(const Eigen::MatrixXd& types, int row);  // argmax with tie rule

// Per-type constants; loaded from a data file, never hard-coded.
struct AtomTables {
  struct TypeInfo {
    std::string symbol;
    double covalent_radius = 0.0;  // length
    int valency = 0;
    double charge = 0.0;  // elementary charges
  };
  std::vector<TypeInfo> types;
  double lj_sigma = 1.0;      // single global LJ length scale
  double coulomb_kappa = 1.0;

  int index_of(const std::string& symbol) const;  // -1 when missing
  int require(const std::string& symbol) const;
  const TypeInfo& info(int type_index) const;
};

using BondList = std::vector<std::pair<int, int>>;  // i < j, unique

// (i, j) bonded iff |x_i - x_j| < 1.15 * (radius_i + radius_j).
BondList infer_bonds(const Coords& coords, const Eigen::MatrixXd& onehot,
                     const AtomTables& tables);

// K nearest neighbors per point, distance ties broken by lower index.
std::vector<std::vector<int>> knn_graph(const Coords& coords, int K);

// Mean squared distance from point i to its K nearest neighbors.
double knn_dist(const Coords& coords, const std::vector<std::vector<int>>& knn,
                int i);

// Angle at vertex j between (xi - xj) and (xk - xj), in [0, pi].
double angle(const Eigen::Vector3d& xi, const Eigen::Vector3d& xj,
             const Eigen::Vector3d& xk);

// Streaming mean/variance accumulator with associative merge.
struct Moments {
  long count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v);
  void merge(const Moments& other);
  double variance(double floor_value) const;  // population variance, floored
};

// Side information extracted from a dataset: Gaussian statistics of knn-edge
// lengths and angles per type pair/triple, reference bond lengths/angles from
// the bond graph, and the pooled knn-dist mean for uniformity energies.
struct DatasetStats {
  int k_used = 4;
  double var_floor = 1e-6;
  double knn_mean = 0.0;  // pooled mean of knn-dist_i (length^2)
  long knn_samples = 0;
  std::vector<std::string> type_symbols;

  std::map<std::pair<int, int>, Moments> knn_len;
  std::map<std::array<int, 3>, Moments> knn_angle;
  std::map<std::pair<int, int>, Moments> bond_len;
  std::map<std::array<int, 3>, Moments> bond_angle;

  // Symmetrized lookups: pair keys are unordered, triples are symmetric in the
  // outer types around the center. Absent entries return nullopt.
  std::optional<std::pair<double, double>> knn_pair_stats(int r, int c) const;
  std::optional<std::pair<double, double>> knn_triple_stats(int r, int c,
                                                            int r2) const;
  std::optional<double> ref_bond_len(int r, int c) const;
  std::optional<double> ref_angle(int r, int c, int r2) const;

  void merge(const DatasetStats& other);
};

// Accumulates knn-edge lengths/angles (for the statistical energy) and
// bond-graph lengths/angles (reference values for the physical energy), plus
// the pooled knn-dist mean. tables may be null for untyped clouds.
DatasetStats extract_stats(const std::vector<MarkedPointSet>& dataset, int K,
                           const AtomTables* tables);

// Fraction of atoms whose inferred bond count equals the valency of their type.
double atom_stability(const MarkedPointSet& mol, const AtomTables& tables);
bool molecule_stable(const MarkedPointSet& mol, const AtomTables& tables);

}  // namespace bridgen::geometry
