#include "bridgen/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "bridgen/common.hpp"

namespace bridgen::geometry {

Eigen::VectorXd flatten(const MarkedPointSet& x) {
  const int m = x.size(), k = x.type_count();
  Eigen::VectorXd state(m * (3 + k));
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < 3; ++c) state[3 * i + c] = x.coords(i, c);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < k; ++c) state[3 * m + k * i + c] = x.types(i, c);
  return state;
}

MarkedPointSet unflatten(const Eigen::VectorXd& state, int m, int k) {
  check(state.size() == static_cast<long>(m) * (3 + k), ErrorCode::Domain,
        "state size does not match m*(3+k)");
  MarkedPointSet x;
  x.coords.resize(m, 3);
  x.types.resize(m, k);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < 3; ++c) x.coords(i, c) = state[3 * i + c];
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < k; ++c) x.types(i, c) = state[3 * m + k * i + c];
  return x;
}

int rounded_type(const Eigen::MatrixXd& types, int row) {
  const int k = static_cast<int>(types.cols());
  check(k >= 1, ErrorCode::Domain, "rounding needs at least one type channel");
  int best = -1;
  double best_v = 0.0;
  for (int c = 0; c < k; ++c) {
    double v = types(row, c);
    if (std::isnan(v)) continue;
    if (best < 0 || v > best_v) {  // strict: ties keep the lowest index
      best = c;
      best_v = v;
    }
  }
  check(best >= 0, ErrorCode::Data, "all-NaN type row " + std::to_string(row));
  return best;
}

Eigen::MatrixXd round_types(const Eigen::MatrixXd& types) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(types.rows(), types.cols());
  for (int i = 0; i < types.rows(); ++i) out(i, rounded_type(types, i)) = 1.0;
  return out;
}

int AtomTables::index_of(const std::string& symbol) const {
  for (std::size_t i = 0; i < types.size(); ++i)
    if (types[i].symbol == symbol) return static_cast<int>(i);
  return -1;
}

int AtomTables::require(const std::string& symbol) const {
  int i = index_of(symbol);
  check(i >= 0, ErrorCode::Data, "unknown atom type '" + symbol + "'");
  return i;
}

const AtomTables::TypeInfo& AtomTables::info(int type_index) const {
  check(type_index >= 0 && type_index < static_cast<int>(types.size()),
        ErrorCode::Data, "type index out of range");
  return types[type_index];
}

BondList infer_bonds(const Coords& coords, const Eigen::MatrixXd& onehot,
                     const AtomTables& tables) {
  const int m = static_cast<int>(coords.rows());
  check(onehot.rows() == m, ErrorCode::Domain, "types/coords row mismatch");
  std::vector<int> type_of(m);
  for (int i = 0; i < m; ++i) {
    type_of[i] = rounded_type(onehot, i);
    check(type_of[i] < static_cast<int>(tables.types.size()), ErrorCode::Data,
          "no table entry for type column " + std::to_string(type_of[i]));
  }
  BondList bonds;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double cutoff = 1.15 * (tables.info(type_of[i]).covalent_radius +
                              tables.info(type_of[j]).covalent_radius);
      if ((coords.row(i) - coords.row(j)).norm() < cutoff) bonds.push_back({i, j});
    }
  }
  return bonds;
}

std::vector<std::vector<int>> knn_graph(const Coords& coords, int K) {
  const int m = static_cast<int>(coords.rows());
  check(K >= 1 && K < m, ErrorCode::Domain,
        "K must satisfy 1 <= K < m (K=" + std::to_string(K) +
            ", m=" + std::to_string(m) + ")");
  std::vector<std::vector<int>> neighbors(m);
  std::vector<std::pair<double, int>> order(m - 1);
  for (int i = 0; i < m; ++i) {
    int n = 0;
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      order[n++] = {(coords.row(i) - coords.row(j)).squaredNorm(), j};
    }
    // ties break toward the lower index via the pair ordering
    std::partial_sort(order.begin(), order.begin() + K, order.end());
    neighbors[i].resize(K);
    for (int q = 0; q < K; ++q) neighbors[i][q] = order[q].second;
  }
  return neighbors;
}

double knn_dist(const Coords& coords, const std::vector<std::vector<int>>& knn,
                int i) {
  double acc = 0.0;
  for (int j : knn[i]) acc += (coords.row(i) - coords.row(j)).squaredNorm();
  return acc / static_cast<double>(knn[i].size());
}

double angle(const Eigen::Vector3d& xi, const Eigen::Vector3d& xj,
             const Eigen::Vector3d& xk) {
  Eigen::Vector3d a = xi - xj, b = xk - xj;
  double na = a.norm(), nb = b.norm();
  check(na > 0.0 && nb > 0.0, ErrorCode::Singular,
        "degenerate angle: zero-length arm");
  double c = a.dot(b) / (na * nb);
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

void Moments::add(double v) {
  ++count;
  double d = v - mean;
  mean += d / static_cast<double>(count);
  m2 += d * (v - mean);
}

void Moments::merge(const Moments& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  double n1 = static_cast<double>(count), n2 = static_cast<double>(other.count);
  double d = other.mean - mean;
  mean = (n1 * mean + n2 * other.mean) / (n1 + n2);
  m2 += other.m2 + d * d * n1 * n2 / (n1 + n2);
  count += other.count;
}

double Moments::variance(double floor_value) const {
  if (count <= 0) return floor_value;
  return std::max(m2 / static_cast<double>(count), floor_value);
}

namespace {

std::pair<int, int> pair_key(int r, int c) { return {std::min(r, c), std::max(r, c)}; }
std::array<int, 3> triple_key(int r, int c, int r2) {
  return {std::min(r, r2), c, std::max(r, r2)};
}

}  // namespace

std::optional<std::pair<double, double>> DatasetStats::knn_pair_stats(
    int r, int c) const {
  auto it = knn_len.find(pair_key(r, c));
  if (it == knn_len.end()) return std::nullopt;
  return std::make_pair(it->second.mean, it->second.variance(var_floor));
}

std::optional<std::pair<double, double>> DatasetStats::knn_triple_stats(
    int r, int c, int r2) const {
  auto it = knn_angle.find(triple_key(r, c, r2));
  if (it == knn_angle.end()) return std::nullopt;
  return std::make_pair(it->second.mean, it->second.variance(var_floor));
}

std::optional<double> DatasetStats::ref_bond_len(int r, int c) const {
  auto it = bond_len.find(pair_key(r, c));
  if (it == bond_len.end()) return std::nullopt;
  return it->second.mean;
}

std::optional<double> DatasetStats::ref_angle(int r, int c, int r2) const {
  auto it = bond_angle.find(triple_key(r, c, r2));
  if (it == bond_angle.end()) return std::nullopt;
  return it->second.mean;
}

void DatasetStats::merge(const DatasetStats& other) {
  check(k_used == other.k_used, ErrorCode::Domain, "stats K mismatch in merge");
  double n1 = static_cast<double>(knn_samples);
  double n2 = static_cast<double>(other.knn_samples);
  if (n1 + n2 > 0)
    knn_mean = (n1 * knn_mean + n2 * other.knn_mean) / (n1 + n2);
  knn_samples += other.knn_samples;
  auto merge_map = [](auto& dst, const auto& src) {
    for (const auto& [key, mom] : src) dst[key].merge(mom);
  };
  merge_map(knn_len, other.knn_len);
  merge_map(knn_angle, other.knn_angle);
  merge_map(bond_len, other.bond_len);
  merge_map(bond_angle, other.bond_angle);
}

DatasetStats extract_stats(const std::vector<MarkedPointSet>& dataset, int K,
                           const AtomTables* tables) {
  check(!dataset.empty(), ErrorCode::Data, "empty dataset");
  DatasetStats stats;
  stats.k_used = K;
  if (tables)
    for (const auto& ti : tables->types) stats.type_symbols.push_back(ti.symbol);

  Moments pooled;
  for (const auto& item : dataset) {
    const int m = item.size();
    auto knn = knn_graph(item.coords, K);
    for (int i = 0; i < m; ++i) pooled.add(knn_dist(item.coords, knn, i));

    if (item.type_count() == 0) continue;
    Eigen::MatrixXd onehot = round_types(item.types);
    std::vector<int> type_of(m);
    for (int i = 0; i < m; ++i) type_of[i] = rounded_type(onehot, i);

    // knn-edge lengths (directed edges) and angles over each point's
    // neighbor pairs, lower point index first to count each pair once.
    for (int i = 0; i < m; ++i)
      for (int j : knn[i])
        stats.knn_len[pair_key(type_of[i], type_of[j])].add(
            (item.coords.row(i) - item.coords.row(j)).norm());
    for (int j = 0; j < m; ++j) {
      const auto& nb = knn[j];
      for (std::size_t a = 0; a < nb.size(); ++a)
        for (std::size_t b = a + 1; b < nb.size(); ++b) {
          int i = std::min(nb[a], nb[b]), k2 = std::max(nb[a], nb[b]);
          stats.knn_angle[triple_key(type_of[i], type_of[j], type_of[k2])].add(
              angle(item.coords.row(i), item.coords.row(j),
                    item.coords.row(k2)));
        }
    }

    if (!tables) continue;
    BondList bonds = infer_bonds(item.coords, onehot, *tables);
    std::vector<std::vector<int>> adj(m);
    for (auto [i, j] : bonds) {
      stats.bond_len[pair_key(type_of[i], type_of[j])].add(
          (item.coords.row(i) - item.coords.row(j)).norm());
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
    for (int j = 0; j < m; ++j)
      for (std::size_t a = 0; a < adj[j].size(); ++a)
        for (std::size_t b = a + 1; b < adj[j].size(); ++b) {
          int i = std::min(adj[j][a], adj[j][b]);
          int k2 = std::max(adj[j][a], adj[j][b]);
          stats.bond_angle[triple_key(type_of[i], type_of[j], type_of[k2])].add(
              angle(item.coords.row(i), item.coords.row(j),
                    item.coords.row(k2)));
        }
  }
  stats.knn_mean = pooled.mean;
  stats.knn_samples = pooled.count;
  return stats;
}

double atom_stability(const MarkedPointSet& mol, const AtomTables& tables) {
  const int m = mol.size();
  check(m >= 1, ErrorCode::Domain, "empty molecule");
  Eigen::MatrixXd onehot = round_types(mol.types);
  BondList bonds = infer_bonds(mol.coords, onehot, tables);
  std::vector<int> degree(m, 0);
  for (auto [i, j] : bonds) {
    ++degree[i];
    ++degree[j];
  }
  int stable = 0;
  for (int i = 0; i < m; ++i)
    if (degree[i] == tables.info(rounded_type(onehot, i)).valency) ++stable;
  return static_cast<double>(stable) / static_cast<double>(m);
}

bool molecule_stable(const MarkedPointSet& mol, const AtomTables& tables) {
  return atom_stability(mol, tables) == 1.0;
}

}  // namespace bridgen::geometry
