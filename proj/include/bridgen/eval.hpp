#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgen/geometry.hpp"
#include "bridgen/model.hpp"

namespace bridgen::eval {

struct SampleOptions {
  int steps = 100;
  std::uint64_t seed = 0;
  bool keep_frames = false;  // retain per-step coordinates for visualization
};

struct SampleBatch {
  std::vector<geometry::MarkedPointSet> items;
  std::vector<std::vector<geometry::Coords>> frames;  // per item, per grid point
  int steps = 0;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_fingerprint = 0;
};

// Integrates the model SDE from mu_0 = N(0, beta_T I) over a uniform grid;
// types are rounded at the end for typed models. Reproducible from
// (checkpoint, steps, seed).
SampleBatch sample(const model::DriftModel& drift_model, int n_items,
                   int points_per_item, const SampleOptions& opts,
                   std::uint64_t checkpoint_fingerprint = 0);

enum class CloudMetric { Chamfer, Emd };

// Mean over a of squared nearest distance to b, plus the symmetric term.
double chamfer(const geometry::Coords& a, const geometry::Coords& b);

// Exact minimum-cost perfect matching on Euclidean costs; mean matched
// distance. Unequal clouds are deterministically subsampled to the smaller
// size (quasi-uniform index striding) before matching.
double emd(const geometry::Coords& a, const geometry::Coords& b);

double cloud_distance(const geometry::Coords& a, const geometry::Coords& b,
                      CloudMetric metric);

// MMD: mean over reference items of the minimum distance to any generated
// item. COV: fraction of reference items that are the nearest reference
// neighbor of at least one generated item (ties toward the lower index).
std::pair<double, double> mmd_cov(const std::vector<geometry::Coords>& generated,
                                  const std::vector<geometry::Coords>& reference,
                                  CloudMetric metric);

// Mean and population variance of knn-dist_i over the cloud's points.
std::pair<double, double> uniformity_stats(const geometry::Coords& cloud,
                                           int K = 4);

// Distinct canonical fingerprints / n. The fingerprint is the sorted multiset
// of (type, degree, sorted bonded-neighbor types) per atom; a bond-topology
// proxy, not a chemical validity check.
double uniqueness(const std::vector<geometry::MarkedPointSet>& mols,
                  const geometry::AtomTables& tables);
std::string molecule_fingerprint(const geometry::MarkedPointSet& mol,
                                 const geometry::AtomTables& tables);

struct MetricReport {
  double mmd_cd = 0.0, mmd_emd = 0.0;
  double cov_cd = 0.0, cov_emd = 0.0;
  bool has_uniformity = false;
  double knn_dist_mean = 0.0;  // mean over generated clouds of per-cloud mean
  double knn_dist_var = 0.0;   // mean over generated clouds of per-cloud var
  bool has_stability = false;
  double atom_stability = 0.0;
  double mol_stability = 0.0;
  double uniqueness_fraction = 0.0;
  int n_generated = 0, n_reference = 0;
  int knn_k = 4;
};

MetricReport evaluate(const std::vector<geometry::MarkedPointSet>& generated,
                      const std::vector<geometry::MarkedPointSet>& reference,
                      const geometry::AtomTables* tables, int knn_k = 4);

std::string to_json(const MetricReport& report);
std::string to_table(const MetricReport& report);

}  // namespace bridgen::eval
