#pragma once

// Locations, kernels and adjacency shared by every model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bgwsr/errors.hpp"

namespace bgwsr {

using Index = Eigen::Index;

struct Location {
  double s1 = 0.0;
  double s2 = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance(const Location& a, const Location& b) {
  return std::hypot(a.s1 - b.s1, a.s2 - b.s2);
}

enum class KernelFamily { bisquare, boxcar, gaussian };

inline std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::bisquare: return "bisquare";
    case KernelFamily::boxcar: return "boxcar";
    case KernelFamily::gaussian: return "gaussian";
  }
  return "unknown";
}

inline KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "bisquare") return KernelFamily::bisquare;
  if (name == "boxcar") return KernelFamily::boxcar;
  if (name == "gaussian") return KernelFamily::gaussian;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

inline bool is_compact(KernelFamily family) { return family != KernelFamily::gaussian; }

struct KernelSpec {
  KernelFamily family = KernelFamily::bisquare;
  double bandwidth = 1.0;
};

/// Weight in [0, 1] for two sites at distance `d`. Compact kernels vanish
/// for d >= bandwidth.
inline double kernel_weight(const KernelSpec& spec, double d) {
  if (!(d >= 0.0)) throw std::invalid_argument("kernel_weight: negative distance");
  if (!(spec.bandwidth > 0.0)) throw std::invalid_argument("kernel_weight: bandwidth must be positive");
  const double h = spec.bandwidth;
  switch (spec.family) {
    case KernelFamily::bisquare: {
      if (d >= h) return 0.0;
      const double u = d / h;
      return 1.0 - u * u;
    }
    case KernelFamily::boxcar:
      return d < h ? 1.0 : 0.0;
    case KernelFamily::gaussian:
      return std::exp(-(d * d) / (2.0 * h * h));
  }
  return 0.0;
}

/// Observed data: n sites, an n x p covariate matrix and n responses. An
/// intercept is an explicit column of ones.
struct SpatialDataset {
  std::vector<Location> locations;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Index n() const { return static_cast<Index>(locations.size()); }
  Index p() const { return X.cols(); }
};

inline void validate(const SpatialDataset& data) {
  const Index n = data.n();
  if (n < 2) throw DataError("dataset needs at least 2 sites, got " + std::to_string(n));
  if (data.X.rows() != n || data.y.size() != n)
    throw DataError("dataset shape mismatch: " + std::to_string(n) + " locations, X is " +
                    std::to_string(data.X.rows()) + "x" + std::to_string(data.X.cols()) +
                    ", y has " + std::to_string(data.y.size()));
  if (data.p() < 1) throw DataError("dataset needs at least one covariate");
  for (Index i = 0; i < n; ++i) {
    const auto& s = data.locations[static_cast<std::size_t>(i)];
    if (!std::isfinite(s.s1) || !std::isfinite(s.s2))
      throw DataError("non-finite coordinate at row " + std::to_string(i + 1));
  }
  if (!data.X.allFinite()) throw DataError("non-finite covariate value");
  if (!data.y.allFinite()) throw DataError("non-finite response value");

  std::map<std::pair<double, double>, Index> seen;
  for (Index i = 0; i < n; ++i) {
    const auto& s = data.locations[static_cast<std::size_t>(i)];
    auto [it, inserted] = seen.emplace(std::pair{s.s1, s.s2}, i);
    if (!inserted)
      throw DataError("duplicate coordinates at rows " + std::to_string(it->second + 1) + " and " +
                      std::to_string(i + 1));
  }
}

inline Eigen::MatrixXd distance_matrix(std::span<const Location> sites) {
  const Index n = static_cast<Index>(sites.size());
  Eigen::MatrixXd d(n, n);
  for (Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = distance(sites[static_cast<std::size_t>(i)], sites[static_cast<std::size_t>(j)]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

using SitePair = std::pair<Index, Index>;

/// Adjacency derived from per-location bandwidths.
///
/// `weights(i, j)` is w_j(s_i), the diagonal of W(s_i) stored row-wise and
/// computed with the bandwidth of site i. The pair set is the symmetrized
/// union: (i, j), i < j, is adjacent when either directional weight is
/// positive.
struct AdjacencyStructure {
  Eigen::MatrixXd weights;
  std::vector<SitePair> pairs;
  std::vector<std::vector<Index>> neighbor_sets;
  std::vector<Index> neighbor_counts;

  Index n() const { return weights.rows(); }

  /// Entry j is sum_i w_j(s_i)^2, the diagonal of sum_i W(s_i)^2.
  Eigen::VectorXd squared_weight_sums() const { return weights.array().square().colwise().sum().transpose(); }
};

inline void refresh_weight_row(AdjacencyStructure& adj, const Eigen::MatrixXd& distances, Index row,
                               double bandwidth, KernelFamily family) {
  const KernelSpec spec{family, bandwidth};
  for (Index j = 0; j < distances.cols(); ++j) adj.weights(row, j) = kernel_weight(spec, distances(row, j));
}

inline void rebuild_pairs(AdjacencyStructure& adj) {
  const Index n = adj.n();
  adj.pairs.clear();
  adj.neighbor_sets.assign(static_cast<std::size_t>(n), {});
  adj.neighbor_counts.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (adj.weights(i, j) > 0.0 || adj.weights(j, i) > 0.0) {
        adj.pairs.emplace_back(i, j);
        adj.neighbor_sets[static_cast<std::size_t>(i)].push_back(j);
        adj.neighbor_sets[static_cast<std::size_t>(j)].push_back(i);
      }
    }
  }
  for (Index i = 0; i < n; ++i)
    adj.neighbor_counts[static_cast<std::size_t>(i)] =
        static_cast<Index>(adj.neighbor_sets[static_cast<std::size_t>(i)].size());
}

inline AdjacencyStructure build_adjacency(const Eigen::MatrixXd& distances, const Eigen::VectorXd& bandwidths,
                                          KernelFamily family) {
  const Index n = distances.rows();
  if (distances.cols() != n || bandwidths.size() != n)
    throw std::invalid_argument("build_adjacency: bandwidth vector length must match site count");
  if ((bandwidths.array() <= 0.0).any() || !bandwidths.allFinite())
    throw std::invalid_argument("build_adjacency: bandwidths must be positive");
  AdjacencyStructure adj;
  adj.weights.resize(n, n);
  for (Index i = 0; i < n; ++i) refresh_weight_row(adj, distances, i, bandwidths(i), family);
  rebuild_pairs(adj);
  return adj;
}

inline AdjacencyStructure build_adjacency(const SpatialDataset& data, const Eigen::VectorXd& bandwidths,
                                          KernelFamily family) {
  return build_adjacency(distance_matrix(data.locations), bandwidths, family);
}

}  // namespace bgwsr
