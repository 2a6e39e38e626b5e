#pragma once

// Frequentist GWR: local weighted least squares and k-fold CV bandwidth
// selection.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "bgwsr/errors.hpp"
#include "bgwsr/random.hpp"
#include "bgwsr/spatial.hpp"

namespace bgwsr {

struct GwrConfig {
  std::vector<double> bandwidth_grid = default_grid();
  int folds = 5;
  KernelFamily kernel_family = KernelFamily::bisquare;

  /// {0.10, 0.15, ..., 3.00}
  static std::vector<double> default_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 58; ++i) grid.push_back(0.10 + 0.05 * i);
    return grid;
  }

  void validate(Index n) const {
    if (bandwidth_grid.empty()) throw std::invalid_argument("gwr: bandwidth grid is empty");
    for (std::size_t i = 0; i < bandwidth_grid.size(); ++i) {
      if (!(bandwidth_grid[i] > 0.0)) throw std::invalid_argument("gwr: bandwidth candidates must be positive");
      if (i > 0 && !(bandwidth_grid[i] > bandwidth_grid[i - 1]))
        throw std::invalid_argument("gwr: bandwidth grid must be strictly increasing");
    }
    if (folds < 2 || folds > n)
      throw std::invalid_argument("gwr: folds must lie in [2, n], got " + std::to_string(folds));
  }
};

/// argmin sum_j w_j (y_j - x_j' b)^2 over the rows with w_j > 0. Throws
/// SingularFit labelled `site_id` when those rows are rank deficient.
inline Eigen::VectorXd weighted_least_squares(const SpatialDataset& data, const Eigen::VectorXd& w,
                                              std::size_t site_id = 0, const std::string& context = "") {
  const Index p = data.p();
  std::vector<Index> rows;
  for (Index j = 0; j < data.n(); ++j)
    if (w(j) > 0.0) rows.push_back(j);
  const auto singular = [&] {
    return SingularFit("gwr: local design is rank deficient at site " + std::to_string(site_id) + " (" + context +
                           std::to_string(rows.size()) + " weighted rows)",
                       site_id);
  };
  if (static_cast<Index>(rows.size()) < p) throw singular();
  const Index m = static_cast<Index>(rows.size());
  Eigen::MatrixXd a(m, p);
  Eigen::VectorXd b(m);
  for (Index r = 0; r < m; ++r) {
    const double sw = std::sqrt(w(rows[static_cast<std::size_t>(r)]));
    a.row(r) = sw * data.X.row(rows[static_cast<std::size_t>(r)]);
    b(r) = sw * data.y(rows[static_cast<std::size_t>(r)]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < p) throw singular();
  return qr.solve(b);
}

/// Local coefficients at `site` with w_j = kernel(d(site, s_j)). Weights
/// enter once, as in the usual GWR normal equations X'WX b = X'Wy.
/// `site_id` only labels the error.
inline Eigen::VectorXd gwr_fit_at(const Location& site, const SpatialDataset& data, double bandwidth,
                                  KernelFamily family, std::size_t site_id = 0) {
  const KernelSpec spec{family, bandwidth};
  Eigen::VectorXd w(data.n());
  for (Index j = 0; j < data.n(); ++j) w(j) = kernel_weight(spec, distance(site, data.locations[static_cast<std::size_t>(j)]));
  return weighted_least_squares(data, w, site_id, "bandwidth " + std::to_string(bandwidth) + ", ");
}

/// Ordinary least squares over all rows.
inline Eigen::VectorXd ols_fit(const SpatialDataset& data) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.X);
  if (qr.rank() < data.p()) throw SingularFit("ols: design is rank deficient", 0);
  return qr.solve(data.y);
}

/// Coefficients at every observed site, one row per site.
inline Eigen::MatrixXd gwr_fit_observed(const SpatialDataset& data, double bandwidth, KernelFamily family) {
  Eigen::MatrixXd beta(data.n(), data.p());
  for (Index i = 0; i < data.n(); ++i)
    beta.row(i) = gwr_fit_at(data.locations[static_cast<std::size_t>(i)], data, bandwidth, family,
                             static_cast<std::size_t>(i))
                      .transpose();
  return beta;
}

/// Fold label per row from a seeded shuffle; row r of the shuffled order
/// goes to fold r mod k.
inline std::vector<int> assign_folds(Index n, int folds, RngStream& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<int> label(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < order.size(); ++r) label[static_cast<std::size_t>(order[r])] = static_cast<int>(r % folds);
  return label;
}

inline SpatialDataset subset(const SpatialDataset& data, const std::vector<Index>& rows) {
  SpatialDataset out;
  out.X.resize(static_cast<Index>(rows.size()), data.p());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.locations.push_back(data.locations[static_cast<std::size_t>(rows[r])]);
    out.X.row(static_cast<Index>(r)) = data.X.row(rows[r]);
    out.y(static_cast<Index>(r)) = data.y(rows[r]);
  }
  return out;
}

/// Mean over folds of the held-out MSE for one bandwidth; infinity when
/// any held-out site cannot be fitted.
inline double gwr_cv_error(const SpatialDataset& data, const std::vector<int>& fold_of, int folds, double bandwidth,
                           KernelFamily family) {
  double total = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < data.n(); ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    const SpatialDataset training = subset(data, train);
    double sse = 0.0;
    for (Index i : test) {
      try {
        const Eigen::VectorXd b =
            gwr_fit_at(data.locations[static_cast<std::size_t>(i)], training, bandwidth, family, static_cast<std::size_t>(i));
        const double e = data.y(i) - data.X.row(i).dot(b);
        sse += e * e;
      } catch (const SingularFit&) {
        return std::numeric_limits<double>::infinity();
      }
    }
    total += sse / static_cast<double>(test.size());
  }
  return total / folds;
}

struct GwrSelection {
  double bandwidth = 0.0;
  std::vector<double> cv_errors;  // aligned with the sorted grid
};

/// Grid search on k-fold CV error. The grid is searched in increasing
/// order whatever order it is given in; ties go to the smaller bandwidth.
/// `cv_errors` follows the sorted grid.
inline GwrSelection gwr_select_bandwidth(const SpatialDataset& data, const GwrConfig& config, RngStream& rng) {
  GwrConfig sorted = config;
  std::sort(sorted.bandwidth_grid.begin(), sorted.bandwidth_grid.end());
  sorted.validate(data.n());
  const auto fold_of = assign_folds(data.n(), sorted.folds, rng);
  GwrSelection out;
  double best = std::numeric_limits<double>::infinity();
  for (double h : sorted.bandwidth_grid) {
    const double e = gwr_cv_error(data, fold_of, sorted.folds, h, sorted.kernel_family);
    out.cv_errors.push_back(e);
    if (e < best) {
      best = e;
      out.bandwidth = h;
    }
  }
  if (!std::isfinite(best)) throw SelectionFailure("gwr: every candidate bandwidth failed cross validation");
  return out;
}

}  // namespace bgwsr
