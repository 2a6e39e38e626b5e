#pragma once

// Synthetic data for the five benchmark scenarios on [-1, 1] x [0, 2].

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bgwsr/errors.hpp"
#include "bgwsr/random.hpp"
#include "bgwsr/spatial.hpp"

namespace bgwsr {

enum class CoefficientStructure { a1_smooth, a2_lr_clusters, a3_ud_clusters };
enum class SamplingPattern { b1_uniform, b2_skewed };

inline std::string_view to_string(CoefficientStructure c) {
  switch (c) {
    case CoefficientStructure::a1_smooth: return "a1_smooth";
    case CoefficientStructure::a2_lr_clusters: return "a2_lr_clusters";
    case CoefficientStructure::a3_ud_clusters: return "a3_ud_clusters";
  }
  return "unknown";
}

inline std::string_view to_string(SamplingPattern b) {
  return b == SamplingPattern::b1_uniform ? "b1_uniform" : "b2_skewed";
}

struct ScenarioSpec {
  CoefficientStructure coefficient_structure = CoefficientStructure::a1_smooth;
  SamplingPattern sampling_pattern = SamplingPattern::b1_uniform;
  Index n_pool = 1000;
  Index n_obs = 100;
  Index n_pred = 50;
  Eigen::VectorXd beta_star = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd beta_cluster1 = Eigen::VectorXd::Constant(3, 1.0);
  Eigen::VectorXd beta_cluster2 = Eigen::VectorXd::Constant(3, 2.0);
  double sigma_sq = 1.0;
  double h_gen = 0.5;
  // left : right observation counts under b2
  double skew_left = 1.0;
  double skew_right = 4.0;
  // a3 split line on s2
  double a3_threshold = 1.0;
  std::uint64_t seed = 1;

  Index p() const {
    return coefficient_structure == CoefficientStructure::a1_smooth ? beta_star.size() : beta_cluster1.size();
  }

  void validate() const {
    if (n_obs < 2 || n_pred < 1 || n_obs + n_pred > n_pool)
      throw std::invalid_argument("scenario: need n_obs >= 2, n_pred >= 1 and n_obs + n_pred <= n_pool");
    if (!(skew_left > 0.0) || !(skew_right > 0.0)) throw std::invalid_argument("scenario: skew ratio must be positive");
    if (!(sigma_sq >= 0.0)) throw std::invalid_argument("scenario: sigma_sq must be non-negative");
    if (!(h_gen > 0.0)) throw std::invalid_argument("scenario: h_gen must be positive");
    if (beta_cluster1.size() != beta_cluster2.size()) throw std::invalid_argument("scenario: cluster vectors differ in length");
    if (p() < 1) throw std::invalid_argument("scenario: need at least one covariate");
  }
};

/// Scenarios 1-5: (a1,b1), (a1,b2), (a2,b1), (a2,b2), (a3,b1).
inline ScenarioSpec scenario_spec(int id, std::uint64_t seed = 1) {
  ScenarioSpec s;
  s.seed = seed;
  switch (id) {
    case 1: s.coefficient_structure = CoefficientStructure::a1_smooth; s.sampling_pattern = SamplingPattern::b1_uniform; break;
    case 2: s.coefficient_structure = CoefficientStructure::a1_smooth; s.sampling_pattern = SamplingPattern::b2_skewed; break;
    case 3: s.coefficient_structure = CoefficientStructure::a2_lr_clusters; s.sampling_pattern = SamplingPattern::b1_uniform; break;
    case 4: s.coefficient_structure = CoefficientStructure::a2_lr_clusters; s.sampling_pattern = SamplingPattern::b2_skewed; break;
    case 5: s.coefficient_structure = CoefficientStructure::a3_ud_clusters; s.sampling_pattern = SamplingPattern::b1_uniform; break;
    default: throw std::invalid_argument("scenario id must be 1..5, got " + std::to_string(id));
  }
  return s;
}

struct SyntheticDataset {
  SpatialDataset observed;
  std::vector<Location> prediction_sites;
  Eigen::MatrixXd prediction_X;
  Eigen::VectorXd prediction_y;
  Eigen::MatrixXd true_beta_observed;    // n_obs x p
  Eigen::MatrixXd true_beta_prediction;  // n_pred x p
  std::vector<Index> observed_index;     // into the pool
  std::vector<Index> prediction_index;
};

inline std::vector<Location> generate_locations(const ScenarioSpec& spec, RngStream& rng) {
  std::vector<Location> sites(static_cast<std::size_t>(spec.n_pool));
  for (auto& s : sites) {
    s.s1 = rng.uniform(-1.0, 1.0);
    s.s2 = rng.uniform(0.0, 2.0);
  }
  return sites;
}

/// n_pool x p true coefficients. a1: beta_k ~ MN(beta*_k 1, sigma^2 H) with
/// H_ij = exp(-d_ij^2 / 2 h^2) (unit diagonal); a2 / a3: two clusters split
/// at s1 <= 0 / s2 <= threshold.
inline Eigen::MatrixXd generate_coefficients(const ScenarioSpec& spec, const std::vector<Location>& sites,
                                             RngStream& rng) {
  const Index n = static_cast<Index>(sites.size());
  const Index p = spec.p();
  Eigen::MatrixXd beta(n, p);
  switch (spec.coefficient_structure) {
    case CoefficientStructure::a1_smooth: {
      const Eigen::MatrixXd d = distance_matrix(sites);
      Eigen::MatrixXd cov = (-(d.array().square()) / (2.0 * spec.h_gen * spec.h_gen)).exp().matrix();
      cov *= spec.sigma_sq > 0.0 ? spec.sigma_sq : 1.0;
      for (Index k = 0; k < p; ++k) {
        const Eigen::VectorXd mean = Eigen::VectorXd::Constant(n, spec.beta_star(k));
        beta.col(k) = spec.sigma_sq > 0.0 ? sample_mvn_from_covariance(mean, cov, rng) : mean;
      }
      break;
    }
    case CoefficientStructure::a2_lr_clusters:
    case CoefficientStructure::a3_ud_clusters:
      for (Index i = 0; i < n; ++i) {
        const auto& s = sites[static_cast<std::size_t>(i)];
        const bool first = spec.coefficient_structure == CoefficientStructure::a2_lr_clusters
                               ? s.s1 <= 0.0
                               : s.s2 <= spec.a3_threshold;
        beta.row(i) = (first ? spec.beta_cluster1 : spec.beta_cluster2).transpose();
      }
      break;
  }
  return beta;
}

/// y = sum_k x_k beta_k + eps, eps ~ N(0, sigma^2).
inline Eigen::VectorXd responses_from(const Eigen::MatrixXd& X, const Eigen::MatrixXd& beta, double sigma_sq,
                                      RngStream& rng) {
  if (X.rows() != beta.rows() || X.cols() != beta.cols()) throw std::invalid_argument("responses: shape mismatch");
  Eigen::VectorXd y = X.cwiseProduct(beta).rowwise().sum();
  const double sd = std::sqrt(sigma_sq);
  if (sd > 0.0)
    for (Index i = 0; i < y.size(); ++i) y(i) += sd * rng.normal();
  return y;
}

struct GeneratedResponses {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

/// x ~ N(0, 1) i.i.d., y = sum_k x_k beta_k + eps with eps ~ N(0, sigma^2).
inline GeneratedResponses generate_responses(const Eigen::MatrixXd& beta, double sigma_sq, RngStream& rng) {
  GeneratedResponses out;
  out.X.resize(beta.rows(), beta.cols());
  for (Index i = 0; i < beta.rows(); ++i)
    for (Index k = 0; k < beta.cols(); ++k) out.X(i, k) = rng.normal();
  out.y = responses_from(out.X, beta, sigma_sq, rng);
  return out;
}

struct SplitIndices {
  std::vector<Index> observed;
  std::vector<Index> prediction;
};

namespace detail {

inline std::vector<Index> draw_without_replacement(std::vector<Index> pool, Index count, RngStream& rng) {
  // partial Fisher-Yates
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng.engine())]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

}  // namespace detail

/// Prediction sites first, uniformly from the pool; then observed sites from
/// the remainder, uniformly (b1) or with floor(n_obs * left / (left + right))
/// from s1 <= 0 and the rest from s1 > 0 (b2).
inline SplitIndices split_observed_prediction(const ScenarioSpec& spec, const std::vector<Location>& sites,
                                              RngStream& rng) {
  spec.validate();
  std::vector<Index> all(sites.size());
  std::iota(all.begin(), all.end(), Index{0});
  SplitIndices out;
  out.prediction = detail::draw_without_replacement(all, spec.n_pred, rng);
  std::vector<bool> taken(sites.size(), false);
  for (Index i : out.prediction) taken[static_cast<std::size_t>(i)] = true;
  std::vector<Index> rest, left, right;
  for (Index i : all) {
    if (taken[static_cast<std::size_t>(i)]) continue;
    rest.push_back(i);
    (sites[static_cast<std::size_t>(i)].s1 <= 0.0 ? left : right).push_back(i);
  }
  if (spec.sampling_pattern == SamplingPattern::b1_uniform) {
    out.observed = detail::draw_without_replacement(rest, spec.n_obs, rng);
  } else {
    const auto n_left = static_cast<Index>(
        std::floor(static_cast<double>(spec.n_obs) * spec.skew_left / (spec.skew_left + spec.skew_right)));
    const Index n_right = spec.n_obs - n_left;
    if (static_cast<Index>(left.size()) < n_left || static_cast<Index>(right.size()) < n_right)
      throw GenerationFailure("scenario: need " + std::to_string(n_left) + " left and " + std::to_string(n_right) +
                              " right sites, pool has " + std::to_string(left.size()) + " and " +
                              std::to_string(right.size()));
    out.observed = detail::draw_without_replacement(left, n_left, rng);
    const auto r = detail::draw_without_replacement(right, n_right, rng);
    out.observed.insert(out.observed.end(), r.begin(), r.end());
  }
  return out;
}

inline SyntheticDataset generate_scenario(const ScenarioSpec& spec, RngStream& rng) {
  spec.validate();
  const auto sites = generate_locations(spec, rng);
  const Eigen::MatrixXd beta = generate_coefficients(spec, sites, rng);
  const auto resp = generate_responses(beta, spec.sigma_sq, rng);
  const auto split = split_observed_prediction(spec, sites, rng);

  SyntheticDataset out;
  out.observed_index = split.observed;
  out.prediction_index = split.prediction;
  const Index p = spec.p();
  const auto take = [&](const std::vector<Index>& idx, std::vector<Location>& locs, Eigen::MatrixXd& X,
                        Eigen::VectorXd& y, Eigen::MatrixXd& b) {
    const Index m = static_cast<Index>(idx.size());
    X.resize(m, p);
    y.resize(m);
    b.resize(m, p);
    for (Index r = 0; r < m; ++r) {
      const Index i = idx[static_cast<std::size_t>(r)];
      locs.push_back(sites[static_cast<std::size_t>(i)]);
      X.row(r) = resp.X.row(i);
      y(r) = resp.y(i);
      b.row(r) = beta.row(i);
    }
  };
  take(split.observed, out.observed.locations, out.observed.X, out.observed.y, out.true_beta_observed);
  take(split.prediction, out.prediction_sites, out.prediction_X, out.prediction_y, out.true_beta_prediction);
  return out;
}

}  // namespace bgwsr
