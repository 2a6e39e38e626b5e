#pragma once

// Coefficient and response prediction at unobserved sites from posterior
// draws.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bgwsr/errors.hpp"
#include "bgwsr/sampler.hpp"
#include "bgwsr/spatial.hpp"

namespace bgwsr {

/// w_j(s*) = kernel(d(s*, s_j) | h(s_j)): each observed site contributes
/// with its own bandwidth.
inline Eigen::VectorXd prediction_weights(const Location& site, std::span<const Location> observed,
                                          const Eigen::VectorXd& h, KernelFamily family) {
  const Index n = static_cast<Index>(observed.size());
  if (h.size() != n) throw std::invalid_argument("prediction_weights: one bandwidth per observed site required");
  Eigen::VectorXd w(n);
  for (Index j = 0; j < n; ++j) w(j) = kernel_weight({family, h(j)}, distance(site, observed[static_cast<std::size_t>(j)]));
  return w;
}

/// sum_j w_j beta(s_j), optionally divided by sum_j w_j. `beta` is n x p.
inline Eigen::VectorXd predict_coefficients(const Eigen::VectorXd& weights, const Eigen::MatrixXd& beta,
                                            bool normalize = false, std::size_t site_id = 0) {
  Eigen::VectorXd out = beta.transpose() * weights;
  if (normalize) {
    const double total = weights.sum();
    if (!(total > 0.0))
      throw IsolatedSite("prediction site " + std::to_string(site_id) + " has no observed site within range", site_id);
    out /= total;
  }
  return out;
}

inline double predict_response(const Eigen::VectorXd& x, const Eigen::VectorXd& beta_hat) {
  if (x.size() != beta_hat.size()) throw std::invalid_argument("predict_response: length mismatch");
  return x.dot(beta_hat);
}

/// Linear interpolation between order statistics at position prob * (m - 1).
inline double quantile(std::vector<double> values, double prob) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
};

inline Summary summarize(const std::vector<double>& values, double level = 0.95) {
  Summary s;
  if (values.empty()) return s;
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / static_cast<double>(values.size());
  s.median = quantile(values, 0.5);
  s.lo = quantile(values, (1.0 - level) / 2.0);
  s.hi = quantile(values, 1.0 - (1.0 - level) / 2.0);
  return s;
}

struct PredictionRequest {
  std::vector<Location> sites;
  Eigen::MatrixXd X_star;  // n* x p
  bool normalize_weights = false;
};

struct SitePrediction {
  Eigen::MatrixXd beta_draws;  // draws x p
  Eigen::VectorXd y_draws;     // draws
  std::vector<Summary> beta;   // per covariate
  Summary y;
  // false when the site had zero total weight under every draw; with
  // normalization no summary is then available
  bool available = true;
};

struct PredictionResult {
  std::vector<SitePrediction> sites;

  std::vector<std::size_t> isolated() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (!sites[i].available) out.push_back(i);
    return out;
  }
};

/// Per draw and site: weights from that draw's bandwidths, then the weighted
/// coefficient sum and the response. Under normalization, draws that leave
/// a site isolated are dropped for that site.
inline PredictionResult predict_all(const PosteriorDraws& draws, const PredictionRequest& request,
                                    const SpatialDataset& data) {
  if (draws.draws.empty()) throw std::invalid_argument("predict_all: no posterior draws");
  const Index p = data.p();
  if (request.sites.empty()) throw std::invalid_argument("predict_all: no prediction sites");
  if (request.X_star.rows() != static_cast<Index>(request.sites.size()) || request.X_star.cols() != p)
    throw std::invalid_argument("predict_all: X_star must be n* x p");
  if (!request.X_star.allFinite()) throw std::invalid_argument("predict_all: non-finite covariates");
  for (const auto& s : request.sites)
    if (!std::isfinite(s.s1) || !std::isfinite(s.s2)) throw std::invalid_argument("predict_all: non-finite site");

  PredictionResult result;
  result.sites.resize(request.sites.size());
  const Index m = static_cast<Index>(draws.draws.size());
  for (std::size_t si = 0; si < request.sites.size(); ++si) {
    auto& out = result.sites[si];
    const Eigen::VectorXd x = request.X_star.row(static_cast<Index>(si)).transpose();
    std::vector<Eigen::VectorXd> betas;
    std::vector<double> ys;
    Index isolated_draws = 0;
    for (Index t = 0; t < m; ++t) {
      const auto& d = draws.draws[static_cast<std::size_t>(t)];
      const Eigen::VectorXd w = prediction_weights(request.sites[si], data.locations, d.h, draws.kernel_family);
      if (!(w.sum() > 0.0)) {
        ++isolated_draws;
        if (request.normalize_weights) continue;
      }
      const Eigen::VectorXd b = predict_coefficients(w, d.beta, request.normalize_weights, si);
      betas.push_back(b);
      ys.push_back(predict_response(x, b));
    }
    out.available = isolated_draws < m;
    out.beta_draws.resize(static_cast<Index>(betas.size()), p);
    out.y_draws.resize(static_cast<Index>(ys.size()));
    for (std::size_t t = 0; t < betas.size(); ++t) {
      out.beta_draws.row(static_cast<Index>(t)) = betas[t].transpose();
      out.y_draws(static_cast<Index>(t)) = ys[t];
    }
    out.y = summarize(ys);
    for (Index k = 0; k < p; ++k) {
      std::vector<double> col(betas.size());
      for (std::size_t t = 0; t < betas.size(); ++t) col[t] = betas[t](k);
      out.beta.push_back(summarize(col));
    }
  }
  return result;
}

}  // namespace bgwsr
