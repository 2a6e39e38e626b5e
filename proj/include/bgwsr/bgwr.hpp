#pragma once

// Bayesian GWR baseline: a p-vector of coefficients per site fitted to all
// rows under that site's weights, a diffuse normal prior, and a single
// bandwidth sampled by MH. No fusion between sites.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "bgwsr/errors.hpp"
#include "bgwsr/gwr.hpp"
#include "bgwsr/random.hpp"
#include "bgwsr/sampler.hpp"
#include "bgwsr/spatial.hpp"

namespace bgwsr {

struct BgwrConfig {
  double r_bgwr = 0.1;
  double q_bgwr = 0.1;
  // h ~ U(0, h_upper)
  double h_upper = 3.0;
  // (0.1 h_upper)^2 when unset
  std::optional<double> sigma_h_sq;
  // prior precision of each coefficient, relative to sigma^2
  double epsilon = 1e-6;
  int t_max = 3000;
  int burn_in = 1000;
  int thin = 2;
  std::uint64_t seed = 1;
  KernelFamily kernel_family = KernelFamily::bisquare;
  std::optional<double> initial_bandwidth;
  bool sample_bandwidth = true;

  double proposal_variance() const {
    return sigma_h_sq ? *sigma_h_sq : (0.1 * h_upper) * (0.1 * h_upper);
  }
  double start_bandwidth() const { return initial_bandwidth ? *initial_bandwidth : h_upper / 2.0; }
  int retained_count() const { return (t_max - burn_in) / thin; }

  void validate() const {
    for (double v : {r_bgwr, q_bgwr, h_upper, epsilon})
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("bgwr config: parameters must be positive");
    if (!(proposal_variance() > 0.0)) throw std::invalid_argument("bgwr config: sigma_h_sq must be positive");
    if (t_max < 1 || burn_in < 0 || burn_in >= t_max || thin < 1)
      throw std::invalid_argument("bgwr config: need t_max >= 1, 0 <= burn_in < t_max, thin >= 1");
    const double h0 = start_bandwidth();
    if (!(h0 > 0.0) || h0 > h_upper) throw std::invalid_argument("bgwr config: initial bandwidth outside (0, h_upper]");
  }
};

/// beta(s_i) ~ MN(A^{-1} b, sigma^2 A^{-1}), A = X' W(s_i)^2 X + eps I,
/// b = X' W(s_i)^2 y: the conjugate update under beta(s_i) ~ MN(0, sigma^2 / eps I).
inline PrecisionMvnProblem bgwr_site_conditional(const SpatialDataset& data, const Eigen::VectorXd& weight_row,
                                                 double sigma_sq, double epsilon) {
  const Eigen::VectorXd w2 = weight_row.cwiseProduct(weight_row);
  PrecisionMvnProblem problem;
  problem.precision = data.X.transpose() * w2.asDiagonal() * data.X;
  problem.precision.diagonal().array() += epsilon;
  problem.linear_term = data.X.transpose() * w2.cwiseProduct(data.y);
  problem.scale = sigma_sq;
  return problem;
}

/// sum_i ||W_h(s_i) (y - X beta(s_i))||^2 with beta(s_i) the i-th row of `beta`.
inline double bgwr_energy(const Eigen::MatrixXd& distances, const SpatialDataset& data, const Eigen::MatrixXd& beta,
                          double h, KernelFamily family) {
  double acc = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const Eigen::VectorXd r = data.y - data.X * beta.row(i).transpose();
    acc += weighted_energy(distances, i, h, family, r);
  }
  return acc;
}

/// Shape and rate of the sigma^2 update: every weighted row of every site
/// contributes one Gaussian factor, plus the n p prior factors.
inline ShapeRate bgwr_sigma_sq_posterior(const Eigen::MatrixXd& distances, const SpatialDataset& data,
                                         const Eigen::MatrixXd& beta, double h, const BgwrConfig& config) {
  const KernelSpec spec{config.kernel_family, h};
  double rows = 0.0;
  for (Index i = 0; i < data.n(); ++i)
    for (Index j = 0; j < data.n(); ++j)
      if (kernel_weight(spec, distances(i, j)) > 0.0) rows += 1.0;
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(data.p());
  const double energy = bgwr_energy(distances, data, beta, h, config.kernel_family);
  return {config.r_bgwr + (rows + n * p) / 2.0,
          config.q_bgwr + (energy + config.epsilon * beta.squaredNorm()) / 2.0};
}

inline PosteriorDraws bgwr_run_chain(const SpatialDataset& data, const BgwrConfig& config, RngStream& rng) {
  validate(data);
  config.validate();
  const Index n = data.n();
  const Index p = data.p();
  const Eigen::MatrixXd distances = distance_matrix(data.locations);
  double h = config.start_bandwidth();

  Eigen::MatrixXd beta(n, p);
  std::optional<Eigen::VectorXd> global;
  for (Index i = 0; i < n; ++i) {
    try {
      beta.row(i) = gwr_fit_at(data.locations[static_cast<std::size_t>(i)], data, h, config.kernel_family,
                               static_cast<std::size_t>(i))
                        .transpose();
    } catch (const SingularFit&) {
      if (!global) {
        try {
          global = ols_fit(data);
        } catch (const SingularFit&) {
          global = Eigen::VectorXd::Zero(p);
        }
      }
      beta.row(i) = global->transpose();
    }
  }
  double sigma_sq = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double e = data.y(i) - data.X.row(i).dot(beta.row(i));
    sigma_sq += e * e;
  }
  sigma_sq /= static_cast<double>(n);
  if (!(sigma_sq > 1e-12) || !std::isfinite(sigma_sq)) sigma_sq = 1.0;

  PosteriorDraws out;
  out.kernel_family = config.kernel_family;
  out.draws.reserve(static_cast<std::size_t>(config.retained_count()));
  int accepted = 0;
  int attempts = 0;
  Eigen::MatrixXd weights(n, n);
  const auto fill_weights = [&] {
    const KernelSpec spec{config.kernel_family, h};
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) weights(i, j) = kernel_weight(spec, distances(i, j));
  };
  fill_weights();

  for (int t = 1; t <= config.t_max; ++t) {
    for (Index i = 0; i < n; ++i) {
      try {
        beta.row(i) =
            sample_mvn_from_precision(bgwr_site_conditional(data, weights.row(i).transpose(), sigma_sq, config.epsilon),
                                      rng)
                .transpose();
      } catch (const NumericalFailure& e) {
        throw NumericalFailure("iteration " + std::to_string(t) + ", bgwr coefficient draw at site " +
                                   std::to_string(i) + ": " + e.what(),
                               e.pivot());
      }
    }
    const auto post = bgwr_sigma_sq_posterior(distances, data, beta, h, config);
    sigma_sq = sample_inverse_gamma(post.shape, post.rate, rng);

    if (config.sample_bandwidth) {
      ++attempts;
      const auto energy = [&](double hh) { return bgwr_energy(distances, data, beta, hh, config.kernel_family); };
      if (mh_bandwidth_shared(energy, sigma_sq, config.h_upper, config.proposal_variance(), h, rng).accepted) {
        ++accepted;
        fill_weights();
      }
    }

    if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
      Draw d;
      d.iter = t;
      d.sigma_sq = sigma_sq;
      d.h = Eigen::VectorXd::Constant(n, h);
      d.beta = beta;
      out.draws.push_back(std::move(d));
    }
  }
  out.acceptance_rates = Eigen::VectorXd::Constant(n, attempts > 0 ? double(accepted) / attempts : 0.0);
  return out;
}

}  // namespace bgwsr
