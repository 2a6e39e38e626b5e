#pragma once

// BGWSR and BGWSR-AE: Gibbs sampling of the fused-lasso coefficient model
// with Metropolis-Hastings updates of the adjacency bandwidth.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bgwsr/errors.hpp"
#include "bgwsr/gwr.hpp"
#include "bgwsr/random.hpp"
#include "bgwsr/spatial.hpp"

namespace bgwsr {

inline constexpr double kCoefficientFloor = 1e-10;
inline constexpr double kInversePriorVarianceMin = 1e-12;
inline constexpr double kInversePriorVarianceMax = 1e12;

struct FitConfig {
  // sigma^2 ~ IGamma(r, q); lambda_{k,1}^2 ~ Gamma(r1, q1); lambda_{k,2}^2 ~ Gamma(r2, q2)
  double r = 0.1;
  double q = 0.1;
  double r1 = 0.1;
  double q1 = 0.1;
  double r2 = 0.1;
  double q2 = 0.1;
  // bandwidth prior U(0, a)
  double a = 3.0;
  // random-walk proposal variance; (0.1 a)^2 when unset
  std::optional<double> sigma_h_sq;
  int t_max = 3000;
  int burn_in = 1000;
  int thin = 2;
  std::uint64_t seed = 1;
  // per-location h(s_i) (BGWSR-AE) versus one shared h (BGWSR)
  bool adaptive_bandwidth = true;
  KernelFamily kernel_family = KernelFamily::bisquare;
  // h^(0); a / 2 when unset
  std::optional<double> initial_bandwidth;
  // false freezes h at its initial value
  bool sample_bandwidth = true;

  double proposal_variance() const { return sigma_h_sq ? *sigma_h_sq : (0.1 * a) * (0.1 * a); }
  double start_bandwidth() const { return initial_bandwidth ? *initial_bandwidth : a / 2.0; }

  int retained_count() const { return (t_max - burn_in) / thin; }

  void validate() const {
    for (double v : {r, q, r1, q1, r2, q2, a})
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("fit config: hyperparameters must be positive");
    if (!(proposal_variance() > 0.0)) throw std::invalid_argument("fit config: sigma_h_sq must be positive");
    if (t_max < 1) throw std::invalid_argument("fit config: t_max must be positive");
    if (burn_in < 0 || burn_in >= t_max) throw std::invalid_argument("fit config: need 0 <= burn_in < t_max");
    if (thin < 1) throw std::invalid_argument("fit config: thin must be >= 1");
    const double h0 = start_bandwidth();
    if (!(h0 > 0.0) || h0 > a) throw std::invalid_argument("fit config: initial bandwidth must lie in (0, a]");
  }
};

/// One MCMC iterate. Column k of `beta`, `tau_sq` and `omega_sq` belongs to
/// covariate k; rows of `omega_sq` follow `fused_pairs`, the pair set the
/// augmentation variables were last drawn on.
struct ChainState {
  Eigen::MatrixXd beta;
  Eigen::MatrixXd tau_sq;
  std::vector<SitePair> fused_pairs;
  Eigen::MatrixXd omega_sq;
  std::vector<Eigen::MatrixXd> precision;
  double sigma_sq = 1.0;
  Eigen::VectorXd lambda1_sq;
  Eigen::VectorXd lambda2_sq;
  Eigen::VectorXd h;
  AdjacencyStructure adjacency;
};

struct Draw {
  int iter = 0;
  double sigma_sq = 0.0;
  Eigen::VectorXd lambda1_sq;  // empty for models without a lasso prior
  Eigen::VectorXd lambda2_sq;
  Eigen::VectorXd h;           // per observed site
  Eigen::MatrixXd beta;        // n x p
};

struct PosteriorDraws {
  std::vector<Draw> draws;
  Eigen::VectorXd acceptance_rates;  // per location
  KernelFamily kernel_family = KernelFamily::bisquare;

  Index n() const { return draws.empty() ? 0 : draws.front().beta.rows(); }
  Index p() const { return draws.empty() ? 0 : draws.front().beta.cols(); }

  Eigen::MatrixXd mean_beta() const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n(), p());
    for (const auto& d : draws) acc += d.beta;
    return draws.empty() ? acc : Eigen::MatrixXd(acc / static_cast<double>(draws.size()));
  }
};

/// Sigma_k^{-1}: diagonal 1/tau_i^2 + sum over adjacent l of 1/omega_{il}^2,
/// off-diagonal -1/omega_{ij}^2 for adjacent pairs, zero elsewhere.
inline Eigen::MatrixXd build_fused_precision(const Eigen::VectorXd& tau_sq, std::span<const SitePair> pairs,
                                             const Eigen::VectorXd& omega_sq) {
  const Index n = tau_sq.size();
  if (omega_sq.size() != static_cast<Index>(pairs.size()))
    throw std::invalid_argument("build_fused_precision: one omega^2 per pair required");
  Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(n, n);
  prec.diagonal() = tau_sq.cwiseInverse();
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [i, j] = pairs[e];
    const double v = 1.0 / omega_sq(static_cast<Index>(e));
    prec(i, i) += v;
    prec(j, j) += v;
    prec(i, j) -= v;
    prec(j, i) -= v;
  }
  return prec;
}

/// Backfitting target y_k = y - sum_{l != k} X_l beta_l.
inline Eigen::VectorXd partial_response(Index k, const SpatialDataset& data, const Eigen::MatrixXd& beta) {
  Eigen::VectorXd yk = data.y - data.X.cwiseProduct(beta).rowwise().sum();
  yk += data.X.col(k).cwiseProduct(beta.col(k));
  return yk;
}

inline Eigen::VectorXd total_residual(const SpatialDataset& data, const Eigen::MatrixXd& beta) {
  return data.y - data.X.cwiseProduct(beta).rowwise().sum();
}

/// beta_k ~ MN(A^{-1} b, sigma^2 A^{-1}) with A = X_k (sum_i W(s_i)^2) X_k + Sigma_k^{-1}
/// and b = X_k (sum_i W(s_i)^2) y_k.
inline PrecisionMvnProblem beta_conditional(Index k, const SpatialDataset& data, const Eigen::VectorXd& yk,
                                            const Eigen::VectorXd& squared_weight_sums, double sigma_sq,
                                            const Eigen::MatrixXd& fused_precision) {
  const Eigen::VectorXd xk = data.X.col(k);
  PrecisionMvnProblem problem;
  problem.precision = fused_precision;
  problem.precision.diagonal() += xk.cwiseProduct(xk).cwiseProduct(squared_weight_sums);
  problem.linear_term = xk.cwiseProduct(squared_weight_sums).cwiseProduct(yk);
  problem.scale = sigma_sq;
  return problem;
}

inline Eigen::VectorXd gibbs_beta(Index k, const SpatialDataset& data, const Eigen::VectorXd& yk,
                                  const AdjacencyStructure& adjacency, double sigma_sq,
                                  const Eigen::MatrixXd& fused_precision, RngStream& rng) {
  return sample_mvn_from_precision(
      beta_conditional(k, data, yk, adjacency.squared_weight_sums(), sigma_sq, fused_precision), rng);
}

namespace detail {

// 1/v ~ IGauss(sqrt(lambda_sq sigma_sq) / max(|diff|, floor), lambda_sq), clamped, inverted.
inline double draw_augmented_variance(double diff, double sigma_sq, double lambda_sq, RngStream& rng) {
  const double mag = std::max(std::abs(diff), kCoefficientFloor);
  const double mean = std::sqrt(lambda_sq * sigma_sq) / mag;
  const double inv = std::clamp(sample_inverse_gaussian(mean, lambda_sq, rng), kInversePriorVarianceMin,
                                kInversePriorVarianceMax);
  return 1.0 / inv;
}

}  // namespace detail

struct Augmentation {
  Eigen::VectorXd tau_sq;    // one per site
  Eigen::VectorXd omega_sq;  // one per adjacency pair, in adjacency.pairs order
};

inline Augmentation gibbs_augmentation(Index k, const Eigen::MatrixXd& beta, double sigma_sq, double lambda1_sq,
                                       double lambda2_sq, const AdjacencyStructure& adjacency, RngStream& rng) {
  const Index n = beta.rows();
  Augmentation out;
  out.tau_sq.resize(n);
  for (Index i = 0; i < n; ++i) out.tau_sq(i) = detail::draw_augmented_variance(beta(i, k), sigma_sq, lambda1_sq, rng);
  out.omega_sq.resize(static_cast<Index>(adjacency.pairs.size()));
  for (std::size_t e = 0; e < adjacency.pairs.size(); ++e) {
    const auto [i, j] = adjacency.pairs[e];
    out.omega_sq(static_cast<Index>(e)) =
        detail::draw_augmented_variance(beta(i, k) - beta(j, k), sigma_sq, lambda2_sq, rng);
  }
  return out;
}

struct ShapeRate {
  double shape = 0.0;
  double rate = 0.0;
};

/// r* = r + p n^2 / 2 and q* = q + (1/2) sum_i sum_k ||W(s_i) y_k - W(s_i) X_k beta_k||^2.
inline ShapeRate sigma_sq_posterior(const SpatialDataset& data, const Eigen::MatrixXd& beta,
                                    const AdjacencyStructure& adjacency, const FitConfig& config) {
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(data.p());
  const Eigen::VectorXd c = adjacency.squared_weight_sums();
  double energy = 0.0;
  for (Index k = 0; k < data.p(); ++k) {
    const Eigen::VectorXd e = partial_response(k, data, beta) - data.X.col(k).cwiseProduct(beta.col(k));
    energy += c.dot(e.cwiseProduct(e));
  }
  return {config.r + p * n * n / 2.0, config.q + energy / 2.0};
}

inline double gibbs_sigma_sq(const SpatialDataset& data, const Eigen::MatrixXd& beta,
                             const AdjacencyStructure& adjacency, const FitConfig& config, RngStream& rng) {
  const auto post = sigma_sq_posterior(data, beta, adjacency, config);
  return sample_inverse_gamma(post.shape, post.rate, rng);
}

struct LambdaPosterior {
  ShapeRate lambda1;
  ShapeRate lambda2;
};

/// Gamma(r1 + n, q1 + sum tau^2 / 2) and Gamma(r2 + sum n_i / 2, q2 + sum omega^2 / 2).
inline LambdaPosterior lambda_posterior(const Eigen::VectorXd& tau_sq, const Eigen::VectorXd& omega_sq,
                                        const AdjacencyStructure& adjacency, const FitConfig& config) {
  double count = 0.0;
  for (Index c : adjacency.neighbor_counts) count += static_cast<double>(c);
  return {{config.r1 + static_cast<double>(tau_sq.size()), config.q1 + tau_sq.sum() / 2.0},
          {config.r2 + count / 2.0, config.q2 + omega_sq.sum() / 2.0}};
}

inline std::pair<double, double> gibbs_lambdas(const Eigen::VectorXd& tau_sq, const Eigen::VectorXd& omega_sq,
                                               const AdjacencyStructure& adjacency, const FitConfig& config,
                                               RngStream& rng) {
  const auto post = lambda_posterior(tau_sq, omega_sq, adjacency, config);
  const double l1 = sample_gamma(post.lambda1.shape, post.lambda1.rate, rng);
  const double l2 = sample_gamma(post.lambda2.shape, post.lambda2.rate, rng);
  return {l1, l2};
}

/// ||W_h(s_i) r||^2 for the weight row of site i at bandwidth h.
inline double weighted_energy(const Eigen::MatrixXd& distances, Index i, double h, KernelFamily family,
                              const Eigen::VectorXd& residual) {
  const KernelSpec spec{family, h};
  double acc = 0.0;
  for (Index j = 0; j < distances.cols(); ++j) {
    const double w = kernel_weight(spec, distances(i, j));
    acc += w * w * residual(j) * residual(j);
  }
  return acc;
}

/// log alpha for replacing an energy `current` with `proposed`:
/// -(proposed - current) / (2 sigma^2), capped at 0.
inline double mh_log_acceptance(double proposed, double current, double sigma_sq) {
  return std::min(0.0, -(proposed - current) / (2.0 * sigma_sq));
}

struct MhStep {
  double proposal = 0.0;
  double log_alpha = -std::numeric_limits<double>::infinity();
  bool accepted = false;
};

/// Random-walk MH update of h(s_i). Out-of-support proposals are rejected.
/// The residual is the total residual y - sum_k X_k beta_k; on acceptance
/// row i of the weights and the pair set are rebuilt.
inline MhStep mh_bandwidth_site(Index i, const Eigen::VectorXd& residual, double sigma_sq,
                                const Eigen::MatrixXd& distances, const FitConfig& config, Eigen::VectorXd& h,
                                AdjacencyStructure& adjacency, RngStream& rng) {
  MhStep step;
  step.proposal = h(i) + std::sqrt(config.proposal_variance()) * rng.normal();
  const double u = rng.uniform();
  if (!(step.proposal > 0.0) || step.proposal > config.a) return step;
  const KernelFamily family = config.kernel_family;
  step.log_alpha = mh_log_acceptance(weighted_energy(distances, i, step.proposal, family, residual),
                                     weighted_energy(distances, i, h(i), family, residual), sigma_sq);
  if (std::log(u) < step.log_alpha) {
    step.accepted = true;
    h(i) = step.proposal;
    refresh_weight_row(adjacency, distances, i, h(i), family);
    rebuild_pairs(adjacency);
  }
  return step;
}

/// Shared-bandwidth MH: one h for every site, acceptance pooled over rows.
/// `energy(h)` returns sum_i ||W_h(s_i) r_i||^2.
template <class Energy>
MhStep mh_bandwidth_shared(Energy&& energy, double sigma_sq, double upper, double proposal_variance,
                           double& h, RngStream& rng) {
  MhStep step;
  step.proposal = h + std::sqrt(proposal_variance) * rng.normal();
  const double u = rng.uniform();
  if (!(step.proposal > 0.0) || step.proposal > upper) return step;
  step.log_alpha = mh_log_acceptance(energy(step.proposal), energy(h), sigma_sq);
  if (std::log(u) < step.log_alpha) {
    step.accepted = true;
    h = step.proposal;
  }
  return step;
}

inline double pooled_energy(const Eigen::MatrixXd& distances, double h, KernelFamily family,
                            const Eigen::VectorXd& residual) {
  double acc = 0.0;
  for (Index i = 0; i < distances.rows(); ++i) acc += weighted_energy(distances, i, h, family, residual);
  return acc;
}

/// Initial state: beta from local WLS at bandwidth h^(0) (global OLS where a
/// site is singular), sigma^2 from the initializer's residuals, all
/// augmentation variables and lambdas at 1.
inline ChainState initial_state(const SpatialDataset& data, const Eigen::MatrixXd& distances, const FitConfig& config) {
  const Index n = data.n();
  const Index p = data.p();
  const double h0 = config.start_bandwidth();
  ChainState s;
  s.beta.resize(n, p);
  std::optional<Eigen::VectorXd> global;
  for (Index i = 0; i < n; ++i) {
    try {
      s.beta.row(i) = gwr_fit_at(data.locations[static_cast<std::size_t>(i)], data, h0, config.kernel_family,
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
      s.beta.row(i) = global->transpose();
    }
  }
  const Eigen::VectorXd res = total_residual(data, s.beta);
  s.sigma_sq = res.squaredNorm() / static_cast<double>(n);
  if (!(s.sigma_sq > 1e-12) || !std::isfinite(s.sigma_sq)) s.sigma_sq = 1.0;
  s.h = Eigen::VectorXd::Constant(n, h0);
  s.adjacency = build_adjacency(distances, s.h, config.kernel_family);
  s.tau_sq = Eigen::MatrixXd::Ones(n, p);
  s.fused_pairs = s.adjacency.pairs;
  s.omega_sq = Eigen::MatrixXd::Ones(static_cast<Index>(s.fused_pairs.size()), p);
  s.lambda1_sq = Eigen::VectorXd::Ones(p);
  s.lambda2_sq = Eigen::VectorXd::Ones(p);
  for (Index k = 0; k < p; ++k)
    s.precision.push_back(build_fused_precision(s.tau_sq.col(k), s.fused_pairs, s.omega_sq.col(k)));
  return s;
}

/// Throws std::logic_error when a ChainState invariant is broken.
inline void check_state(const ChainState& s, const FitConfig& config) {
  const auto positive = [](const Eigen::MatrixXd& m) { return m.size() == 0 || (m.array() > 0.0).all(); };
  if (!(s.sigma_sq > 0.0) || !positive(s.tau_sq) || !positive(s.omega_sq) || !positive(s.lambda1_sq) ||
      !positive(s.lambda2_sq))
    throw std::logic_error("chain state: variance-like quantity is not positive");
  if (!positive(s.h) || (s.h.array() > config.a).any()) throw std::logic_error("chain state: bandwidth outside (0, a]");
  if (!config.adaptive_bandwidth && (s.h.array() != s.h(0)).any())
    throw std::logic_error("chain state: shared bandwidth differs across sites");
  if (!s.beta.allFinite()) throw std::logic_error("chain state: non-finite coefficient");
}

/// Runs the sampler. Each sweep updates, in order: every beta_k; every
/// (T_k, Omega_k) and Sigma_k^{-1}; sigma^2; every (lambda_k1^2, lambda_k2^2);
/// the bandwidths by MH; then the weights. States after burn-in are kept
/// every `thin` sweeps.
inline PosteriorDraws run_chain(const SpatialDataset& data, const FitConfig& config, RngStream& rng) {
  validate(data);
  config.validate();
  const Index n = data.n();
  const Index p = data.p();
  const Eigen::MatrixXd distances = distance_matrix(data.locations);
  ChainState s = initial_state(data, distances, config);

  PosteriorDraws out;
  out.kernel_family = config.kernel_family;
  out.draws.reserve(static_cast<std::size_t>(config.retained_count()));
  Eigen::VectorXd accepted = Eigen::VectorXd::Zero(n);
  int attempts = 0;

  for (int t = 1; t <= config.t_max; ++t) {
    const auto fail = [&](const char* stage, const NumericalFailure& e) {
      return NumericalFailure("iteration " + std::to_string(t) + ", " + stage + ": " + e.what(), e.pivot());
    };
    const Eigen::VectorXd c = s.adjacency.squared_weight_sums();
    for (Index k = 0; k < p; ++k) {
      const Eigen::VectorXd yk = partial_response(k, data, s.beta);
      try {
        s.beta.col(k) = sample_mvn_from_precision(beta_conditional(k, data, yk, c, s.sigma_sq, s.precision[k]), rng);
      } catch (const NumericalFailure& e) {
        throw fail("coefficient draw", e);
      }
    }

    s.fused_pairs = s.adjacency.pairs;
    s.omega_sq.resize(static_cast<Index>(s.fused_pairs.size()), p);
    for (Index k = 0; k < p; ++k) {
      auto aug = gibbs_augmentation(k, s.beta, s.sigma_sq, s.lambda1_sq(k), s.lambda2_sq(k), s.adjacency, rng);
      s.tau_sq.col(k) = aug.tau_sq;
      s.omega_sq.col(k) = aug.omega_sq;
      s.precision[static_cast<std::size_t>(k)] = build_fused_precision(aug.tau_sq, s.fused_pairs, aug.omega_sq);
    }

    s.sigma_sq = gibbs_sigma_sq(data, s.beta, s.adjacency, config, rng);

    for (Index k = 0; k < p; ++k) {
      const auto [l1, l2] = gibbs_lambdas(s.tau_sq.col(k), s.omega_sq.col(k), s.adjacency, config, rng);
      s.lambda1_sq(k) = l1;
      s.lambda2_sq(k) = l2;
    }

    if (config.sample_bandwidth) {
      const Eigen::VectorXd res = total_residual(data, s.beta);
      ++attempts;
      if (config.adaptive_bandwidth) {
        for (Index i = 0; i < n; ++i)
          if (mh_bandwidth_site(i, res, s.sigma_sq, distances, config, s.h, s.adjacency, rng).accepted)
            accepted(i) += 1.0;
      } else {
        double shared = s.h(0);
        const auto energy = [&](double h) { return pooled_energy(distances, h, config.kernel_family, res); };
        if (mh_bandwidth_shared(energy, s.sigma_sq, config.a, config.proposal_variance(), shared, rng).accepted) {
          accepted.array() += 1.0;
          s.h.setConstant(shared);
          s.adjacency = build_adjacency(distances, s.h, config.kernel_family);
        }
      }
    }

#ifndef NDEBUG
    check_state(s, config);
#endif

    if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
      Draw d;
      d.iter = t;
      d.sigma_sq = s.sigma_sq;
      d.lambda1_sq = s.lambda1_sq;
      d.lambda2_sq = s.lambda2_sq;
      d.h = s.h;
      d.beta = s.beta;
      out.draws.push_back(std::move(d));
    }
  }
  out.acceptance_rates = attempts > 0 ? Eigen::VectorXd(accepted / attempts) : Eigen::VectorXd::Zero(n);
  return out;
}

}  // namespace bgwsr
