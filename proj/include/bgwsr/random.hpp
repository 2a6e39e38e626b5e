#pragma once

// Seeded streams and the samplers used by the Gibbs and MH steps.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "bgwsr/errors.hpp"

namespace bgwsr {

/// One reproducible random stream. Identical (seed, stream_id) pairs give
/// identical sequences; distinct stream ids are seeded through seed_seq.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) : seed_(seed), stream_id_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Gamma with shape/rate parameterization; mean shape / rate.
inline double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw std::invalid_argument("sample_gamma: shape and rate must be positive");
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng.engine());
}

/// X ~ IGamma(shape, rate) iff 1/X ~ Gamma(shape, rate).
inline double sample_inverse_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw std::invalid_argument("sample_inverse_gamma: shape and rate must be positive");
  return 1.0 / std::gamma_distribution<double>(shape, 1.0 / rate)(rng.engine());
}

/// Inverse Gaussian(mean, shape) by the Michael-Schucany-Haas transform.
///
/// The smaller root mu * (1 + t - sqrt(t^2 + 2t)), t = mu * nu^2 / (2 lambda),
/// is evaluated as mu / (1 + t + sqrt(t^2 + 2t)) so that large mu / lambda
/// does not cancel.
inline double sample_inverse_gaussian(double mean, double shape, RngStream& rng) {
  if (!(mean > 0.0) || !(shape > 0.0) || !std::isfinite(mean) || !std::isfinite(shape))
    throw std::invalid_argument("sample_inverse_gaussian: mean and shape must be positive");
  const double nu = rng.normal();
  const double t = mean * nu * nu / (2.0 * shape);
  double x = mean / (1.0 + t + std::sqrt(t * t + 2.0 * t));
  x = std::max(x, 1e-300);
  const double u = rng.uniform();
  if (u <= mean / (mean + x)) return x;
  return mean * (mean / x);
}

struct PrecisionMvnProblem {
  Eigen::MatrixXd precision;
  Eigen::VectorXd linear_term;
  double scale = 1.0;
};

namespace detail {

// Index of the first non-positive pivot of a plain Cholesky sweep, or -1.
inline Eigen::Index failing_pivot(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return j;
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return -1;
}

inline void check_symmetric(const Eigen::MatrixXd& a, const char* who) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(who) + ": matrix must be square");
  if (!a.allFinite()) throw std::invalid_argument(std::string(who) + ": matrix has non-finite entries");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument(std::string(who) + ": matrix is not symmetric");
}

}  // namespace detail

/// Cholesky factor with the jitter policy: on failure add
/// 1e-10 * trace / n to the diagonal and retry, up to three retries with
/// the jitter escalated tenfold each time.
inline Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const Eigen::Index n = a.rows();
  double jitter = 1e-10 * std::abs(a.trace()) / static_cast<double>(n);
  if (!(jitter > 0.0)) jitter = 1e-10;
  Eigen::MatrixXd shifted;
  for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
    shifted = a;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt;
  }
  const auto pivot = detail::failing_pivot(shifted);
  throw NumericalFailure("Cholesky factorization failed after jitter at pivot " + std::to_string(pivot),
                         pivot < 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(pivot)));
}

/// Draw from MVN(A^{-1} b, scale * A^{-1}) without forming A^{-1}: with
/// A = L L', the draw is A^{-1} b + sqrt(scale) * L'^{-1} z for n standard
/// normals z.
inline Eigen::VectorXd sample_mvn_from_precision(const PrecisionMvnProblem& problem, RngStream& rng) {
  if (!(problem.scale > 0.0) || !std::isfinite(problem.scale))
    throw std::invalid_argument("sample_mvn_from_precision: scale must be positive");
  detail::check_symmetric(problem.precision, "sample_mvn_from_precision");
  const Eigen::Index n = problem.precision.rows();
  if (problem.linear_term.size() != n)
    throw std::invalid_argument("sample_mvn_from_precision: linear term length mismatch");
  const auto llt = robust_cholesky(problem.precision);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  Eigen::VectorXd mean = llt.solve(problem.linear_term);
  Eigen::VectorXd noise = llt.matrixU().solve(z);
  return mean + std::sqrt(problem.scale) * noise;
}

/// Draw from MVN(mean, covariance) through the lower Cholesky factor of the
/// covariance, with the same jitter policy.
inline Eigen::VectorXd sample_mvn_from_covariance(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                                                  RngStream& rng) {
  detail::check_symmetric(covariance, "sample_mvn_from_covariance");
  const Eigen::Index n = covariance.rows();
  if (mean.size() != n) throw std::invalid_argument("sample_mvn_from_covariance: mean length mismatch");
  const auto llt = robust_cholesky(covariance);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  return mean + llt.matrixL() * z;
}

}  // namespace bgwsr
