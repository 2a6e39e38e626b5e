#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bgwsr/random.hpp"
#include "bgwsr/spatial.hpp"

namespace testing_support {

inline double mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
  std::sort(a.begin(), a.end());
  const double m = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max({d, std::abs(f - i / m), std::abs((i + 1) / m - f)});
  }
  return d;
}

/// Geweke-style z for two sets of draws of a scalar statistic. The
/// successive-conditional chain is autocorrelated, so its standard error
/// uses batch means.
inline double geweke_z(const std::vector<double>& marginal, const std::vector<double>& chain, std::size_t batches = 50) {
  const double m1 = mean(marginal);
  const double v1 = variance(marginal) / static_cast<double>(marginal.size());
  const std::size_t size = chain.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (std::size_t t = b * size; t < (b + 1) * size; ++t) acc += chain[t];
    means.push_back(acc / static_cast<double>(size));
  }
  const double m2 = mean(means);
  const double v2 = variance(means) / static_cast<double>(batches);
  return (m1 - m2) / std::sqrt(v1 + v2);
}

/// Random dataset on [0, 1]^2 with standard-normal covariates.
inline bgwsr::SpatialDataset random_dataset(bgwsr::Index n, bgwsr::Index p, std::uint64_t seed) {
  bgwsr::RngStream rng(seed, 99);
  bgwsr::SpatialDataset d;
  d.X.resize(n, p);
  d.y.resize(n);
  for (bgwsr::Index i = 0; i < n; ++i) {
    d.locations.push_back({rng.uniform(), rng.uniform()});
    for (bgwsr::Index k = 0; k < p; ++k) d.X(i, k) = rng.normal();
    d.y(i) = rng.normal();
  }
  return d;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bgwsr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
