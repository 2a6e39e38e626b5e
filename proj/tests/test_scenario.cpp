#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "bgwsr/scenario.hpp"
#include "support.hpp"

using namespace bgwsr;

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = testing_support::mean(ra), mb = testing_support::mean(rb);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST(Locations, InsideDomainAndReproducible) {
  const auto spec = scenario_spec(1);
  RngStream a(3), b(3);
  const auto x = generate_locations(spec, a);
  const auto y = generate_locations(spec, b);
  EXPECT_EQ(x, y);
  ASSERT_EQ(x.size(), 1000u);
  for (const auto& s : x) {
    EXPECT_GE(s.s1, -1.0);
    EXPECT_LE(s.s1, 1.0);
    EXPECT_GE(s.s2, 0.0);
    EXPECT_LE(s.s2, 2.0);
  }
}

TEST(Locations, UniformMoments) {
  auto spec = scenario_spec(1);
  spec.n_pool = 100000;
  RngStream rng(4);
  double m1 = 0, m2 = 0;
  for (const auto& s : generate_locations(spec, rng)) {
    m1 += s.s1;
    m2 += s.s2;
  }
  EXPECT_NEAR(m1 / 1e5, 0.0, 0.01);
  EXPECT_NEAR(m2 / 1e5, 1.0, 0.01);
}

TEST(Coefficients, LeftRightClusterRule) {
  const auto spec = scenario_spec(3);
  RngStream rng(1);
  const auto b = generate_coefficients(spec, {{-0.5, 1.0}, {0.0, 0.3}, {0.5, 1.0}}, rng);
  EXPECT_EQ(Eigen::VectorXd(b.row(0).transpose()), Eigen::Vector3d(1, 1, 1));
  EXPECT_EQ(Eigen::VectorXd(b.row(1).transpose()), Eigen::Vector3d(1, 1, 1));
  EXPECT_EQ(Eigen::VectorXd(b.row(2).transpose()), Eigen::Vector3d(2, 2, 2));
}

TEST(Coefficients, UpperLowerClusterRule) {
  const auto spec = scenario_spec(5);
  RngStream rng(1);
  const auto b = generate_coefficients(spec, {{0.3, 0.0}, {0.3, 1.0}, {0.3, 1.5}}, rng);
  EXPECT_EQ(b(0, 0), 1.0);
  EXPECT_EQ(b(1, 0), 1.0);
  EXPECT_EQ(b(2, 0), 2.0);
}

TEST(Coefficients, ClusterFieldsTakeTwoValues) {
  for (int id : {3, 4, 5}) {
    const auto spec = scenario_spec(id);
    RngStream rng(static_cast<std::uint64_t>(id));
    const auto sites = generate_locations(spec, rng);
    const auto b = generate_coefficients(spec, sites, rng);
    for (Index k = 0; k < b.cols(); ++k) {
      std::set<double> values(b.col(k).data(), b.col(k).data() + b.rows());
      EXPECT_EQ(values, (std::set<double>{1.0, 2.0}));
    }
  }
}

TEST(Coefficients, VanishingBandwidthGivesIndependentSites) {
  auto spec = scenario_spec(1);
  spec.h_gen = 1e-6;
  spec.beta_star = Eigen::VectorXd::Constant(1, 2.0);
  std::vector<double> dev;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    RngStream rng(5, rep);
    const auto sites = generate_locations(spec, rng);
    const auto b = generate_coefficients(spec, sites, rng);
    for (Index i = 0; i < b.rows(); ++i) dev.push_back(b(i, 0) - 2.0);
  }
  ASSERT_EQ(dev.size(), 10000u);
  double ss = 0;
  for (double x : dev) ss += x * x;
  EXPECT_NEAR(ss / dev.size(), spec.sigma_sq, 0.05 * spec.sigma_sq);
}

TEST(Coefficients, SmoothFieldDecorrelatesWithDistance) {
  const auto spec = scenario_spec(1);
  RngStream rng(6);
  const auto sites = generate_locations(spec, rng);
  const auto b = generate_coefficients(spec, sites, rng);
  std::vector<double> dist, diff;
  RngStream pick(7);
  for (int t = 0; t < 1000; ++t) {
    const auto i = static_cast<std::size_t>(pick.uniform() * 1000), j = static_cast<std::size_t>(pick.uniform() * 1000);
    if (i == j) continue;
    dist.push_back(distance(sites[i], sites[j]));
    diff.push_back(std::abs(b(static_cast<Index>(i), 0) - b(static_cast<Index>(j), 0)));
  }
  EXPECT_GT(spearman(dist, diff), 0.0);
}

TEST(Responses, NoiselessIsInnerProduct) {
  RngStream rng(8);
  const Eigen::MatrixXd beta = Eigen::MatrixXd::Random(20, 3);
  const auto r = generate_responses(beta, 0.0, rng);
  EXPECT_EQ(r.y, Eigen::VectorXd(r.X.cwiseProduct(beta).rowwise().sum()));
  Eigen::MatrixXd x(1, 1), b(1, 1);
  x << 2.0;
  b << 3.0;
  EXPECT_EQ(responses_from(x, b, 0.0, rng)(0), 6.0);
}

TEST(Responses, ZeroCoefficientsArePureNoise) {
  RngStream rng(9);
  const auto r = generate_responses(Eigen::MatrixXd::Zero(20000, 2), 2.0, rng);
  const std::vector<double> y(r.y.data(), r.y.data() + r.y.size());
  EXPECT_NEAR(testing_support::variance(y), 2.0, 0.1);
}

TEST(Split, SkewedCounts) {
  const auto spec = scenario_spec(2);
  RngStream rng(10);
  const auto sites = generate_locations(spec, rng);
  const auto split = split_observed_prediction(spec, sites, rng);
  int left = 0;
  for (Index i : split.observed) left += sites[static_cast<std::size_t>(i)].s1 <= 0.0;
  EXPECT_EQ(left, 20);
  EXPECT_EQ(split.observed.size() - left, 80u);
}

TEST(Split, UniformCountsDisjointReproducible) {
  const auto spec = scenario_spec(1);
  RngStream a(11), b(11);
  const auto sites = generate_locations(spec, a);
  generate_locations(spec, b);
  const auto s1 = split_observed_prediction(spec, sites, a);
  const auto s2 = split_observed_prediction(spec, sites, b);
  EXPECT_EQ(s1.observed, s2.observed);
  EXPECT_EQ(s1.prediction, s2.prediction);
  EXPECT_EQ(s1.observed.size(), 100u);
  EXPECT_EQ(s1.prediction.size(), 50u);
  std::set<Index> all(s1.observed.begin(), s1.observed.end());
  all.insert(s1.prediction.begin(), s1.prediction.end());
  EXPECT_EQ(all.size(), 150u);
}

TEST(Split, InsufficientHalfFails) {
  auto spec = scenario_spec(2);
  spec.n_pool = 200;
  spec.n_obs = 140;
  spec.n_pred = 10;
  std::vector<Location> sites;
  for (int i = 0; i < 200; ++i) sites.push_back({i < 150 ? -0.5 : 0.5, i * 0.01});
  RngStream rng(12);
  EXPECT_THROW(split_observed_prediction(spec, sites, rng), GenerationFailure);
}

TEST(Scenarios, TableMapping) {
  using C = CoefficientStructure;
  using S = SamplingPattern;
  const std::vector<std::pair<C, S>> want{{C::a1_smooth, S::b1_uniform},
                                          {C::a1_smooth, S::b2_skewed},
                                          {C::a2_lr_clusters, S::b1_uniform},
                                          {C::a2_lr_clusters, S::b2_skewed},
                                          {C::a3_ud_clusters, S::b1_uniform}};
  for (int id = 1; id <= 5; ++id) {
    const auto s = scenario_spec(id);
    EXPECT_EQ(s.coefficient_structure, want[id - 1].first);
    EXPECT_EQ(s.sampling_pattern, want[id - 1].second);
  }
  EXPECT_THROW(scenario_spec(6), std::invalid_argument);
}

TEST(Scenarios, GeneratedDatasetIsConsistent) {
  for (int id = 1; id <= 5; ++id) {
    RngStream a(13, static_cast<std::uint64_t>(id)), b(13, static_cast<std::uint64_t>(id));
    const auto ds = generate_scenario(scenario_spec(id), a);
    const auto again = generate_scenario(scenario_spec(id), b);
    EXPECT_EQ(ds.observed.y, again.observed.y);
    EXPECT_EQ(ds.prediction_y, again.prediction_y);
    EXPECT_NO_THROW(validate(ds.observed));
    EXPECT_EQ(ds.observed.n(), 100);
    EXPECT_EQ(ds.observed.p(), 3);
    EXPECT_EQ(ds.prediction_sites.size(), 50u);
    EXPECT_EQ(ds.true_beta_prediction.rows(), 50);
    std::set<Index> obs(ds.observed_index.begin(), ds.observed_index.end());
    for (Index i : ds.prediction_index) EXPECT_FALSE(obs.count(i));
  }
}
