#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bgwsr/bgwr.hpp"
#include "bgwsr/gwr.hpp"
#include "bgwsr/sampler.hpp"
#include "bgwsr/scenario.hpp"
#include "checks.hpp"
#include "support.hpp"

using namespace bgwsr;
using checks::kernel_row;
using checks::normal_equations;

namespace {

// Exhaustive k-fold CV with the library's fold labels and the dense oracle.
double oracle_cv(const SpatialDataset& d, const std::vector<int>& fold, int k, double h, KernelFamily f) {
  double total = 0.0;
  for (int g = 0; g < k; ++g) {
    std::vector<Index> train, test;
    for (Index i = 0; i < d.n(); ++i) (fold[i] == g ? test : train).push_back(i);
    SpatialDataset tr;
    tr.X.resize(static_cast<Index>(train.size()), d.p());
    tr.y.resize(static_cast<Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
      tr.locations.push_back(d.locations[train[r]]);
      tr.X.row(r) = d.X.row(train[r]);
      tr.y(r) = d.y(train[r]);
    }
    double sse = 0.0;
    for (Index i : test) {
      const Eigen::VectorXd w = kernel_row(d.locations[i], tr, h, f);
      const Eigen::MatrixXd xtw = tr.X.transpose() * w.asDiagonal();
      const Eigen::MatrixXd g2 = xtw * tr.X;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(g2);
      if (lu.rank() < d.p()) return std::numeric_limits<double>::infinity();
      const double e = d.y(i) - d.X.row(i).dot(lu.solve(xtw * tr.y));
      sse += e * e;
    }
    total += sse / static_cast<double>(test.size());
  }
  return total / k;
}

}  // namespace

TEST(GwrFit, UnitWeightsGiveOls) {
  const auto d = testing_support::random_dataset(25, 3, 1);
  const Eigen::VectorXd local = gwr_fit_at({0.5, 0.5}, d, 100.0, KernelFamily::boxcar);
  const Eigen::VectorXd ols = (d.X.transpose() * d.X).ldlt().solve(d.X.transpose() * d.y);
  EXPECT_LT((local - ols).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((ols_fit(d) - ols).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GwrFit, SinglePositiveWeightIsExactlyDetermined) {
  const auto d = testing_support::random_dataset(15, 1, 2);
  const Eigen::VectorXd b = gwr_fit_at(d.locations[4], d, 1e-6, KernelFamily::bisquare);
  EXPECT_NEAR(b(0), d.y(4) / d.X(4, 0), 1e-12);
}

TEST(GwrFit, MatchesNormalEquationOracle) { EXPECT_LT(checks::gwr_oracle_gap(), 1e-8); }

TEST(GwrFit, RankDeficiencyNamesSite) {
  const auto d = testing_support::random_dataset(10, 2, 3);
  try {
    gwr_fit_at({5.0, 5.0}, d, 0.1, KernelFamily::bisquare, 17);
    FAIL();
  } catch (const SingularFit& e) {
    EXPECT_EQ(e.site(), 17u);
    EXPECT_NE(std::string(e.what()).find("site 17"), std::string::npos);
  }
}

TEST(GwrFit, InvariantToWeightScale) {
  const auto d = testing_support::random_dataset(30, 3, 4);
  const Eigen::VectorXd w = kernel_row({0.4, 0.4}, d, 0.7, KernelFamily::bisquare);
  const Eigen::VectorXd a = weighted_least_squares(d, w);
  for (double s : {1e-3, 0.37, 12.0, 1e4}) EXPECT_LT((weighted_least_squares(d, s * w) - a).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GwrSelect, SingleCandidate) {
  const auto d = testing_support::random_dataset(30, 2, 5);
  GwrConfig c;
  c.bandwidth_grid = {0.8};
  RngStream rng(1);
  EXPECT_EQ(gwr_select_bandwidth(d, c, rng).bandwidth, 0.8);
}

TEST(GwrSelect, SingularCandidateEliminated) {
  const auto d = testing_support::random_dataset(30, 2, 6);
  GwrConfig c;
  c.bandwidth_grid = {1e-4, 2.0};
  RngStream rng(1);
  const auto sel = gwr_select_bandwidth(d, c, rng);
  EXPECT_EQ(sel.bandwidth, 2.0);
  EXPECT_TRUE(std::isinf(sel.cv_errors[0]));
}

TEST(GwrSelect, AllSingularFails) {
  const auto d = testing_support::random_dataset(30, 2, 7);
  GwrConfig c;
  c.bandwidth_grid = {1e-5, 1e-4};
  RngStream rng(1);
  EXPECT_THROW(gwr_select_bandwidth(d, c, rng), SelectionFailure);
}

TEST(GwrSelect, MatchesExhaustiveOracle) {
  RngStream gen(3, 0);
  const auto ds = generate_scenario(scenario_spec(1, 3), gen);
  GwrConfig c;
  RngStream rng(11), folds_rng(11);
  const auto sel = gwr_select_bandwidth(ds.observed, c, rng);
  const auto folds = assign_folds(ds.observed.n(), c.folds, folds_rng);
  double best = std::numeric_limits<double>::infinity(), arg = 0.0;
  for (double h : c.bandwidth_grid) {
    const double e = oracle_cv(ds.observed, folds, c.folds, h, c.kernel_family);
    if (e < best) {
      best = e;
      arg = h;
    }
  }
  EXPECT_EQ(sel.bandwidth, arg);
}

TEST(GwrSelect, GridOrderIrrelevant) {
  const auto d = testing_support::random_dataset(40, 2, 8);
  GwrConfig c;
  c.bandwidth_grid = {0.3, 0.5, 0.8, 1.2, 2.0};
  RngStream a(4), b(4);
  const double first = gwr_select_bandwidth(d, c, a).bandwidth;
  std::reverse(c.bandwidth_grid.begin(), c.bandwidth_grid.end());
  std::swap(c.bandwidth_grid[1], c.bandwidth_grid[3]);
  EXPECT_EQ(gwr_select_bandwidth(d, c, b).bandwidth, first);
}

TEST(GwrConfig, Validation) {
  GwrConfig c;
  EXPECT_NO_THROW(c.validate(10));
  EXPECT_EQ(c.bandwidth_grid.size(), 59u);
  EXPECT_DOUBLE_EQ(c.bandwidth_grid.front(), 0.10);
  EXPECT_NEAR(c.bandwidth_grid.back(), 3.00, 1e-12);
  c.folds = 11;
  EXPECT_THROW(c.validate(10), std::invalid_argument);
  c.folds = 5;
  c.bandwidth_grid = {0.5, 0.5};
  EXPECT_THROW(c.validate(10), std::invalid_argument);
}

// ---- BGWR -------------------------------------------------------------------

namespace {

BgwrConfig short_bgwr() {
  BgwrConfig c;
  c.t_max = 400;
  c.burn_in = 100;
  c.thin = 1;
  return c;
}

}  // namespace

TEST(Bgwr, Deterministic) {
  const auto d = testing_support::random_dataset(20, 2, 9);
  const auto c = short_bgwr();
  RngStream a(5, 2), b(5, 2);
  const auto x = bgwr_run_chain(d, c, a);
  const auto y = bgwr_run_chain(d, c, b);
  ASSERT_EQ(x.draws.size(), y.draws.size());
  for (std::size_t t = 0; t < x.draws.size(); ++t) {
    EXPECT_EQ(x.draws[t].beta, y.draws[t].beta);
    EXPECT_EQ(x.draws[t].h, y.draws[t].h);
  }
}

TEST(Bgwr, StrongPriorShrinksToZero) {
  auto d = testing_support::random_dataset(20, 1, 10);
  d.y = 3.0 * d.X.col(0) + 0.1 * d.y;
  auto c = short_bgwr();
  RngStream a(6), b(6);
  const double weak = bgwr_run_chain(d, c, a).mean_beta().cwiseAbs().mean();
  c.epsilon = 1e4;
  const double strong = bgwr_run_chain(d, c, b).mean_beta().cwiseAbs().mean();
  EXPECT_GT(weak, 2.0);
  EXPECT_LT(strong, 0.1 * weak);
}

TEST(Bgwr, ConjugatePosteriorMean) {
  SpatialDataset d;
  d.locations = {{0, 0}, {0.6, 0}};
  d.X.resize(2, 1);
  d.X << 1.2, -0.8;
  d.y = Eigen::Vector2d(1.0, -2.0);
  auto c = short_bgwr();
  c.t_max = 20000;
  c.burn_in = 0;
  c.sample_bandwidth = false;
  c.initial_bandwidth = 1.0;
  c.epsilon = 0.5;
  RngStream rng(7);
  const Eigen::MatrixXd got = bgwr_run_chain(d, c, rng).mean_beta();
  for (Index i = 0; i < 2; ++i) {
    // normal-normal: mean (x' W^2 x + eps)^{-1} x' W^2 y, free of sigma^2
    double a = c.epsilon, b = 0.0;
    for (Index j = 0; j < 2; ++j) {
      const double w = kernel_weight({c.kernel_family, 1.0}, distance(d.locations[i], d.locations[j]));
      a += w * w * d.X(j, 0) * d.X(j, 0);
      b += w * w * d.X(j, 0) * d.y(j);
    }
    EXPECT_NEAR(got(i, 0), b / a, 0.02) << "site " << i;
  }
}

TEST(Bgwr, ConditionalShape) {
  const auto d = testing_support::random_dataset(10, 2, 12);
  const auto c = short_bgwr();
  const auto dist = distance_matrix(d.locations);
  const auto post = bgwr_sigma_sq_posterior(dist, d, Eigen::MatrixXd::Zero(10, 2), 1e-6, c);
  // every site only weights itself
  EXPECT_DOUBLE_EQ(post.shape, c.r_bgwr + (10.0 + 20.0) / 2.0);
  EXPECT_NEAR(post.rate, c.q_bgwr + d.y.squaredNorm() / 2.0, 1e-12);
}

// Without fusion and with a flat lasso prior, BGWSR and BGWR at a bandwidth
// below the nearest-neighbour distance both reduce to y_i / x_i per site.
TEST(StructuralEquivalence, NoFusionAgreesWithBgwr) {
  auto d = testing_support::random_dataset(20, 1, 13);
  RngStream gen(14);
  for (Index i = 0; i < 20; ++i) d.X(i, 0) = 1.0 + gen.uniform();
  double nearest = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < 20; ++i)
    for (Index j = i + 1; j < 20; ++j) nearest = std::min(nearest, distance(d.locations[i], d.locations[j]));
  const double h = 0.5 * nearest;

  FitConfig fc;
  fc.t_max = 3000;
  fc.burn_in = 1000;
  fc.sample_bandwidth = false;
  fc.initial_bandwidth = h;
  fc.q1 = 1e8;
  fc.q2 = 1e8;
  BgwrConfig bc;
  bc.t_max = fc.t_max;
  bc.burn_in = fc.burn_in;
  bc.sample_bandwidth = false;
  bc.initial_bandwidth = h;
  RngStream a(15), b(15);
  const auto both = build_adjacency(d, Eigen::VectorXd::Constant(20, h), fc.kernel_family);
  ASSERT_TRUE(both.pairs.empty());
  const Eigen::MatrixXd m1 = run_chain(d, fc, a).mean_beta();
  const Eigen::MatrixXd m2 = bgwr_run_chain(d, bc, b).mean_beta();
  EXPECT_LT((m1 - m2).cwiseAbs().maxCoeff(), 0.05);
}
