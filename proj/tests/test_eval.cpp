#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "bgwsr/eval.hpp"
#include "bgwsr/io.hpp"
#include "support.hpp"

using namespace bgwsr;

namespace {

MethodFit truth_fit(const SyntheticDataset& ds) {
  MethodFit f;
  f.beta_observed = ds.true_beta_observed;
  f.beta_prediction = ds.true_beta_prediction;
  f.y_prediction = ds.prediction_X.cwiseProduct(ds.true_beta_prediction).rowwise().sum();
  f.y_lo = f.y_prediction.array() - 0.5;
  f.y_hi = f.y_prediction.array() + 0.5;
  return f;
}

MethodRunner truth_runner() {
  return [](Method, const SyntheticDataset& ds, const BenchmarkConfig&, RngStream&) { return truth_fit(ds); };
}

// Perturbs the truth by noise from the cell's own stream.
MethodRunner noisy_runner() {
  return [](Method m, const SyntheticDataset& ds, const BenchmarkConfig&, RngStream& rng) {
    auto f = truth_fit(ds);
    const double scale = 0.1 * (1 + static_cast<int>(m));
    for (Index i = 0; i < f.beta_prediction.size(); ++i) f.beta_prediction.data()[i] += scale * rng.normal();
    f.y_prediction = ds.prediction_X.cwiseProduct(f.beta_prediction).rowwise().sum();
    return f;
  };
}

std::size_t idx(const EvalReport& r, const std::string& name) {
  return static_cast<std::size_t>(std::find(r.metrics.begin(), r.metrics.end(), name) - r.metrics.begin());
}

std::string report_text(const EvalReport& r, const BenchmarkConfig& c) {
  std::ostringstream os;
  write_report_csv(os, r);
  write_raw_csv(os, r);
  write_report_json(os, r, c);
  return os.str();
}

}  // namespace

TEST(Mse, Examples) {
  const Eigen::Vector3d a(1, 2, 3);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(mse(a.array() + 1.0, a), 1.0);
  EXPECT_DOUBLE_EQ(mse(a, Eigen::Vector3d(2, 2, 5)), 5.0 / 3.0);
  EXPECT_THROW(mse(a, Eigen::Vector2d(1, 2)), std::invalid_argument);
}

TEST(Coverage, Examples) {
  const Eigen::Vector2d lo(0, 1), hi(2, 3);
  const auto mid = coverage_and_width(lo, hi, Eigen::Vector2d(1, 2));
  EXPECT_EQ(mid.coverage, 1.0);
  EXPECT_EQ(mid.mean_width, 2.0);
  EXPECT_EQ(coverage_and_width(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0), Eigen::Vector2d(1, -1)).coverage, 0.0);
  EXPECT_EQ(coverage_and_width(lo, hi, Eigen::Vector2d(2, 5)).coverage, 0.5);
  EXPECT_THROW(coverage_and_width(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)),
               std::invalid_argument);
}

TEST(Methods, NamesRoundTrip) {
  for (const auto& n : method_names()) EXPECT_EQ(to_string(parse_method(n)), n);
  EXPECT_THROW(parse_method("lasso"), std::invalid_argument);
}

TEST(Benchmark, SingleReplicationMediansEqualRaw) {
  BenchmarkConfig c;
  c.scenarios = {3};
  c.methods = {Method::gwr};
  c.replications = 1;
  const auto r = run_benchmark(c, noisy_runner());
  ASSERT_EQ(r.rows.size(), 1u);
  ASSERT_EQ(r.raw.size(), 1u);
  for (std::size_t j = 0; j < r.metrics.size(); ++j) {
    const double raw = r.raw[0].metrics[j];
    if (std::isnan(raw)) EXPECT_TRUE(std::isnan(r.rows[0].medians[j]));
    else EXPECT_EQ(r.rows[0].medians[j], raw);
  }
}

TEST(Benchmark, TruthRunnerScoresZero) {
  BenchmarkConfig c;
  c.scenarios = {1, 4};
  c.methods = {Method::bgwsr};
  c.replications = 2;
  const auto r = run_benchmark(c, truth_runner());
  for (const auto& row : r.raw) {
    ASSERT_TRUE(row.completed);
    for (std::size_t j = 0; j < r.metrics.size(); ++j) {
      const auto& name = r.metrics[j];
      if (name.rfind("mse_beta", 0) == 0 || name == "mse_y_signal_pred") EXPECT_EQ(row.metrics[j], 0.0) << name;
    }
    RngStream rng(c.seed, static_cast<std::uint64_t>(row.replication));
    const auto ds = generate_scenario(scenario_spec(row.scenario, c.seed), rng);
    const Eigen::VectorXd signal = ds.prediction_X.cwiseProduct(ds.true_beta_prediction).rowwise().sum();
    const double noise = (ds.prediction_y - signal).squaredNorm() / static_cast<double>(signal.size());
    EXPECT_DOUBLE_EQ(row.metrics[idx(r, "mse_y_pred")], noise);
    EXPECT_EQ(row.metrics[idx(r, "coverage_y_pred")], 1.0);
    EXPECT_DOUBLE_EQ(row.metrics[idx(r, "width_y_pred")], 1.0);
  }
}

TEST(Benchmark, EveryMethodSeesTheSameData) {
  std::mutex mu;
  std::map<std::pair<int, double>, std::set<double>> seen;
  MethodRunner spy = [&](Method, const SyntheticDataset& ds, const BenchmarkConfig&, RngStream&) {
    std::lock_guard lock(mu);
    seen[{static_cast<int>(ds.observed.n()), ds.observed.y(0)}].insert(ds.prediction_y.sum());
    return truth_fit(ds);
  };
  BenchmarkConfig c;
  c.scenarios = {2, 5};
  c.replications = 3;
  c.threads = 3;
  run_benchmark(c, spy);
  EXPECT_EQ(seen.size(), 6u);
  for (const auto& [k, v] : seen) EXPECT_EQ(v.size(), 1u);
}

TEST(Benchmark, RerunAndThreadCountAreBitwiseStable) {
  BenchmarkConfig c;
  c.scenarios = {1, 3};
  c.replications = 3;
  const auto a = report_text(run_benchmark(c, noisy_runner()), c);
  const auto b = report_text(run_benchmark(c, noisy_runner()), c);
  c.threads = 4;
  const auto t = report_text(run_benchmark(c, noisy_runner()), c);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, t);
}

TEST(Benchmark, FailuresAreMissingNotFatal) {
  std::atomic<int> calls{0};
  MethodRunner flaky = [&](Method m, const SyntheticDataset& ds, const BenchmarkConfig&, RngStream&) {
    if (m == Method::bgwr && calls++ == 0) throw NumericalFailure("synthetic failure");
    return truth_fit(ds);
  };
  BenchmarkConfig c;
  c.scenarios = {1};
  c.methods = {Method::bgwr, Method::gwr};
  c.replications = 4;
  std::ostringstream log;
  const auto r = run_benchmark(c, flaky, &log);
  EXPECT_EQ(r.row(1, Method::bgwr).failed, 1);
  EXPECT_EQ(r.row(1, Method::bgwr).completed, 3);
  EXPECT_EQ(r.row(1, Method::gwr).completed, 4);
  EXPECT_NE(log.str().find("synthetic failure"), std::string::npos);
  EXPECT_EQ(r.value(1, Method::bgwr, "mse_beta1_obs"), 0.0);
}

TEST(Benchmark, ReportSchema) {
  const auto names = metric_names(3);
  const std::vector<std::string> head{"mse_beta1_obs", "mse_beta2_obs", "mse_beta3_obs", "mse_y_obs",
                                      "mse_beta1_pred", "mse_beta2_pred", "mse_beta3_pred", "mse_y_pred"};
  EXPECT_TRUE(std::equal(head.begin(), head.end(), names.begin()));
  BenchmarkConfig c;
  c.scenarios = {4};
  c.replications = 1;
  const auto r = run_benchmark(c, truth_runner());
  EXPECT_EQ(r.rows.size(), 4u);
  std::ostringstream os;
  write_report_csv(os, r);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "scenario,method,completed,failed,mse_beta1_obs,mse_beta2_obs,mse_beta3_obs,mse_y_obs,mse_beta1_pred,"
            "mse_beta2_pred,mse_beta3_pred,mse_y_pred,mse_y_signal_pred,coverage_y_pred,width_y_pred,unavailable_pred");
}

TEST(Median, PermutationInvariantAndSkipsNan) {
  std::vector<double> v{5, 1, 4, 2, 3, std::nan("")};
  EXPECT_EQ(median(v), 3.0);
  std::reverse(v.begin(), v.end());
  EXPECT_EQ(median(v), 3.0);
  EXPECT_EQ(median({1, 2, 3, 4}), 2.5);
  EXPECT_TRUE(std::isnan(median({std::nan("")})));
}

TEST(Benchmark, RealGwrCells) {
  BenchmarkConfig c;
  c.scenarios = {1};
  c.methods = {Method::gwr};
  c.replications = 2;
  const auto r = run_benchmark(c);
  EXPECT_EQ(r.row(1, Method::gwr).completed, 2);
  const double m = r.value(1, Method::gwr, "mse_y_pred");
  EXPECT_GT(m, 0.0);
  EXPECT_LT(m, 10.0);
  EXPECT_TRUE(std::isnan(r.value(1, Method::gwr, "coverage_y_pred")));
}
