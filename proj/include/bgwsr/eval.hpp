#pragma once

// Scoring metrics and the replication harness behind the benchmark report.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bgwsr/bgwr.hpp"
#include "bgwsr/gwr.hpp"
#include "bgwsr/prediction.hpp"
#include "bgwsr/sampler.hpp"
#include "bgwsr/scenario.hpp"

namespace bgwsr {

inline double mse(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truths) {
  if (estimates.size() != truths.size() || estimates.size() < 1)
    throw std::invalid_argument("mse: need equal, non-empty lengths");
  return (estimates - truths).squaredNorm() / static_cast<double>(estimates.size());
}

struct IntervalMetrics {
  double coverage = 0.0;
  double mean_width = 0.0;
};

/// Fraction of truths inside [lo, hi] (inclusive) and mean width.
inline IntervalMetrics coverage_and_width(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                          const Eigen::VectorXd& truths) {
  if (lo.size() != hi.size() || lo.size() != truths.size() || lo.size() < 1)
    throw std::invalid_argument("coverage_and_width: need equal, non-empty lengths");
  IntervalMetrics m;
  for (Index i = 0; i < lo.size(); ++i) {
    if (lo(i) > hi(i)) throw std::invalid_argument("coverage_and_width: interval " + std::to_string(i) + " has lo > hi");
    if (truths(i) >= lo(i) && truths(i) <= hi(i)) m.coverage += 1.0;
    m.mean_width += hi(i) - lo(i);
  }
  m.coverage /= static_cast<double>(lo.size());
  m.mean_width /= static_cast<double>(lo.size());
  return m;
}

enum class Method { bgwsr_ae, bgwsr, bgwr, gwr };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::bgwsr_ae: return "bgwsr-ae";
    case Method::bgwsr: return "bgwsr";
    case Method::bgwr: return "bgwr";
    case Method::gwr: return "gwr";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  if (name == "bgwsr-ae") return Method::bgwsr_ae;
  if (name == "bgwsr") return Method::bgwsr;
  if (name == "bgwr") return Method::bgwr;
  if (name == "gwr") return Method::gwr;
  throw std::invalid_argument("unknown method '" + name + "' (expected bgwsr, bgwsr-ae, bgwr or gwr)");
}

inline std::vector<std::string> method_names() { return {"bgwsr", "bgwsr-ae", "bgwr", "gwr"}; }

/// Point estimates (and, for Bayesian methods, 95% intervals for y) that a
/// method hands to the scorer.
struct MethodFit {
  Eigen::MatrixXd beta_observed;    // n x p
  Eigen::MatrixXd beta_prediction;  // n* x p
  Eigen::VectorXd y_prediction;     // n*
  Eigen::VectorXd y_lo;             // empty when the method has no intervals
  Eigen::VectorXd y_hi;
  Index unavailable = 0;            // prediction sites isolated under every draw
};

struct BenchmarkConfig {
  std::vector<int> scenarios{1, 2, 3, 4, 5};
  std::vector<Method> methods{Method::bgwsr_ae, Method::bgwsr, Method::bgwr, Method::gwr};
  int replications = 10;
  std::uint64_t seed = 1;
  FitConfig fit;
  BgwrConfig bgwr;
  GwrConfig gwr;
  // raw kernel-weighted sum when false
  bool normalize_weights = false;
  unsigned threads = 1;
};

namespace detail {

inline MethodFit score_draws(const PosteriorDraws& draws, const SyntheticDataset& ds, bool normalize) {
  MethodFit fit;
  fit.beta_observed = draws.mean_beta();
  const auto pred = predict_all(draws, {ds.prediction_sites, ds.prediction_X, normalize}, ds.observed);
  const Index m = static_cast<Index>(pred.sites.size());
  const Index p = ds.observed.p();
  fit.beta_prediction.resize(m, p);
  fit.y_prediction.resize(m);
  fit.y_lo.resize(m);
  fit.y_hi.resize(m);
  for (Index i = 0; i < m; ++i) {
    const auto& s = pred.sites[static_cast<std::size_t>(i)];
    if (!s.available) {
      // nothing to average over; score as the empty weighted sum
      ++fit.unavailable;
      fit.beta_prediction.row(i).setZero();
      fit.y_prediction(i) = fit.y_lo(i) = fit.y_hi(i) = 0.0;
      continue;
    }
    for (Index k = 0; k < p; ++k) fit.beta_prediction(i, k) = s.beta[static_cast<std::size_t>(k)].mean;
    fit.y_prediction(i) = s.y.mean;
    fit.y_lo(i) = s.y.lo;
    fit.y_hi(i) = s.y.hi;
  }
  return fit;
}

}  // namespace detail

/// Fits one method on the observed part of `ds` and predicts at its
/// prediction sites.
inline MethodFit fit_method(Method method, const SyntheticDataset& ds, const BenchmarkConfig& config, RngStream& rng) {
  switch (method) {
    case Method::bgwsr_ae:
    case Method::bgwsr: {
      FitConfig fc = config.fit;
      fc.adaptive_bandwidth = method == Method::bgwsr_ae;
      return detail::score_draws(run_chain(ds.observed, fc, rng), ds, config.normalize_weights);
    }
    case Method::bgwr:
      return detail::score_draws(bgwr_run_chain(ds.observed, config.bgwr, rng), ds, config.normalize_weights);
    case Method::gwr: {
      const auto sel = gwr_select_bandwidth(ds.observed, config.gwr, rng);
      MethodFit fit;
      fit.beta_observed = gwr_fit_observed(ds.observed, sel.bandwidth, config.gwr.kernel_family);
      const Index m = static_cast<Index>(ds.prediction_sites.size());
      fit.beta_prediction.resize(m, ds.observed.p());
      for (Index i = 0; i < m; ++i)
        fit.beta_prediction.row(i) = gwr_fit_at(ds.prediction_sites[static_cast<std::size_t>(i)], ds.observed,
                                                sel.bandwidth, config.gwr.kernel_family, static_cast<std::size_t>(i))
                                         .transpose();
      fit.y_prediction = ds.prediction_X.cwiseProduct(fit.beta_prediction).rowwise().sum();
      return fit;
    }
  }
  throw std::invalid_argument("fit_method: unknown method");
}

using MethodRunner = std::function<MethodFit(Method, const SyntheticDataset&, const BenchmarkConfig&, RngStream&)>;

/// Metric names in report order for p covariates.
inline std::vector<std::string> metric_names(Index p) {
  std::vector<std::string> names;
  for (const char* where : {"obs", "pred"}) {
    for (Index k = 1; k <= p; ++k) names.push_back("mse_beta" + std::to_string(k) + "_" + where);
    names.push_back(std::string("mse_y_") + where);
  }
  names.insert(names.end(), {"mse_y_signal_pred", "coverage_y_pred", "width_y_pred", "unavailable_pred"});
  return names;
}

/// Metrics of one fit, aligned with metric_names. Interval metrics are NaN
/// for methods without intervals.
inline std::vector<double> score_fit(const MethodFit& fit, const SyntheticDataset& ds) {
  const Index p = ds.observed.p();
  std::vector<double> v;
  for (Index k = 0; k < p; ++k) v.push_back(mse(fit.beta_observed.col(k), ds.true_beta_observed.col(k)));
  const Eigen::VectorXd y_obs = ds.observed.X.cwiseProduct(fit.beta_observed).rowwise().sum();
  v.push_back(mse(y_obs, ds.observed.y));
  for (Index k = 0; k < p; ++k) v.push_back(mse(fit.beta_prediction.col(k), ds.true_beta_prediction.col(k)));
  v.push_back(mse(fit.y_prediction, ds.prediction_y));
  const Eigen::VectorXd signal = ds.prediction_X.cwiseProduct(ds.true_beta_prediction).rowwise().sum();
  v.push_back(mse(fit.y_prediction, signal));
  if (fit.y_lo.size() > 0) {
    const auto iv = coverage_and_width(fit.y_lo, fit.y_hi, signal);
    v.push_back(iv.coverage);
    v.push_back(iv.mean_width);
  } else {
    v.push_back(std::numeric_limits<double>::quiet_NaN());
    v.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  v.push_back(static_cast<double>(fit.unavailable));
  return v;
}

/// Median of the finite entries; NaN when there are none. Order-independent.
inline double median(std::vector<double> values) {
  std::erase_if(values, [](double x) { return !std::isfinite(x); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  return m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

struct RawRow {
  int scenario = 0;
  int replication = 0;
  Method method = Method::gwr;
  bool completed = false;
  std::string error;
  std::vector<double> metrics;
  double seconds = 0.0;
};

struct ReportRow {
  int scenario = 0;
  Method method = Method::gwr;
  int completed = 0;
  int failed = 0;
  std::vector<double> medians;
  double median_seconds = 0.0;
};

struct EvalReport {
  int replications = 0;
  std::vector<std::string> metrics;
  std::vector<ReportRow> rows;
  std::vector<RawRow> raw;

  const ReportRow& row(int scenario, Method method) const {
    for (const auto& r : rows)
      if (r.scenario == scenario && r.method == method) return r;
    throw std::out_of_range("report has no row for scenario " + std::to_string(scenario) + ", " + to_string(method));
  }
  double value(int scenario, Method method, const std::string& metric) const {
    const auto it = std::find(metrics.begin(), metrics.end(), metric);
    if (it == metrics.end()) throw std::out_of_range("unknown metric " + metric);
    return row(scenario, method).medians[static_cast<std::size_t>(it - metrics.begin())];
  }
};

/// Stream keys: data for (scenario, replication) comes from stream
/// `replication` of the seed, shared by all methods; each method cell gets
/// its own stream above 2^32.
inline std::uint64_t method_stream(int scenario, int replication, Method method) {
  return (std::uint64_t{1} << 32) | (static_cast<std::uint64_t>(scenario) << 24) |
         (static_cast<std::uint64_t>(replication) << 4) | static_cast<std::uint64_t>(method);
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

inline EvalReport run_benchmark(const BenchmarkConfig& config, const MethodRunner& runner = fit_method,
                                std::ostream* log = nullptr) {
  if (config.replications < 1) throw std::invalid_argument("benchmark: need at least one replication");
  if (config.scenarios.empty() || config.methods.empty())
    throw std::invalid_argument("benchmark: need at least one scenario and one method");

  struct Cell {
    std::size_t dataset;
    Method method;
  };
  std::vector<std::pair<int, int>> keys;  // (scenario, replication)
  for (int s : config.scenarios)
    for (int r = 0; r < config.replications; ++r) keys.emplace_back(s, r);

  std::vector<SyntheticDataset> datasets(keys.size());
  detail::parallel_for(keys.size(), config.threads, [&](std::size_t i) {
    RngStream rng(config.seed, static_cast<std::uint64_t>(keys[i].second));
    datasets[i] = generate_scenario(scenario_spec(keys[i].first, config.seed), rng);
  });

  std::vector<Cell> cells;
  for (std::size_t d = 0; d < keys.size(); ++d)
    for (Method m : config.methods) cells.push_back({d, m});

  EvalReport report;
  report.replications = config.replications;
  report.metrics = metric_names(datasets.front().observed.p());
  report.raw.resize(cells.size());
  detail::parallel_for(cells.size(), config.threads, [&](std::size_t c) {
    const auto [scenario, rep] = keys[cells[c].dataset];
    RawRow& row = report.raw[c];
    row.scenario = scenario;
    row.replication = rep;
    row.method = cells[c].method;
    RngStream rng(config.seed, method_stream(scenario, rep, row.method));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const SyntheticDataset& ds = datasets[cells[c].dataset];
      row.metrics = score_fit(runner(row.method, ds, config, rng), ds);
      row.completed = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  for (const auto& r : report.raw)
    if (!r.completed && log)
      *log << "scenario " << r.scenario << ", replication " << r.replication << ", " << to_string(r.method)
           << " failed: " << r.error << "\n";

  for (int s : config.scenarios) {
    for (Method m : config.methods) {
      ReportRow row;
      row.scenario = s;
      row.method = m;
      std::vector<std::vector<double>> columns(report.metrics.size());
      std::vector<double> secs;
      for (const auto& r : report.raw) {
        if (r.scenario != s || r.method != m) continue;
        secs.push_back(r.seconds);
        if (!r.completed) {
          ++row.failed;
          continue;
        }
        ++row.completed;
        for (std::size_t j = 0; j < columns.size(); ++j) columns[j].push_back(r.metrics[j]);
      }
      for (auto& col : columns) row.medians.push_back(median(std::move(col)));
      row.median_seconds = median(secs);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

// ---- serialization -------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "scenario,method,completed,failed";
  for (const auto& m : report.metrics) os << ',' << m;
  os << '\n';
  for (const auto& r : report.rows) {
    os << r.scenario << ',' << to_string(r.method) << ',' << r.completed << ',' << r.failed;
    for (double v : r.medians) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_raw_csv(std::ostream& os, const EvalReport& report) {
  os << "scenario,replication,method,status";
  for (const auto& m : report.metrics) os << ',' << m;
  os << '\n';
  for (const auto& r : report.raw) {
    os << r.scenario << ',' << r.replication << ',' << to_string(r.method) << ',' << (r.completed ? "ok" : "failed");
    for (std::size_t j = 0; j < report.metrics.size(); ++j)
      os << ',' << (r.completed ? format_double(r.metrics[j]) : "nan");
    os << '\n';
  }
}

inline void write_timings_csv(std::ostream& os, const EvalReport& report) {
  os << "scenario,replication,method,seconds\n";
  for (const auto& r : report.raw)
    os << r.scenario << ',' << r.replication << ',' << to_string(r.method) << ',' << format_double(r.seconds) << '\n';
}

}  // namespace bgwsr
