#pragma once

// bgwsr command line: simulate, fit, predict, benchmark.
//
// Exit status: 0 ok, 1 usage error, 2 data error, 3 numerical failure.

#include <openssl/evp.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bgwsr/bgwr.hpp"
#include "bgwsr/eval.hpp"
#include "bgwsr/gwr.hpp"
#include "bgwsr/io.hpp"
#include "bgwsr/prediction.hpp"
#include "bgwsr/sampler.hpp"
#include "bgwsr/scenario.hpp"

#ifndef BGWSR_VERSION
#define BGWSR_VERSION "0.1.0"
#endif

namespace bgwsr::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// One manifest.json per output directory.
struct Manifest {
  std::vector<std::string> command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::string started = utc_now();
  std::vector<fs::path> inputs;

  void write(const fs::path& dir) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["code_version"] = BGWSR_VERSION;
    j["started"] = started;
    j["finished"] = utc_now();
    nlohmann::ordered_json digests = nlohmann::ordered_json::object();
    for (const auto& p : inputs) digests[p.string()] = "sha256:" + sha256_file(p);
    j["inputs"] = digests;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
};

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

inline void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config '" + path + "'");
  return read_config(in, path);
}

template <class T>
std::vector<T> parse_list(const std::string& text, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = std::string(detail::trim(item));
    if (!t.empty()) out.push_back(parse(t));
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

inline int parse_scenario_id(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v < 1 || v > 5)
    throw UsageError("scenario must be 1..5, got '" + s + "'");
  return v;
}

inline Method parse_method_arg(const std::string& s) {
  try {
    return parse_method(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// ---- subcommands ---------------------------------------------------------

inline void write_truth(std::ostream& os, const std::vector<Location>& sites, const Eigen::MatrixXd& beta) {
  os << "s1,s2";
  for (Index k = 1; k <= beta.cols(); ++k) os << ",beta" << k;
  os << '\n';
  for (std::size_t i = 0; i < sites.size(); ++i) {
    os << format_double(sites[i].s1) << ',' << format_double(sites[i].s2);
    for (Index k = 0; k < beta.cols(); ++k) os << ',' << format_double(beta(static_cast<Index>(i), k));
    os << '\n';
  }
}

inline void run_simulate(int scenario, std::uint64_t seed, const fs::path& out, Manifest manifest) {
  make_dir(out);
  RngStream rng(seed, 0);
  const auto ds = generate_scenario(scenario_spec(scenario, seed), rng);
  {
    auto f = open_output(out / "observed.csv");
    write_dataset(f, ds.observed);
  }
  {
    auto f = open_output(out / "prediction.csv");
    write_sites(f, ds.prediction_sites, ds.prediction_X, &ds.prediction_y);
  }
  {
    auto f = open_output(out / "truth_observed.csv");
    write_truth(f, ds.observed.locations, ds.true_beta_observed);
  }
  {
    auto f = open_output(out / "truth_prediction.csv");
    write_truth(f, ds.prediction_sites, ds.true_beta_prediction);
  }
  manifest.seed = seed;
  manifest.config["scenario"] = scenario;
  manifest.write(out);
}

/// GWR as a one-draw trace: the selected bandwidth at every site and the
/// local fits.
inline PosteriorDraws gwr_as_trace(const SpatialDataset& data, const GwrConfig& config, RngStream& rng) {
  const auto sel = gwr_select_bandwidth(data, config, rng);
  Draw d;
  d.iter = 0;
  d.sigma_sq = std::numeric_limits<double>::quiet_NaN();
  d.h = Eigen::VectorXd::Constant(data.n(), sel.bandwidth);
  d.beta = gwr_fit_observed(data, sel.bandwidth, config.kernel_family);
  PosteriorDraws out;
  out.kernel_family = config.kernel_family;
  out.draws.push_back(std::move(d));
  out.acceptance_rates = Eigen::VectorXd::Zero(data.n());
  return out;
}

inline void run_fit(Method method, const std::string& data_path, const std::string& config_path, const fs::path& out,
                    Manifest manifest) {
  const auto data = load_dataset(data_path);
  const RunConfig rc = load_run_config(config_path);
  PosteriorDraws draws;
  std::uint64_t seed = rc.fit.seed;
  switch (method) {
    case Method::bgwsr_ae:
    case Method::bgwsr: {
      FitConfig fc = rc.fit;
      fc.adaptive_bandwidth = method == Method::bgwsr_ae;
      RngStream rng(fc.seed, 0);
      draws = run_chain(data, fc, rng);
      break;
    }
    case Method::bgwr: {
      RngStream rng(rc.bgwr.seed, 0);
      seed = rc.bgwr.seed;
      draws = bgwr_run_chain(data, rc.bgwr, rng);
      break;
    }
    case Method::gwr: {
      RngStream rng(rc.fit.seed, 0);
      draws = gwr_as_trace(data, rc.gwr, rng);
      break;
    }
  }
  make_dir(out);
  {
    auto f = open_output(out / "trace.csv");
    write_trace(f, draws);
  }
  {
    auto f = open_output(out / "coefficients.csv");
    write_coefficients(f, draws, data);
  }
  {
    auto f = open_output(out / "data.csv");
    write_dataset(f, data);
  }
  {
    auto f = open_output(out / "config.txt");
    write_config(f, rc);
  }
  manifest.seed = seed;
  manifest.config = config_json(rc);
  manifest.config["method"] = to_string(method);
  manifest.inputs.push_back(data_path);
  if (!config_path.empty()) manifest.inputs.push_back(config_path);
  manifest.write(out);
}

inline Method fitted_method(const fs::path& fit_dir) {
  std::ifstream in(fit_dir / "manifest.json", std::ios::binary);
  if (!in) throw DataError("'" + fit_dir.string() + "' has no manifest.json; run `fit` first");
  nlohmann::json j;
  try {
    in >> j;
    return parse_method(j.at("config").at("method").get<std::string>());
  } catch (const std::exception& e) {
    throw DataError("'" + (fit_dir / "manifest.json").string() + "': " + e.what());
  }
}

inline void run_predict(const fs::path& fit_dir, const std::string& sites_path, const fs::path& out,
                        Manifest manifest) {
  const Method method = fitted_method(fit_dir);
  const auto data = load_dataset((fit_dir / "data.csv").string());
  const RunConfig rc = load_run_config((fit_dir / "config.txt").string());
  std::ifstream sin(sites_path, std::ios::binary);
  if (!sin) throw DataError("cannot open '" + sites_path + "'");
  const auto sites = read_sites(sin, sites_path);
  if (sites.X.cols() != data.p())
    throw DataError(sites_path + ": has " + std::to_string(sites.X.cols()) + " covariates, the fit has " +
                    std::to_string(data.p()));
  const KernelFamily family = method == Method::gwr     ? rc.gwr.kernel_family
                              : method == Method::bgwr ? rc.bgwr.kernel_family
                                                       : rc.fit.kernel_family;
  std::ifstream tin(fit_dir / "trace.csv", std::ios::binary);
  if (!tin) throw DataError("'" + fit_dir.string() + "' has no trace.csv");
  const auto draws = read_trace(tin, family, (fit_dir / "trace.csv").string());

  PredictionResult result;
  if (method == Method::gwr) {
    // local refit at each new site with the selected bandwidth
    const double h = draws.draws.front().h(0);
    for (std::size_t i = 0; i < sites.sites.size(); ++i) {
      SitePrediction sp;
      const Eigen::VectorXd b = gwr_fit_at(sites.sites[i], data, h, family, i);
      for (Index k = 0; k < b.size(); ++k) sp.beta.push_back({b(k), b(k), b(k), b(k)});
      const double y = sites.X.row(static_cast<Index>(i)).dot(b);
      sp.y = {y, y, y, y};
      result.sites.push_back(std::move(sp));
    }
  } else {
    result = predict_all(draws, {sites.sites, sites.X, rc.normalize_weights}, data);
  }
  make_dir(out);
  {
    auto f = open_output(out / "predictions.csv");
    write_predictions(f, result, sites.sites, data.p());
  }
  manifest.config = config_json(rc);
  manifest.config["method"] = to_string(method);
  manifest.seed = rc.fit.seed;
  for (const char* name : {"trace.csv", "data.csv", "config.txt"}) manifest.inputs.push_back(fit_dir / name);
  manifest.inputs.push_back(sites_path);
  manifest.write(out);
}

inline void run_bench(const BenchmarkConfig& config, const std::string& config_path, const fs::path& out,
                      Manifest manifest, std::ostream& err) {
  const auto report = run_benchmark(config, fit_method, &err);
  make_dir(out);
  {
    auto f = open_output(out / "report.csv");
    write_report_csv(f, report);
  }
  {
    auto f = open_output(out / "report.json");
    write_report_json(f, report, config);
  }
  {
    auto f = open_output(out / "raw.csv");
    write_raw_csv(f, report);
  }
  {
    auto f = open_output(out / "timings.csv");
    write_timings_csv(f, report);
  }
  manifest.seed = config.seed;
  manifest.config = config_json({config.fit, config.bgwr, config.gwr, config.normalize_weights});
  manifest.config["scenarios"] = config.scenarios;
  std::vector<std::string> methods;
  for (Method m : config.methods) methods.push_back(to_string(m));
  manifest.config["methods"] = methods;
  manifest.config["replications"] = config.replications;
  if (!config_path.empty()) manifest.inputs.push_back(config_path);
  manifest.write(out);
}

// ---- dispatch ------------------------------------------------------------

inline bool use_color(std::ostream& err) {
  return &err == &std::cerr && std::getenv("NO_COLOR") == nullptr && isatty(STDERR_FILENO);
}

inline void report_error(std::ostream& err, const std::string& msg) {
  if (use_color(err)) err << "\033[31merror:\033[0m " << msg << '\n';
  else err << "error: " << msg << '\n';
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Bayesian geographically weighted sparse regression", "bgwsr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(BGWSR_VERSION));

  int scenario = 1;
  std::uint64_t seed = 1;
  std::string out_dir;
  auto* sim = app.add_subcommand("simulate", "Generate one scenario dataset");
  sim->add_option("--scenario", scenario, "Scenario 1..5")->required()->check(CLI::Range(1, 5));
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--out", out_dir, "Output directory")->required();

  std::string method_name, data_path, config_path;
  auto* fit = app.add_subcommand("fit", "Fit one method to a dataset CSV");
  fit->add_option("--method", method_name, "bgwsr, bgwsr-ae, bgwr or gwr")->required();
  fit->add_option("--data", data_path, "Dataset CSV (s1,s2,y,x1..xp)")->required();
  fit->add_option("--config", config_path, "key = value config file");
  fit->add_option("--out", out_dir, "Output directory")->required();

  std::string fit_dir, sites_path;
  auto* pred = app.add_subcommand("predict", "Predict at new sites from a fit directory");
  pred->add_option("--fit", fit_dir, "Directory written by fit")->required();
  pred->add_option("--sites", sites_path, "Sites CSV (s1,s2,x1..xp)")->required();
  pred->add_option("--out", out_dir, "Output directory")->required();

  std::string scenarios_text = "1,2,3,4,5";
  std::string methods_text = "bgwsr-ae,bgwsr,bgwr,gwr";
  int reps = 10;
  unsigned threads = 1;
  auto* bench = app.add_subcommand("benchmark", "Replicated simulation study");
  bench->add_option("--scenarios", scenarios_text, "Comma-separated scenario ids");
  bench->add_option("--methods", methods_text, "Comma-separated method names");
  bench->add_option("--reps", reps, "Replications per scenario")->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed, "Random seed");
  bench->add_option("--config", config_path, "key = value config file");
  bench->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--out", out_dir, "Output directory")->required();

  const auto usage_text = [&] {
    for (auto* sub : {sim, fit, pred, bench})
      if (sub->parsed()) return sub->help();
    return app.help();
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << usage_text();
    return ok;
  } catch (const CLI::CallForVersion&) {
    out << BGWSR_VERSION << '\n';
    return ok;
  } catch (const CLI::ParseError& e) {
    report_error(err, e.what());
    err << usage_text();
    return usage;
  }

  Manifest manifest;
  for (int i = 0; i < argc; ++i) manifest.command.emplace_back(argv[i]);

  try {
    if (sim->parsed()) {
      run_simulate(scenario, seed, out_dir, manifest);
    } else if (fit->parsed()) {
      run_fit(parse_method_arg(method_name), data_path, config_path, out_dir, manifest);
    } else if (pred->parsed()) {
      run_predict(fit_dir, sites_path, out_dir, manifest);
    } else if (bench->parsed()) {
      BenchmarkConfig bc;
      bc.scenarios = parse_list<int>(scenarios_text, parse_scenario_id);
      bc.methods = parse_list<Method>(methods_text, parse_method_arg);
      bc.replications = reps;
      bc.seed = seed;
      bc.threads = threads;
      const RunConfig rc = load_run_config(config_path);
      bc.fit = rc.fit;
      bc.bgwr = rc.bgwr;
      bc.gwr = rc.gwr;
      bc.normalize_weights = rc.normalize_weights;
      bc.fit.validate();
      bc.bgwr.validate();
      run_bench(bc, config_path, out_dir, manifest, err);
    }
  } catch (const UsageError& e) {
    report_error(err, e.what());
    err << usage_text();
    return usage;
  } catch (const DataError& e) {
    report_error(err, e.what());
    return data;
  } catch (const GenerationFailure& e) {
    report_error(err, e.what());
    return data;
  } catch (const NumericalFailure& e) {
    report_error(err, e.what());
    return numerical;
  } catch (const IsolatedSite& e) {
    report_error(err, e.what());
    return numerical;
  } catch (const std::invalid_argument& e) {
    report_error(err, e.what());
    return usage;
  } catch (const std::exception& e) {
    report_error(err, e.what());
    return data;
  }
  return ok;
}

}  // namespace bgwsr::cli
