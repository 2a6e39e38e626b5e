#pragma once

// File formats: dataset and site CSVs, the draw trace, flat key=value
// configs and the benchmark report.

#include <Eigen/Dense>

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bgwsr/bgwr.hpp"
#include "bgwsr/errors.hpp"
#include "bgwsr/eval.hpp"
#include "bgwsr/gwr.hpp"
#include "bgwsr/prediction.hpp"
#include "bgwsr/sampler.hpp"
#include "bgwsr/spatial.hpp"

namespace bgwsr {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool is_covariate_name(std::string_view name) { return name.size() > 1 && name.front() == 'x'; }

/// Header plus numeric rows; every row must have one value per column.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    return std::nullopt;
  }
};

inline Table read_table(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file, expected a header row");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  t.columns = split_csv(line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv(line);
    if (fields.size() != t.columns.size())
      throw DataError(source + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(t.columns.size()));
    std::vector<double> values(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (fields[c].empty())
        throw DataError(source + ": row " + std::to_string(row) + " is missing a value for '" + t.columns[c] + "'");
      const auto v = parse_double(fields[c]);
      if (!v)
        throw DataError(source + ": row " + std::to_string(row) + ", column '" + t.columns[c] + "': cannot parse '" +
                        fields[c] + "'");
      values[c] = *v;
    }
    t.rows.push_back(std::move(values));
  }
  return t;
}

inline std::size_t require_column(const Table& t, std::string_view name, const std::string& source) {
  const auto c = t.column(name);
  if (!c) throw DataError(source + ": missing required column '" + std::string(name) + "'");
  return *c;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

/// Columns s1, s2, y and covariates from every other x-prefixed column, in
/// file order. Other columns are ignored.
inline SpatialDataset read_dataset(std::istream& in, const std::string& source = "dataset") {
  const auto t = detail::read_table(in, source);
  const auto c1 = detail::require_column(t, "s1", source);
  const auto c2 = detail::require_column(t, "s2", source);
  const auto cy = detail::require_column(t, "y", source);
  std::vector<std::size_t> xs;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    if (detail::is_covariate_name(t.columns[c])) xs.push_back(c);
  if (xs.empty()) throw DataError(source + ": no covariate columns (x1, x2, ...)");
  SpatialDataset d;
  const auto n = static_cast<Index>(t.rows.size());
  d.X.resize(n, static_cast<Index>(xs.size()));
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    d.locations.push_back({r[c1], r[c2]});
    d.y(i) = r[cy];
    for (std::size_t k = 0; k < xs.size(); ++k) d.X(i, static_cast<Index>(k)) = r[xs[k]];
  }
  try {
    validate(d);
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return d;
}

inline SpatialDataset load_dataset(const std::string& path) {
  auto in = detail::open_input(path);
  return read_dataset(in, path);
}

inline void write_dataset(std::ostream& os, const SpatialDataset& d) {
  os << "s1,s2,y";
  for (Index k = 1; k <= d.p(); ++k) os << ",x" << k;
  os << '\n';
  for (Index i = 0; i < d.n(); ++i) {
    const auto& s = d.locations[static_cast<std::size_t>(i)];
    os << format_double(s.s1) << ',' << format_double(s.s2) << ',' << format_double(d.y(i));
    for (Index k = 0; k < d.p(); ++k) os << ',' << format_double(d.X(i, k));
    os << '\n';
  }
}

inline void save_dataset(const std::string& path, const SpatialDataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_dataset(out, d);
}

/// Prediction sites: s1, s2 and x-prefixed covariates; a y column is
/// allowed and ignored.
struct SiteTable {
  std::vector<Location> sites;
  Eigen::MatrixXd X;
};

inline SiteTable read_sites(std::istream& in, const std::string& source = "sites") {
  const auto t = detail::read_table(in, source);
  const auto c1 = detail::require_column(t, "s1", source);
  const auto c2 = detail::require_column(t, "s2", source);
  std::vector<std::size_t> xs;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    if (detail::is_covariate_name(t.columns[c])) xs.push_back(c);
  if (t.rows.empty()) throw DataError(source + ": no prediction sites");
  SiteTable out;
  out.X.resize(static_cast<Index>(t.rows.size()), static_cast<Index>(xs.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out.sites.push_back({t.rows[i][c1], t.rows[i][c2]});
    for (std::size_t k = 0; k < xs.size(); ++k) out.X(static_cast<Index>(i), static_cast<Index>(k)) = t.rows[i][xs[k]];
  }
  return out;
}

inline void write_sites(std::ostream& os, const std::vector<Location>& sites, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd* y = nullptr) {
  os << "s1,s2";
  if (y) os << ",y";
  for (Index k = 1; k <= X.cols(); ++k) os << ",x" << k;
  os << '\n';
  for (std::size_t i = 0; i < sites.size(); ++i) {
    os << format_double(sites[i].s1) << ',' << format_double(sites[i].s2);
    if (y) os << ',' << format_double((*y)(static_cast<Index>(i)));
    for (Index k = 0; k < X.cols(); ++k) os << ',' << format_double(X(static_cast<Index>(i), k));
    os << '\n';
  }
}

// ---- trace ---------------------------------------------------------------
//
// iter, sigma_sq, lambda1_sq_1..p, lambda2_sq_1..p, h_1..n, then
// beta_k_i with k outer (beta_1_1 .. beta_1_n, beta_2_1, ...). Lambda
// columns hold nan for models without a lasso prior.

inline void write_trace(std::ostream& os, const PosteriorDraws& draws) {
  const Index n = draws.n();
  const Index p = draws.p();
  os << "iter,sigma_sq";
  for (Index k = 1; k <= p; ++k) os << ",lambda1_sq_" << k;
  for (Index k = 1; k <= p; ++k) os << ",lambda2_sq_" << k;
  for (Index i = 1; i <= n; ++i) os << ",h_" << i;
  for (Index k = 1; k <= p; ++k)
    for (Index i = 1; i <= n; ++i) os << ",beta_" << k << '_' << i;
  os << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& d : draws.draws) {
    os << d.iter << ',' << format_double(d.sigma_sq);
    for (Index k = 0; k < p; ++k) os << ',' << format_double(d.lambda1_sq.size() ? d.lambda1_sq(k) : nan);
    for (Index k = 0; k < p; ++k) os << ',' << format_double(d.lambda2_sq.size() ? d.lambda2_sq(k) : nan);
    for (Index i = 0; i < n; ++i) os << ',' << format_double(d.h(i));
    for (Index k = 0; k < p; ++k)
      for (Index i = 0; i < n; ++i) os << ',' << format_double(d.beta(i, k));
    os << '\n';
  }
}

inline PosteriorDraws read_trace(std::istream& in, KernelFamily family, const std::string& source = "trace") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty trace");
  const auto header = detail::split_csv(line);
  Index p = 0, n = 0;
  for (const auto& c : header) {
    if (c.rfind("lambda1_sq_", 0) == 0) ++p;
    if (c.rfind("h_", 0) == 0) ++n;
  }
  const std::size_t expected = 2 + 2 * static_cast<std::size_t>(p) + static_cast<std::size_t>(n) +
                               static_cast<std::size_t>(n * p);
  if (p < 1 || n < 1 || header.size() != expected || header[0] != "iter" || header[1] != "sigma_sq")
    throw DataError(source + ": unrecognized trace header");
  PosteriorDraws out;
  out.kernel_family = family;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto f = detail::split_csv(line);
    if (f.size() != expected) throw DataError(source + ": row " + std::to_string(row) + " has the wrong field count");
    std::vector<double> v(f.size());
    for (std::size_t c = 0; c < f.size(); ++c) {
      const std::string_view s = f[c];
      if (s == "nan") {
        v[c] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto x = detail::parse_double(s);
      if (!x) throw DataError(source + ": row " + std::to_string(row) + ", column '" + header[c] + "' is not a number");
      v[c] = *x;
    }
    Draw d;
    d.iter = static_cast<int>(v[0]);
    d.sigma_sq = v[1];
    std::size_t c = 2;
    d.lambda1_sq.resize(p);
    d.lambda2_sq.resize(p);
    for (Index k = 0; k < p; ++k) d.lambda1_sq(k) = v[c++];
    for (Index k = 0; k < p; ++k) d.lambda2_sq(k) = v[c++];
    if (d.lambda1_sq.array().isNaN().all() && d.lambda2_sq.array().isNaN().all()) {
      d.lambda1_sq.resize(0);
      d.lambda2_sq.resize(0);
    }
    d.h.resize(n);
    for (Index i = 0; i < n; ++i) d.h(i) = v[c++];
    d.beta.resize(n, p);
    for (Index k = 0; k < p; ++k)
      for (Index i = 0; i < n; ++i) d.beta(i, k) = v[c++];
    out.draws.push_back(std::move(d));
  }
  if (out.draws.empty()) throw DataError(source + ": trace has no draws");
  return out;
}

/// Per-site posterior summaries: mean, median, lo95, hi95 for each beta_k.
inline void write_coefficients(std::ostream& os, const PosteriorDraws& draws, const SpatialDataset& data) {
  const Index n = draws.n();
  const Index p = draws.p();
  os << "site,s1,s2";
  for (Index k = 1; k <= p; ++k)
    os << ",beta" << k << "_mean,beta" << k << "_median,beta" << k << "_lo95,beta" << k << "_hi95";
  os << '\n';
  std::vector<double> col(draws.draws.size());
  for (Index i = 0; i < n; ++i) {
    const auto& s = data.locations[static_cast<std::size_t>(i)];
    os << i + 1 << ',' << format_double(s.s1) << ',' << format_double(s.s2);
    for (Index k = 0; k < p; ++k) {
      for (std::size_t t = 0; t < col.size(); ++t) col[t] = draws.draws[t].beta(i, k);
      const auto sm = summarize(col);
      os << ',' << format_double(sm.mean) << ',' << format_double(sm.median) << ',' << format_double(sm.lo) << ','
         << format_double(sm.hi);
    }
    os << '\n';
  }
}

inline void write_predictions(std::ostream& os, const PredictionResult& result, const std::vector<Location>& sites,
                              Index p) {
  os << "s1,s2";
  for (Index k = 1; k <= p; ++k)
    os << ",beta" << k << "_mean,beta" << k << "_median,beta" << k << "_lo95,beta" << k << "_hi95";
  os << ",y_mean,y_median,y_lo95,y_hi95,available\n";
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& r = result.sites[i];
    os << format_double(sites[i].s1) << ',' << format_double(sites[i].s2);
    for (Index k = 0; k < p; ++k) {
      const Summary sm = r.available ? r.beta[static_cast<std::size_t>(k)] : Summary{};
      os << ',' << format_double(sm.mean) << ',' << format_double(sm.median) << ',' << format_double(sm.lo) << ','
         << format_double(sm.hi);
    }
    const Summary y = r.available ? r.y : Summary{};
    os << ',' << format_double(y.mean) << ',' << format_double(y.median) << ',' << format_double(y.lo) << ','
       << format_double(y.hi) << ',' << (r.available ? 1 : 0) << '\n';
  }
}

// ---- key=value configs ---------------------------------------------------

/// `key = value` lines; `#` starts a comment. Later keys override earlier.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source = "config") {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw DataError(source + ": line " + std::to_string(lineno) + " is not of the form key = value");
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    if (key.empty()) throw DataError(source + ": line " + std::to_string(lineno) + " has an empty key");
    kv[std::string(key)] = std::string(value);
  }
  return kv;
}

/// Everything one run needs; shared keys (t_max, burn_in, thin, seed,
/// kernel_family, sigma_h_sq, initial_bandwidth, sample_bandwidth) apply to
/// both the BGWSR and BGWR chains.
struct RunConfig {
  FitConfig fit;
  BgwrConfig bgwr;
  GwrConfig gwr;
  bool normalize_weights = false;
};

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  const auto x = parse_double(v);
  if (!x) throw DataError("config: '" + key + "' expects a number, got '" + v + "'");
  return *x;
}

inline long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto s = trim(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw DataError("config: '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: '" + key + "' expects true or false, got '" + v + "'");
}

inline std::optional<double> to_optional(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  return to_double(key, v);
}

// "0.1,0.2,0.5" or "from:step:to"
inline std::vector<double> to_grid(const std::string& key, const std::string& v) {
  std::vector<double> grid;
  if (v.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(v);
    std::string piece;
    while (std::getline(ss, piece, ':')) parts.push_back(to_double(key, piece));
    if (parts.size() != 3 || !(parts[1] > 0.0)) throw DataError("config: '" + key + "' expects from:step:to");
    const auto count = static_cast<long long>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
    for (long long i = 0; i <= count; ++i) grid.push_back(parts[0] + parts[1] * static_cast<double>(i));
  } else {
    for (const auto& f : split_csv(v)) grid.push_back(to_double(key, f));
  }
  if (grid.empty()) throw DataError("config: '" + key + "' is empty");
  return grid;
}

inline std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "auto"; }

}  // namespace detail

inline void apply_config(RunConfig& c, const std::map<std::string, std::string>& kv) {
  using namespace detail;
  for (const auto& [key, v] : kv) {
    if (key == "r") c.fit.r = to_double(key, v);
    else if (key == "q") c.fit.q = to_double(key, v);
    else if (key == "r1") c.fit.r1 = to_double(key, v);
    else if (key == "q1") c.fit.q1 = to_double(key, v);
    else if (key == "r2") c.fit.r2 = to_double(key, v);
    else if (key == "q2") c.fit.q2 = to_double(key, v);
    else if (key == "a") c.fit.a = to_double(key, v);
    else if (key == "sigma_h_sq") c.fit.sigma_h_sq = c.bgwr.sigma_h_sq = to_optional(key, v);
    else if (key == "t_max") c.fit.t_max = c.bgwr.t_max = static_cast<int>(to_int(key, v));
    else if (key == "burn_in") c.fit.burn_in = c.bgwr.burn_in = static_cast<int>(to_int(key, v));
    else if (key == "thin") c.fit.thin = c.bgwr.thin = static_cast<int>(to_int(key, v));
    else if (key == "seed") c.fit.seed = c.bgwr.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "adaptive_bandwidth") c.fit.adaptive_bandwidth = to_bool(key, v);
    else if (key == "kernel_family") {
      try {
        c.fit.kernel_family = c.bgwr.kernel_family = c.gwr.kernel_family = parse_kernel_family(v);
      } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: ") + e.what());
      }
    } else if (key == "initial_bandwidth") c.fit.initial_bandwidth = c.bgwr.initial_bandwidth = to_optional(key, v);
    else if (key == "sample_bandwidth") c.fit.sample_bandwidth = c.bgwr.sample_bandwidth = to_bool(key, v);
    else if (key == "r_bgwr") c.bgwr.r_bgwr = to_double(key, v);
    else if (key == "q_bgwr") c.bgwr.q_bgwr = to_double(key, v);
    else if (key == "h_upper") c.bgwr.h_upper = to_double(key, v);
    else if (key == "epsilon") c.bgwr.epsilon = to_double(key, v);
    else if (key == "bandwidth_grid") c.gwr.bandwidth_grid = to_grid(key, v);
    else if (key == "folds") c.gwr.folds = static_cast<int>(to_int(key, v));
    else if (key == "normalize_weights") c.normalize_weights = to_bool(key, v);
    else throw DataError("config: unknown key '" + key + "'");
  }
}

inline RunConfig read_config(std::istream& in, const std::string& source = "config") {
  RunConfig c;
  apply_config(c, parse_key_values(in, source));
  return c;
}

/// Fully resolved configuration, in a form read_config accepts.
inline void write_config(std::ostream& os, const RunConfig& c) {
  using detail::optional_text;
  os << "r = " << format_double(c.fit.r) << "\nq = " << format_double(c.fit.q) << "\nr1 = " << format_double(c.fit.r1)
     << "\nq1 = " << format_double(c.fit.q1) << "\nr2 = " << format_double(c.fit.r2)
     << "\nq2 = " << format_double(c.fit.q2) << "\na = " << format_double(c.fit.a)
     << "\nsigma_h_sq = " << optional_text(c.fit.sigma_h_sq) << "\nt_max = " << c.fit.t_max
     << "\nburn_in = " << c.fit.burn_in << "\nthin = " << c.fit.thin << "\nseed = " << c.fit.seed
     << "\nadaptive_bandwidth = " << (c.fit.adaptive_bandwidth ? "true" : "false")
     << "\nkernel_family = " << to_string(c.fit.kernel_family)
     << "\ninitial_bandwidth = " << optional_text(c.fit.initial_bandwidth)
     << "\nsample_bandwidth = " << (c.fit.sample_bandwidth ? "true" : "false")
     << "\nr_bgwr = " << format_double(c.bgwr.r_bgwr) << "\nq_bgwr = " << format_double(c.bgwr.q_bgwr)
     << "\nh_upper = " << format_double(c.bgwr.h_upper) << "\nepsilon = " << format_double(c.bgwr.epsilon)
     << "\nbandwidth_grid = ";
  for (std::size_t i = 0; i < c.gwr.bandwidth_grid.size(); ++i)
    os << (i ? "," : "") << format_double(c.gwr.bandwidth_grid[i]);
  os << "\nfolds = " << c.gwr.folds << "\nnormalize_weights = " << (c.normalize_weights ? "true" : "false") << '\n';
}

inline nlohmann::ordered_json config_json(const RunConfig& c) {
  std::stringstream ss;
  write_config(ss, c);
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : parse_key_values(ss)) j[k] = v;
  return j;
}

// ---- benchmark report ----------------------------------------------------

inline void write_report_json(std::ostream& os, const EvalReport& report, const BenchmarkConfig& config) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["replications"] = report.replications;
  j["seed"] = config.seed;
  j["scenarios"] = config.scenarios;
  ordered_json methods = ordered_json::array();
  for (Method m : config.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  RunConfig rc{config.fit, config.bgwr, config.gwr, config.normalize_weights};
  j["config"] = config_json(rc);
  j["metrics"] = report.metrics;
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row;
    row["scenario"] = r.scenario;
    row["method"] = to_string(r.method);
    row["completed"] = r.completed;
    row["failed"] = r.failed;
    ordered_json med = ordered_json::object();
    for (std::size_t k = 0; k < report.metrics.size(); ++k) {
      const double v = r.medians[k];
      if (std::isfinite(v)) med[report.metrics[k]] = v;
      else med[report.metrics[k]] = nullptr;
    }
    row["medians"] = med;
    rows.push_back(row);
  }
  j["rows"] = rows;
  os << j.dump(2) << '\n';
}

}  // namespace bgwsr
