#include "nngp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "nngp/error.hpp"
#include "nngp/neighbor.hpp"
#include "nngp/nn_factor.hpp"

namespace nngp {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view f = line.substr(start, comma == std::string_view::npos ? comma : comma - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    out.push_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::io, path + ": empty file");
  for (auto f : split_fields(line)) t.header.emplace_back(f);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != t.header.size())
      throw Error(ErrorKind::io, path + ": row " + std::to_string(row) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(t.header.size()));
    std::vector<double> values(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j)
      if (!parse_double(fields[j], values[j]))
        throw Error(ErrorKind::io, path + ": row " + std::to_string(row) + " column " +
                                       t.header[j] + ": not a number '" + std::string(fields[j]) +
                                       "'");
    t.rows.push_back(std::move(values));
  }
  return t;
}

std::size_t column_of(const Table& t, const std::string& name, const std::string& path) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw Error(ErrorKind::io, path + ": missing column " + name);
  return static_cast<std::size_t>(it - t.header.begin());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

// Groups of row indices sharing exactly the same coordinate, in order of
// first appearance; singletons included.
std::vector<std::vector<std::size_t>> coordinate_groups(const std::vector<Point>& coords) {
  std::vector<std::size_t> idx(coords.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (coords[a].x != coords[b].x) return coords[a].x < coords[b].x;
    return coords[a].y < coords[b].y;
  });
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k + 1;
    while (e < idx.size() && coords[idx[e]] == coords[idx[k]]) ++e;
    std::vector<std::size_t> g(idx.begin() + static_cast<std::ptrdiff_t>(k),
                               idx.begin() + static_cast<std::ptrdiff_t>(e));
    std::sort(g.begin(), g.end());
    groups.push_back(std::move(g));
    k = e;
  }
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

}  // namespace

void SpatialDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(coords.size());
  if (y.size() != n || X.rows() != n)
    throw Error(ErrorKind::dimension, "dataset sizes disagree");
  if (X.cols() < 1) throw Error(ErrorKind::dimension, "dataset needs at least one covariate");
  if (!covariate_names.empty() && covariate_names.size() != static_cast<std::size_t>(X.cols()))
    throw Error(ErrorKind::dimension, "covariate names do not match X");
  if (true_w && true_w->size() != n) throw Error(ErrorKind::dimension, "true w has wrong length");
  if (!y.allFinite() || !X.allFinite()) throw Error(ErrorKind::numerical, "dataset has non-finite values");
  for (const auto& p : coords)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(ErrorKind::numerical, "dataset has non-finite coordinates");
  for (const auto& g : coordinate_groups(coords))
    if (g.size() > 1)
      throw DuplicateLocationError(g[0], g[1],
                                   "duplicate coordinates at rows " + std::to_string(g[0] + 1) +
                                       " and " + std::to_string(g[1] + 1));
}

SpatialDataset SpatialDataset::subset(std::span<const std::size_t> rows) const {
  SpatialDataset out;
  const auto k = static_cast<Eigen::Index>(rows.size());
  out.coords.reserve(rows.size());
  out.y.resize(k);
  out.X.resize(k, X.cols());
  if (true_w) out.true_w = Eigen::VectorXd(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    if (i >= coords.size()) throw Error(ErrorKind::dimension, "subset row out of range");
    out.coords.push_back(coords[i]);
    out.y[r] = y[static_cast<Eigen::Index>(i)];
    out.X.row(r) = X.row(static_cast<Eigen::Index>(i));
    if (true_w) (*out.true_w)[r] = (*true_w)[static_cast<Eigen::Index>(i)];
  }
  out.covariate_names = covariate_names;
  return out;
}

PredictionSites read_sites(const std::string& path, const DatasetSchema& schema) {
  const Table t = read_table(path);
  const std::size_t cx = column_of(t, schema.coord_x, path);
  const std::size_t cy = column_of(t, schema.coord_y, path);
  std::optional<std::size_t> cr;
  if (auto it = std::find(t.header.begin(), t.header.end(), schema.response); it != t.header.end())
    cr = static_cast<std::size_t>(it - t.header.begin());

  std::vector<std::size_t> cov_cols;
  if (schema.covariates.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == cx || j == cy || (cr && j == *cr) || t.header[j] == schema.true_w) continue;
      if (schema.add_intercept && t.header[j] == "intercept") continue;
      cov_cols.push_back(j);
    }
  } else {
    for (const auto& c : schema.covariates) cov_cols.push_back(column_of(t, c, path));
  }
  const Eigen::Index off = schema.add_intercept ? 1 : 0;
  const auto p = off + static_cast<Eigen::Index>(cov_cols.size());
  if (p == 0) throw Error(ErrorKind::configuration, path + ": no covariate columns");

  const std::size_t n = t.rows.size();
  PredictionSites s;
  s.coords.resize(n);
  s.X.resize(static_cast<Eigen::Index>(n), p);
  if (cr) s.y = Eigen::VectorXd(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& row = t.rows[i];
    s.coords[i] = {row[cx], row[cy]};
    if (off) s.X(r, 0) = 1.0;
    for (std::size_t j = 0; j < cov_cols.size(); ++j) s.X(r, off + static_cast<Eigen::Index>(j)) = row[cov_cols[j]];
    if (cr) (*s.y)[r] = row[*cr];
  }
  return s;
}

SpatialDataset read_dataset(const std::string& path, const DatasetSchema& schema) {
  const Table t = read_table(path);
  const std::size_t cx = column_of(t, schema.coord_x, path);
  const std::size_t cy = column_of(t, schema.coord_y, path);
  const std::size_t cr = column_of(t, schema.response, path);
  std::optional<std::size_t> cw;
  if (auto it = std::find(t.header.begin(), t.header.end(), schema.true_w); it != t.header.end())
    cw = static_cast<std::size_t>(it - t.header.begin());

  std::vector<std::size_t> cov_cols;
  std::vector<std::string> names;
  if (schema.add_intercept) names.emplace_back("intercept");
  if (schema.covariates.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == cx || j == cy || j == cr || (cw && j == *cw)) continue;
      if (schema.add_intercept && t.header[j] == "intercept") continue;
      cov_cols.push_back(j);
      names.push_back(t.header[j]);
    }
  } else {
    for (const auto& c : schema.covariates) {
      cov_cols.push_back(column_of(t, c, path));
      names.push_back(c);
    }
  }
  if (names.empty()) throw Error(ErrorKind::configuration, path + ": no covariate columns");

  const std::size_t n = t.rows.size();
  SpatialDataset d;
  d.coords.resize(n);
  d.y.resize(static_cast<Eigen::Index>(n));
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  if (cw) d.true_w = Eigen::VectorXd(static_cast<Eigen::Index>(n));
  const Eigen::Index off = schema.add_intercept ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& row = t.rows[i];
    d.coords[i] = {row[cx], row[cy]};
    d.y[r] = row[cr];
    if (schema.add_intercept) d.X(r, 0) = 1.0;
    for (std::size_t j = 0; j < cov_cols.size(); ++j)
      d.X(r, off + static_cast<Eigen::Index>(j)) = row[cov_cols[j]];
    if (cw) (*d.true_w)[r] = row[*cw];
  }
  d.covariate_names = std::move(names);

  const auto groups = coordinate_groups(d.coords);
  if (groups.size() != n) {
    if (!schema.average_duplicates) {
      for (const auto& g : groups)
        if (g.size() > 1)
          throw DuplicateLocationError(g[0], g[1],
                                       path + ": duplicate coordinates at rows " +
                                           std::to_string(g[0] + 1) + " and " +
                                           std::to_string(g[1] + 1));
    }
    SpatialDataset avg;
    const auto k = static_cast<Eigen::Index>(groups.size());
    avg.y.resize(k);
    avg.X.resize(k, d.X.cols());
    if (d.true_w) avg.true_w = Eigen::VectorXd(k);
    for (Eigen::Index g = 0; g < k; ++g) {
      const auto& rows = groups[static_cast<std::size_t>(g)];
      const double w = 1.0 / static_cast<double>(rows.size());
      avg.coords.push_back(d.coords[rows[0]]);
      avg.y[g] = 0.0;
      avg.X.row(g).setZero();
      if (d.true_w) (*avg.true_w)[g] = 0.0;
      for (auto i : rows) {
        const auto r = static_cast<Eigen::Index>(i);
        avg.y[g] += w * d.y[r];
        avg.X.row(g) += w * d.X.row(r);
        if (d.true_w) (*avg.true_w)[g] += w * (*d.true_w)[r];
      }
    }
    avg.covariate_names = d.covariate_names;
    d = std::move(avg);
  }
  d.validate();
  return d;
}

void write_dataset(const std::string& path, const SpatialDataset& data) {
  auto out = open_out(path);
  Eigen::Index first = 0;
  if (!data.covariate_names.empty() && data.covariate_names.front() == "intercept") first = 1;
  out << "coord_x,coord_y,y";
  for (Eigen::Index j = first; j < data.X.cols(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    out << ',' << (u < data.covariate_names.size() ? data.covariate_names[u] : "x" + std::to_string(j));
  }
  if (data.true_w) out << ",w";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << fmt17(data.coords[i].x) << ',' << fmt17(data.coords[i].y) << ',' << fmt17(data.y[r]);
    for (Eigen::Index j = first; j < data.X.cols(); ++j) out << ',' << fmt17(data.X(r, j));
    if (data.true_w) out << ',' << fmt17((*data.true_w)[r]);
    out << '\n';
  }
  finish(out, path);
}

DataSplit split(const SpatialDataset& data, std::size_t holdout, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (holdout == 0 || holdout >= n)
    throw Error(ErrorKind::configuration, "holdout size must lie strictly between 0 and n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, 0x5EED);
  // Fisher-Yates with an explicit uniform draw keeps the split identical
  // across standard library implementations.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::uint64_t j = rng() % (i + 1);
    std::swap(idx[i], idx[j]);
  }
  DataSplit s;
  s.holdout_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(holdout));
  s.train_rows.assign(idx.begin() + static_cast<std::ptrdiff_t>(holdout), idx.end());
  std::sort(s.holdout_rows.begin(), s.holdout_rows.end());
  std::sort(s.train_rows.begin(), s.train_rows.end());
  s.train = data.subset(s.train_rows);
  s.holdout = data.subset(s.holdout_rows);
  return s;
}

DataSplit split_fraction(const SpatialDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::configuration, "holdout fraction must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  return split(data, k, seed);
}

void SimulationSpec::validate() const {
  if (n < 1) throw Error(ErrorKind::configuration, "simulation needs n >= 1");
  if (!(x_min < x_max) || !(y_min < y_max))
    throw Error(ErrorKind::configuration, "simulation box is empty");
  if (beta.size() < 1) throw Error(ErrorKind::configuration, "simulation needs at least one beta");
  if (!(params.sigma2 >= 0.0) || !(params.tau2 >= 0.0) || !(params.phi > 0.0) || !(params.nu > 0.0))
    throw Error(ErrorKind::parameter_domain, "simulation covariance parameters out of range");
  if (sim_m < 1) throw Error(ErrorKind::configuration, "simulation m must be >= 1");
}

SpatialDataset simulate(const SimulationSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, 0);
  std::uniform_real_distribution<double> ux(spec.x_min, spec.x_max);
  std::uniform_real_distribution<double> uy(spec.y_min, spec.y_max);
  NormalSource normal(rng);

  const std::size_t n = spec.n;
  const auto nn = static_cast<Eigen::Index>(n);
  const auto p = spec.beta.size();
  SpatialDataset d;
  d.coords.resize(n);
  for (auto& pt : d.coords) {
    pt.x = ux(rng);
    pt.y = uy(rng);
  }
  d.X.resize(nn, p);
  for (Eigen::Index i = 0; i < nn; ++i) {
    d.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) d.X(i, j) = normal();
  }
  d.covariate_names.push_back("intercept");
  for (Eigen::Index j = 1; j < p; ++j) d.covariate_names.push_back("x" + std::to_string(j));

  Eigen::VectorXd w = Eigen::VectorXd::Zero(nn);
  if (spec.params.sigma2 > 0.0) {
    CovarianceParams cp = spec.params;
    cp.tau2 = 0.0;
    const CovarianceModel model(cp);
    if (n <= spec.dense_cap) {
      const Eigen::MatrixXd c = cov_block(d.coords, d.coords, model, false);
      Eigen::LLT<Eigen::MatrixXd> llt(c);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::factorization, "simulation covariance is not positive definite");
      Eigen::VectorXd z(nn);
      for (Eigen::Index i = 0; i < nn; ++i) z[i] = normal();
      w = llt.matrixL() * z;
    } else {
      auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(d.coords, spec.sim_m));
      std::vector<Point> ordered(n);
      for (std::size_t k = 0; k < n; ++k) ordered[k] = d.coords[graph->order()[k]];
      const NNFactor factor = build_factor(CoordinateCovariance(ordered, model, false), graph);
      const Eigen::VectorXd wo = sample_from_factor(factor, normal);
      for (std::size_t k = 0; k < n; ++k)
        w[static_cast<Eigen::Index>(graph->order()[k])] = wo[static_cast<Eigen::Index>(k)];
    }
  }
  const double tau = std::sqrt(spec.params.tau2);
  d.y = d.X * spec.beta + w;
  for (Eigen::Index i = 0; i < nn; ++i) d.y[i] += tau * normal();
  d.true_w = std::move(w);
  return d;
}

void write_samples(const std::string& path, const PosteriorSamples& s) {
  auto out = open_out(path);
  out << "chain,iter";
  for (const auto& name : s.names) out << ',' << name;
  out << '\n';
  for (std::size_t c = 0; c < s.chains.size(); ++c) {
    const auto& m = s.chains[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const std::size_t iter = s.burn_in + (static_cast<std::size_t>(r) + 1) * s.thin;
      out << c << ',' << iter;
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << fmt17(m(r, j));
      out << '\n';
    }
  }
  finish(out, path);
}

PosteriorSamples read_samples(const std::string& path) {
  const Table t = read_table(path);
  if (t.header.size() < 3 || t.header[0] != "chain" || t.header[1] != "iter")
    throw Error(ErrorKind::io, path + ": expected chain,iter,... header");
  PosteriorSamples s;
  s.names.assign(t.header.begin() + 2, t.header.end());
  std::map<std::size_t, std::vector<const std::vector<double>*>> by_chain;
  for (const auto& row : t.rows) by_chain[static_cast<std::size_t>(row[0])].push_back(&row);
  std::size_t per = 0;
  for (const auto& [c, rows] : by_chain) {
    if (per == 0) per = rows.size();
    if (rows.size() != per) throw Error(ErrorKind::io, path + ": chains have unequal lengths");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(per), static_cast<Eigen::Index>(s.names.size()));
    for (std::size_t r = 0; r < per; ++r)
      for (std::size_t j = 0; j < s.names.size(); ++j)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = (*rows[r])[j + 2];
    s.chains.push_back(std::move(m));
  }
  if (!t.rows.empty()) {
    const auto& first = by_chain.begin()->second;
    const auto it0 = static_cast<std::size_t>((*first.front())[1]);
    s.thin = first.size() > 1 ? static_cast<std::size_t>((*first[1])[1]) - it0 : 1;
    s.burn_in = it0 - s.thin;
    s.n_iter = s.burn_in + per * s.thin;
  }
  return s;
}

void write_predictions(const std::string& path, std::span<const PredictionRecord> records) {
  auto out = open_out(path);
  const bool with_t = !records.empty() && records.front().t.has_value();
  out << "site,s_x,s_y,mean,sd,median,q025,q975";
  if (with_t) out << ",t_location,t_scale,t_dof";
  out << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out << i << ',' << fmt17(r.site.x) << ',' << fmt17(r.site.y) << ',' << fmt17(r.summary.mean)
        << ',' << fmt17(r.summary.sd) << ',' << fmt17(r.summary.median) << ','
        << fmt17(r.summary.q025) << ',' << fmt17(r.summary.q975);
    if (with_t) {
      if (!r.t) throw Error(ErrorKind::state, "mixed prediction records");
      out << ',' << fmt17(r.t->location) << ',' << fmt17(r.t->scale) << ',' << fmt17(r.t->dof);
    }
    out << '\n';
  }
  finish(out, path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  const Table t = read_table(path);
  const std::size_t sx = column_of(t, "s_x", path), sy = column_of(t, "s_y", path);
  const std::size_t mean = column_of(t, "mean", path), sd = column_of(t, "sd", path);
  const std::size_t med = column_of(t, "median", path);
  const std::size_t lo = column_of(t, "q025", path), hi = column_of(t, "q975", path);
  const bool with_t = std::find(t.header.begin(), t.header.end(), "t_dof") != t.header.end();
  std::vector<PredictionRecord> out;
  for (const auto& row : t.rows) {
    PredictionRecord r;
    r.site = {row[sx], row[sy]};
    r.summary = {row[mean], row[sd], row[med], row[lo], row[hi]};
    if (with_t)
      r.t = StudentTForecast{row[column_of(t, "t_location", path)],
                             row[column_of(t, "t_scale", path)], row[column_of(t, "t_dof", path)]};
    out.push_back(r);
  }
  return out;
}

void write_prediction_draws(const std::string& path, const Eigen::MatrixXd& draws) {
  auto out = open_out(path);
  out << "site";
  for (Eigen::Index j = 0; j < draws.cols(); ++j) out << ",d" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < draws.cols(); ++j) out << ',' << fmt17(draws(i, j));
    out << '\n';
  }
  finish(out, path);
}

Eigen::MatrixXd read_prediction_draws(const std::string& path) {
  const Table t = read_table(path);
  if (t.header.empty() || t.header[0] != "site") throw Error(ErrorKind::io, path + ": expected site,d0,...");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()),
                    static_cast<Eigen::Index>(t.header.size() - 1));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 1; j < t.header.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = t.rows[i][j];
  return m;
}

void write_report(const std::string& path, const RunReport& report) {
  nlohmann::ordered_json j;
  j["command"] = report.command;
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  j["seeds"] = report.seeds;
  if (report.score) {
    const auto& s = *report.score;
    j["score"] = {{"crps", s.crps}, {"rmspe", s.rmspe}, {"pic_95", s.pic_95},
                  {"piw_95", s.piw_95}, {"n_holdout", s.n_holdout}};
  }
  for (const auto& sec : report.sections) {
    auto& o = j[sec.name] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : sec.text) o[k] = v;
    for (const auto& [k, v] : sec.numbers) o[k] = v;
  }
  auto& tm = j["timings"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.timings) tm[k] = v;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

}  // namespace nngp
