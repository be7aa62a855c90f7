#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "error.hpp"
#include "linalg.hpp"

namespace fdcal {

Dataset::Dataset(std::vector<Observation> observations) {
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    if (!std::isfinite(o.density) || !std::isfinite(o.speed) || o.density < 0.0 || o.speed < 0.0) {
      throw InvalidArgument("observation " + std::to_string(i) +
                            " must have finite, non-negative density and speed");
    }
  }
  std::stable_sort(observations.begin(), observations.end(),
                   [](const Observation& a, const Observation& b) { return a.density < b.density; });
  const auto n = static_cast<Eigen::Index>(observations.size());
  density_.resize(n);
  speed_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    density_[i] = observations[static_cast<std::size_t>(i)].density;
    speed_[i] = observations[static_cast<std::size_t>(i)].speed;
  }
}

Observation Dataset::at(std::size_t i) const {
  if (i >= size()) throw InvalidArgument("observation index out of range");
  const auto j = static_cast<Eigen::Index>(i);
  return {density_[j], speed_[j]};
}

double Dataset::min_density() const {
  if (empty()) throw InvalidArgument("empty dataset");
  return density_[0];
}

double Dataset::max_density() const {
  if (empty()) throw InvalidArgument("empty dataset");
  return density_[density_.size() - 1];
}

double Dataset::speed_variance() const {
  if (empty()) throw InvalidArgument("empty dataset");
  return (speed_.array() - speed_.mean()).square().mean();
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("CSV header has no column named '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

LoadedDataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError("CSV input has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_row(line);
  const auto dcol = column_index(header, schema.density_column);
  const auto scol = column_index(header, schema.speed_column);

  LoadStats stats;
  std::vector<Observation> obs;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++stats.raw_rows;
    const auto fields = split_row(line);
    double k = 0.0, v = 0.0;
    if (fields.size() <= std::max(dcol, scol) || !parse_double(fields[dcol], k) ||
        !parse_double(fields[scol], v)) {
      throw ParseError("unparseable CSV row at line " + std::to_string(line_no));
    }
    if (!std::isfinite(k) || !std::isfinite(v) || k < 0.0 || v < 0.0) {
      ++stats.rejected_rows;
      continue;
    }
    obs.push_back({k, v});
  }
  stats.accepted_rows = obs.size();
  if (stats.raw_rows > 0 &&
      static_cast<double>(stats.rejected_rows) > 0.01 * static_cast<double>(stats.raw_rows)) {
    throw ParseError(std::to_string(stats.rejected_rows) + " of " + std::to_string(stats.raw_rows) +
                     " rows rejected (negative or non-finite), above the 1% limit");
  }
  return {Dataset(std::move(obs)), stats};
}

LoadedDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, schema);
}

void write_csv(const Dataset& ds, const std::string& path, const CsvSchema& schema) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << schema.density_column << ',' << schema.speed_column << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto o = ds.at(i);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", o.density, o.speed);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::size_t> histogram(const Dataset& ds, const std::vector<double>& edges) {
  if (edges.size() < 2) throw InvalidArgument("histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw InvalidArgument("histogram edges must be strictly ascending");
  }
  const auto& k = ds.densities();
  const double* first = k.data();
  const double* last = k.data() + k.size();
  std::vector<std::size_t> counts(edges.size() - 1);
  for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
    const double* lo = std::lower_bound(first, last, edges[j]);
    const bool closed = j + 2 == edges.size();
    const double* hi = closed ? std::upper_bound(first, last, edges[j + 1])
                              : std::lower_bound(first, last, edges[j + 1]);
    counts[j] = static_cast<std::size_t>(hi - lo);
  }
  return counts;
}

SynthResult synthesize(const SynthSpec& spec) {
  if (spec.n < 2) throw InvalidArgument("synthesize needs n >= 2");
  if (!std::isfinite(spec.noise_sd) || spec.noise_sd < 0.0) {
    throw InvalidArgument("noise_sd must be finite and non-negative");
  }
  const auto& s = spec.sampler;
  if (!(s.k_min >= 0.0 && s.k_min < s.k_split && s.k_split < s.k_max) ||
      !(s.low_weight >= 0.0 && s.low_weight <= 1.0)) {
    throw InvalidArgument("density sampler needs 0 <= k_min < k_split < k_max and weight in [0,1]");
  }
  if (spec.truth.size() != param_count(spec.truth.kind())) {
    throw InvalidArgument("truth parameters do not match the model");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> k(spec.n);
  for (auto& ki : k) {
    const bool low = unit(rng) < s.low_weight;
    const double u = unit(rng);
    ki = low ? s.k_min + u * (s.k_split - s.k_min) : s.k_split + u * (s.k_max - s.k_split);
  }
  std::sort(k.begin(), k.end());
  const Eigen::Map<const Eigen::VectorXd> kv(k.data(), static_cast<Eigen::Index>(k.size()));

  SynthResult result;
  result.residual.assign(spec.n, 0.0);
  if (spec.residual_kernel) {
    Eigen::MatrixXd cov = spec.residual_kernel->cross_cov(kv, kv);
    // the sample is dense in density, so the kernel matrix is numerically singular
    const double base = 1e-8 * spec.residual_kernel->variance();
    cov.diagonal().array() += base;
    const auto chol = chol_jitter(cov);
    result.jitter = base + chol.jitter;
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd draws(kv.size());
    for (auto& d : draws) d = z(rng);
    const Eigen::VectorXd g = chol.lower.triangularView<Eigen::Lower>() * draws;
    for (std::size_t i = 0; i < spec.n; ++i) result.residual[i] = g[static_cast<Eigen::Index>(i)];
  }

  std::normal_distribution<double> noise(0.0, spec.noise_sd > 0.0 ? spec.noise_sd : 1.0);
  std::vector<Observation> obs(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double v = evaluate(spec.truth, k[i], spec.shift) + result.residual[i];
    if (spec.noise_sd > 0.0) v += noise(rng);
    if (v < 0.0) {
      v = 0.0;
      result.clamped.push_back(i);
    }
    obs[i] = {k[i], v};
  }
  result.data = Dataset(std::move(obs));
  return result;
}

nlohmann::json ground_truth_json(const SynthSpec& spec, const SynthResult& result) {
  nlohmann::json j;
  j["model"] = std::string(model_name(spec.truth.kind()));
  j["params"] = to_json(spec.truth);
  j["k_s"] = spec.shift.k_s;
  j["residual_kernel"] = spec.residual_kernel ? to_json(*spec.residual_kernel) : nlohmann::json();
  j["noise_sd"] = spec.noise_sd;
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  j["sampler"] = {{"low_weight", spec.sampler.low_weight},
                  {"k_min", spec.sampler.k_min},
                  {"k_split", spec.sampler.k_split},
                  {"k_max", spec.sampler.k_max}};
  j["jitter"] = result.jitter;
  j["clamped_count"] = result.clamped.size();
  const auto counts = histogram(result.data, {spec.sampler.k_min, spec.sampler.k_split, spec.sampler.k_max});
  j["share_below_split"] = static_cast<double>(counts[0]) / static_cast<double>(result.data.size());
  return j;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec spec;
  const auto kind = parse_model(j.at("model").get<std::string>());
  spec.truth = param_vector_from_json(kind, j.at("params"));
  spec.shift.k_s = j.value("k_s", 0.0);
  if (j.contains("residual_kernel") && !j.at("residual_kernel").is_null()) {
    spec.residual_kernel = se_kernel_from_json(j.at("residual_kernel"));
  }
  spec.noise_sd = j.value("noise_sd", 0.0);
  spec.n = j.at("n").get<std::size_t>();
  spec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    spec.sampler.low_weight = s.value("low_weight", spec.sampler.low_weight);
    spec.sampler.k_min = s.value("k_min", spec.sampler.k_min);
    spec.sampler.k_split = s.value("k_split", spec.sampler.k_split);
    spec.sampler.k_max = s.value("k_max", spec.sampler.k_max);
  }
  return spec;
}

}  // namespace fdcal
