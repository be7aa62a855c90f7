#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fd_models.hpp"
#include "kernel.hpp"

namespace fdcal {

struct Observation {
  double density;  // veh/km
  double speed;    // km/h
};

// Immutable, density-sorted collection of observations.
class Dataset {
 public:
  Dataset() = default;
  // Validates every observation and sorts by density (stable, so ties keep input order).
  explicit Dataset(std::vector<Observation> observations);

  std::size_t size() const noexcept { return static_cast<std::size_t>(density_.size()); }
  bool empty() const noexcept { return size() == 0; }

  const Eigen::VectorXd& densities() const noexcept { return density_; }
  const Eigen::VectorXd& speeds() const noexcept { return speed_; }
  Observation at(std::size_t i) const;

  double min_density() const;
  double max_density() const;
  double speed_variance() const;  // population variance

 private:
  Eigen::VectorXd density_;
  Eigen::VectorXd speed_;
};

// Column names used to pick density and speed out of a CSV header.
struct CsvSchema {
  std::string density_column = "density";
  std::string speed_column = "speed";
};

struct LoadStats {
  std::size_t raw_rows = 0;
  std::size_t rejected_rows = 0;
  std::size_t accepted_rows = 0;
};

struct LoadedDataset {
  Dataset data;
  LoadStats stats;
};

// Rows with negative or non-finite values are dropped and counted; more than 1%
// dropped is an error. A row that cannot be parsed at all is an error carrying
// its 1-based line number.
LoadedDataset load_csv(const std::string& path, const CsvSchema& schema = {});
LoadedDataset parse_csv(std::istream& in, const CsvSchema& schema = {});

void write_csv(const Dataset& ds, const std::string& path, const CsvSchema& schema = {});

// Bins are [e_j, e_{j+1}); the last bin also takes its right edge.
std::vector<std::size_t> histogram(const Dataset& ds, const std::vector<double>& edges);

struct DensitySampler {
  // Mixture of uniforms: with probability low_weight draw from [k_min, k_split),
  // otherwise from [k_split, k_max].
  double low_weight = 0.87;
  double k_min = 0.0;
  double k_split = 20.0;
  double k_max = 150.0;
};

struct SynthSpec {
  ParamVector truth;
  GreenbergShift shift;
  std::optional<SeKernel> residual_kernel;
  double noise_sd = 0.0;
  std::size_t n = 0;
  DensitySampler sampler;
  std::uint64_t seed = 0;
};

struct SynthResult {
  Dataset data;
  std::vector<double> residual;          // g(k_i), zero when no kernel
  std::vector<std::size_t> clamped;      // indices where the speed was clamped to 0
  double jitter = 0.0;
};

SynthResult synthesize(const SynthSpec& spec);

nlohmann::json ground_truth_json(const SynthSpec& spec, const SynthResult& result);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

}  // namespace fdcal
