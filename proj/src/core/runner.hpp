#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "analysis.hpp"
#include "baselines.hpp"
#include "bayes.hpp"
#include "dataset.hpp"
#include "fd_models.hpp"
#include "gp.hpp"
#include "nuts.hpp"

namespace fdcal {

struct McmcSettings {
  NutsConfig nuts;  // nuts.seed is ignored; chain seeds derive from RunConfig::seed
  int chains = 1;
  NoiseKind noise = NoiseKind::StudentT;
  double max_divergence_fraction = 0.1;
};

struct RunConfig {
  std::vector<FdModelKind> models{kAllModels.begin(), kAllModels.end()};
  std::vector<FitMethod> methods{FitMethod::Ls, FitMethod::Wls, FitMethod::GpMle, FitMethod::GpMcmc};
  std::size_t inducing = 20;
  McmcSettings mcmc;
  std::vector<double> bin_edges = default_rmse_edges();
  std::vector<double> eti_levels = kDefaultLevels;
  std::size_t grid_points = 200;
  GreenbergShift shift;
  unsigned threads = 0;  // 0: hardware concurrency
  std::uint64_t seed = 0;

  // Throws InvalidArgument describing the first problem found.
  void validate() const;
};

// Keys mirror the command-line flags (underscored).
nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

std::string_view noise_name(NoiseKind k);
NoiseKind parse_noise(std::string_view name);

// Independent, reproducible seed for stream `index` of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct OutputFile {
  std::string name;
  std::string content;
};

struct SampleOutput {
  FdModelKind kind = FdModelKind::Greenshields;
  std::vector<std::string> columns;   // constrained-space names
  std::vector<Eigen::MatrixXd> rows;  // per chain, draws x columns
  std::vector<NutsChain> chains;
  nlohmann::json diagnostics;
  bool ok = false;  // false when divergences exceed the configured fraction
  std::vector<OutputFile> files;

  // Pooled draws of one named column across chains.
  std::vector<double> pooled(std::string_view column) const;
  Eigen::MatrixXd pooled_beta() const;
};

// Starting point for the sampler; fields left empty fall back to data-driven guesses.
struct SampleInit {
  std::optional<ParamVector> beta;
  std::optional<ParamVector> prior_center;  // WLS estimate
  std::optional<GpHyper> hyper;
};

SampleOutput run_sampling(const Dataset& ds, FdModelKind kind, const RunConfig& cfg,
                          std::uint64_t seed, const SampleInit& init = {});

// Seed for one model's fits within a run.
std::uint64_t model_seed(std::uint64_t run_seed, FdModelKind kind);

// Sampling for one model exactly as the gp-mcmc fit of a full run performs it:
// WLS prior center, GP-MLE starting point, same seed stream.
SampleOutput sample_model(const Dataset& ds, FdModelKind kind, const RunConfig& cfg);

std::string chain_csv(const std::vector<std::string>& columns, const Eigen::MatrixXd& rows);

struct CalibrationOutput {
  nlohmann::json report;
  std::vector<OutputFile> files;  // curve, envelope, chain and RMSE CSVs
  bool all_converged = false;
};

CalibrationOutput run_calibration(const Dataset& ds, const RunConfig& cfg,
                                  const LoadStats* load_stats = nullptr);

// Writes report.json plus every file into dir (created if missing).
void write_outputs(const CalibrationOutput& out, const std::string& dir);
void write_files(const std::vector<OutputFile>& files, const std::string& dir);

nlohmann::json dataset_summary(const Dataset& ds, const LoadStats* load_stats = nullptr);

}  // namespace fdcal
