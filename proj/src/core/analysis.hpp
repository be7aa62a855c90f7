#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dataset.hpp"
#include "fd_models.hpp"
#include "gp.hpp"

namespace fdcal {

struct BinnedRmse {
  std::vector<double> edges;
  std::vector<std::optional<double>> rmse;  // empty bin -> nullopt
  std::vector<std::size_t> counts;
  std::size_t skipped = 0;  // points where the curve was undefined
};

// 0, 15, ..., 150.
std::vector<double> default_rmse_edges();

// Bin membership follows histogram(): [e_j, e_{j+1}), last bin closed.
// A curve that throws DomainError at a point drops that point.
BinnedRmse rmse_bins(const Dataset& ds, const std::function<double(double)>& curve,
                     const std::vector<double>& edges = default_rmse_edges());
BinnedRmse rmse_bins(const Dataset& ds, const ParamVector& beta,
                     const std::vector<double>& edges = default_rmse_edges(),
                     GreenbergShift shift = {});

// Indices of the `count` highest-density non-empty bins, ascending.
std::vector<std::size_t> top_nonempty_bins(const BinnedRmse& b, std::size_t count);

nlohmann::json to_json(const BinnedRmse& b);

// Equal-tailed interval: type-7 quantiles at (1-level)/2 and (1+level)/2.
std::pair<double, double> eti(std::vector<double> samples, double level);

enum class CurveTransform { Speed, Flow };

struct CurveBand {
  double level;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct CurveEnvelope {
  CurveTransform transform = CurveTransform::Speed;
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<CurveBand> bands;  // ascending level
  std::vector<bool> valid;       // false where every draw hit a domain error
};

inline const std::vector<double> kDefaultLevels = {0.5, 0.8, 0.95};

// n evenly spaced densities over the observed range.
std::vector<double> default_grid(const Dataset& ds, std::size_t n = 200);

// Per-draw mean-function curves (speed clamped at 0, or k times that) summarized
// pointwise. beta_draws is draws x param_count(kind), constrained values.
CurveEnvelope posterior_curves(FdModelKind kind, const Eigen::MatrixXd& beta_draws,
                               const std::vector<double>& grid, CurveTransform transform,
                               const std::vector<double>& levels = kDefaultLevels,
                               GreenbergShift shift = {});

// Mean width of the band at `level` over valid grid points.
double mean_band_width(const CurveEnvelope& env, double level);

// CSV: density,value,lower_50,upper_50,... ; invalid points are left out.
std::string envelope_csv(const CurveEnvelope& env);
nlohmann::json to_json(const CurveEnvelope& env);

struct HyperRow {
  std::string model;
  std::string method;  // "mle" or "mcmc"
  double lengthscale;
  double variance;
};

class HyperTable {
 public:
  void add_mle(const GpFit& fit);
  // Sample means of constrained draws.
  void add_mcmc(FdModelKind kind, const std::vector<double>& lengthscale_draws,
                const std::vector<double>& variance_draws);
  const std::vector<HyperRow>& rows() const noexcept { return rows_; }
  std::optional<HyperRow> find(std::string_view model, std::string_view method) const;
  nlohmann::json to_json() const;
  static HyperTable from_json(const nlohmann::json& j);

 private:
  std::vector<HyperRow> rows_;
};

}  // namespace fdcal
