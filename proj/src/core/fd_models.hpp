#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <json.hpp>

namespace fdcal {

class Dataset;

enum class FdModelKind { Greenshields, Greenberg, Underwood, Northwestern, Newell, ThreePL };

inline constexpr std::array<FdModelKind, 6> kAllModels = {
    FdModelKind::Greenshields, FdModelKind::Greenberg, FdModelKind::Underwood,
    FdModelKind::Northwestern, FdModelKind::Newell,    FdModelKind::ThreePL};

std::string_view model_name(FdModelKind kind);
FdModelKind parse_model(std::string_view name);

std::span<const std::string_view> param_names(FdModelKind kind);
inline std::size_t param_count(FdModelKind kind) { return param_names(kind).size(); }

// Named, strictly positive parameters of one speed-density model.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(FdModelKind kind, Eigen::VectorXd values);

  FdModelKind kind() const noexcept { return kind_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double get(std::string_view name) const;

 private:
  FdModelKind kind_ = FdModelKind::Greenshields;
  Eigen::VectorXd values_;
};

struct GreenbergShift {
  double k_s = 0.0;
};

// Raw-parameter evaluation, used in inner loops where the vector is known to be
// positive. Throws DomainError for Greenberg at k + k_s <= 0.
double evaluate(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta, double k,
                GreenbergShift shift = {});
// Writes dm/dbeta into grad (size = param_count(kind)) and returns m.
double evaluate_with_gradient(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta,
                              double k, Eigen::Ref<Eigen::VectorXd> grad,
                              GreenbergShift shift = {});

inline double evaluate(const ParamVector& p, double k, GreenbergShift shift = {}) {
  return evaluate(p.kind(), p.values(), k, shift);
}
Eigen::VectorXd gradient(const ParamVector& p, double k, GreenbergShift shift = {});
inline double flow(const ParamVector& p, double k, GreenbergShift shift = {}) {
  return k * evaluate(p, k, shift);
}

// Mean function over a vector of densities.
Eigen::VectorXd evaluate_all(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta,
                             const Eigen::VectorXd& k, GreenbergShift shift = {});
// Row i holds dm(k_i)/dbeta.
Eigen::MatrixXd jacobian_all(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta,
                             const Eigen::VectorXd& k, GreenbergShift shift = {});

ParamVector default_init(FdModelKind kind, const Dataset& ds);

nlohmann::json to_json(const ParamVector& p);
ParamVector param_vector_from_json(FdModelKind kind, const nlohmann::json& j);

}  // namespace fdcal
