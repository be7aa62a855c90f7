#include "fd_models.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "stats.hpp"

namespace fdcal {

namespace {

constexpr std::array<std::string_view, 2> kGreenshieldsNames = {"v_f", "k_j"};
constexpr std::array<std::string_view, 2> kGreenbergNames = {"v_0", "k_j"};
constexpr std::array<std::string_view, 2> kUnderwoodNames = {"v_f", "k_0"};
constexpr std::array<std::string_view, 2> kNorthwesternNames = {"v_f", "k_0"};
constexpr std::array<std::string_view, 3> kNewellNames = {"v_f", "k_j", "lambda"};
constexpr std::array<std::string_view, 3> kThreePLNames = {"v_f", "k_c", "theta_l"};

// 1 / (1 + exp(z)) without overflow.
double logistic_complement(double z) {
  if (z > 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

template <bool WithGrad>
double eval_impl(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& b, double k,
                 GreenbergShift shift, double* g) {
  switch (kind) {
    case FdModelKind::Greenshields: {
      const double vf = b[0], kj = b[1];
      if constexpr (WithGrad) {
        g[0] = 1.0 - k / kj;
        g[1] = vf * k / (kj * kj);
      }
      return vf * (1.0 - k / kj);
    }
    case FdModelKind::Greenberg: {
      const double v0 = b[0], kj = b[1];
      const double ke = k + shift.k_s;
      if (!(ke > 0.0)) {
        throw DomainError("greenberg model undefined at k + k_s = " + std::to_string(ke));
      }
      const double lg = std::log(kj / ke);
      if constexpr (WithGrad) {
        g[0] = lg;
        g[1] = v0 / kj;
      }
      return v0 * lg;
    }
    case FdModelKind::Underwood: {
      const double vf = b[0], k0 = b[1];
      const double e = std::exp(-k / k0);
      if constexpr (WithGrad) {
        g[0] = e;
        g[1] = vf * e * k / (k0 * k0);
      }
      return vf * e;
    }
    case FdModelKind::Northwestern: {
      const double vf = b[0], k0 = b[1];
      const double r = k / k0;
      const double e = std::exp(-0.5 * r * r);
      if constexpr (WithGrad) {
        g[0] = e;
        g[1] = vf * e * r * r / k0;
      }
      return vf * e;
    }
    case FdModelKind::Newell: {
      const double vf = b[0], kj = b[1], lam = b[2];
      if (k <= 0.0) {
        // exp(-lambda/v_f * (1/k - 1/k_j)) -> 0 as k -> 0+
        if constexpr (WithGrad) {
          g[0] = 1.0;
          g[1] = 0.0;
          g[2] = 0.0;
        }
        return vf;
      }
      const double span = 1.0 / k - 1.0 / kj;
      const double a = lam / vf * span;
      const double e = std::exp(-a);
      if constexpr (WithGrad) {
        // a*e -> 0 when a overflows e to zero
        g[0] = 1.0 - e - (e > 0.0 ? a * e : 0.0);
        g[1] = lam * e / (kj * kj);
        g[2] = e * span;
      }
      return vf * (1.0 - e);
    }
    case FdModelKind::ThreePL: {
      const double vf = b[0], kc = b[1], th = b[2];
      const double z = (k - kc) / th;
      const double p = logistic_complement(z);
      if constexpr (WithGrad) {
        const double pq = p * logistic_complement(-z);
        g[0] = p;
        g[1] = vf * pq / th;
        g[2] = vf * pq * z / th;
      }
      return vf * p;
    }
  }
  throw InvalidArgument("unknown model kind");
}

}  // namespace

std::string_view model_name(FdModelKind kind) {
  switch (kind) {
    case FdModelKind::Greenshields: return "greenshields";
    case FdModelKind::Greenberg: return "greenberg";
    case FdModelKind::Underwood: return "underwood";
    case FdModelKind::Northwestern: return "northwestern";
    case FdModelKind::Newell: return "newell";
    case FdModelKind::ThreePL: return "3pl";
  }
  return "unknown";
}

FdModelKind parse_model(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : kAllModels) {
    if (lower == model_name(kind)) return kind;
  }
  if (lower == "threepl" || lower == "logistic") return FdModelKind::ThreePL;
  throw InvalidArgument("unknown model '" + std::string(name) + "'");
}

std::span<const std::string_view> param_names(FdModelKind kind) {
  switch (kind) {
    case FdModelKind::Greenshields: return kGreenshieldsNames;
    case FdModelKind::Greenberg: return kGreenbergNames;
    case FdModelKind::Underwood: return kUnderwoodNames;
    case FdModelKind::Northwestern: return kNorthwesternNames;
    case FdModelKind::Newell: return kNewellNames;
    case FdModelKind::ThreePL: return kThreePLNames;
  }
  throw InvalidArgument("unknown model kind");
}

ParamVector::ParamVector(FdModelKind kind, Eigen::VectorXd values)
    : kind_(kind), values_(std::move(values)) {
  const auto expected = param_count(kind);
  if (static_cast<std::size_t>(values_.size()) != expected) {
    throw InvalidArgument(std::string(model_name(kind)) + " expects " +
                          std::to_string(expected) + " parameters, got " +
                          std::to_string(values_.size()));
  }
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]) || values_[i] <= 0.0) {
      throw InvalidArgument("parameter " + std::string(param_names(kind)[i]) +
                            " must be finite and strictly positive");
    }
  }
}

double ParamVector::get(std::string_view name) const {
  const auto names = param_names(kind_);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return (*this)[i];
  }
  throw InvalidArgument("no parameter '" + std::string(name) + "' in model " +
                        std::string(model_name(kind_)));
}

double evaluate(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta, double k,
                GreenbergShift shift) {
  return eval_impl<false>(kind, beta, k, shift, nullptr);
}

double evaluate_with_gradient(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta,
                              double k, Eigen::Ref<Eigen::VectorXd> grad, GreenbergShift shift) {
  return eval_impl<true>(kind, beta, k, shift, grad.data());
}

Eigen::VectorXd gradient(const ParamVector& p, double k, GreenbergShift shift) {
  Eigen::VectorXd g(p.values().size());
  evaluate_with_gradient(p.kind(), p.values(), k, g, shift);
  return g;
}

Eigen::VectorXd evaluate_all(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta,
                             const Eigen::VectorXd& k, GreenbergShift shift) {
  Eigen::VectorXd out(k.size());
  for (Eigen::Index i = 0; i < k.size(); ++i) out[i] = evaluate(kind, beta, k[i], shift);
  return out;
}

Eigen::MatrixXd jacobian_all(FdModelKind kind, const Eigen::Ref<const Eigen::VectorXd>& beta,
                             const Eigen::VectorXd& k, GreenbergShift shift) {
  const auto p = static_cast<Eigen::Index>(param_count(kind));
  Eigen::MatrixXd jac(k.size(), p);
  Eigen::VectorXd g(p);
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    evaluate_with_gradient(kind, beta, k[i], g, shift);
    jac.row(i) = g.transpose();
  }
  return jac;
}

ParamVector default_init(FdModelKind kind, const Dataset& ds) {
  if (ds.size() < 2) throw InvalidArgument("default_init needs at least 2 observations");
  const double kmin = ds.min_density();
  const double kmax = ds.max_density();
  if (!(kmax > kmin)) throw InvalidArgument("degenerate dataset: all densities are equal");

  const auto& v = ds.speeds();
  const auto& k = ds.densities();
  std::vector<double> speeds(v.data(), v.data() + v.size());
  const double v95 = std::max(quantile(speeds, 0.95), 1e-3);
  const double kj = 1.2 * kmax;
  const double range = kmax - kmin;

  // density of the observation whose speed is nearest half the maximum speed
  const double half = 0.5 * v.maxCoeff();
  Eigen::Index best = 0;
  (v.array() - half).abs().minCoeff(&best);
  double k0 = k[best];
  if (!(k0 > 0.0)) k0 = range / 10.0;

  std::vector<double> dens(k.data(), k.data() + k.size());
  double kc = quantile(dens, 0.5);
  if (!(kc > 0.0)) kc = range / 10.0;

  Eigen::VectorXd b;
  switch (kind) {
    case FdModelKind::Greenshields:
    case FdModelKind::Greenberg:
      b = Eigen::Vector2d(v95, kj);
      break;
    case FdModelKind::Underwood:
    case FdModelKind::Northwestern:
      b = Eigen::Vector2d(v95, k0);
      break;
    case FdModelKind::Newell:
      b = Eigen::Vector3d(v95, kj, v95 * kj / 4.0);
      break;
    case FdModelKind::ThreePL:
      b = Eigen::Vector3d(v95, kc, range / 10.0);
      break;
  }
  return ParamVector(kind, std::move(b));
}

nlohmann::json to_json(const ParamVector& p) {
  nlohmann::json j = nlohmann::json::object();
  const auto names = param_names(p.kind());
  for (std::size_t i = 0; i < names.size(); ++i) j[std::string(names[i])] = p[i];
  return j;
}

ParamVector param_vector_from_json(FdModelKind kind, const nlohmann::json& j) {
  const auto names = param_names(kind);
  Eigen::VectorXd b(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string key(names[i]);
    if (!j.contains(key)) {
      throw InvalidArgument("missing parameter '" + key + "' for model " +
                            std::string(model_name(kind)));
    }
    b[static_cast<Eigen::Index>(i)] = j.at(key).get<double>();
  }
  return ParamVector(kind, std::move(b));
}

}  // namespace fdcal
