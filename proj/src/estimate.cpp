#include "fqme/estimate.hpp"

#include <cctype>
#include <string>

#include "fqme/error.hpp"

namespace fqme {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Oracle: return "oracle";
    case Method::Naive: return "naive";
    case Method::Average: return "average";
    case Method::Simex: return "simex";
    case Method::Fui: return "fui";
    case Method::Fsmi: return "fsmi";
  }
  return "?";
}

std::string_view display_name(Method m) {
  switch (m) {
    case Method::Oracle: return "Oracle";
    case Method::Naive: return "Naive";
    case Method::Average: return "Ave";
    case Method::Simex: return "SIMEX";
    case Method::Fui: return "FUI";
    case Method::Fsmi: return "FSMI";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string s(name);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "oracle") return Method::Oracle;
  if (s == "naive") return Method::Naive;
  if (s == "average" || s == "ave") return Method::Average;
  if (s == "simex") return Method::Simex;
  if (s == "fui") return Method::Fui;
  if (s == "fsmi") return Method::Fsmi;
  throw DomainError("unknown method '" + std::string(name) + "'");
}

EstimateSet make_estimate(Method method, double tau, const Eigen::VectorXd& coefficients,
                          const SplineBasis& basis, FitStatus status) {
  const int K = basis.dimension();
  if (coefficients.size() < K + 2)
    throw ShapeError("coefficient vector too short for basis dimension " + std::to_string(K));
  EstimateSet e;
  e.method = method;
  e.tau = tau;
  e.coefficients = coefficients;
  e.beta0 = coefficients(0);
  e.beta1_curve = basis.reconstruct(coefficients.segment(1, K));
  e.beta2 = coefficients(K + 1);
  e.gammas = coefficients.tail(coefficients.size() - K - 2);
  e.selected_K = K;
  e.status = status;
  return e;
}

}  // namespace fqme
