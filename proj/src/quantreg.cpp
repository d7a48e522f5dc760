#include "fqme/quantreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fqme/error.hpp"

namespace fqme {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw DomainError("quantile level tau must lie in (0, 1), got " + std::to_string(tau));
}

// Largest step in (0, 1] keeping v + step·dv strictly positive, damped.
double step_length(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  constexpr double damping = 0.9995;
  double step = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  return std::min(1.0, damping * step);
}

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  return m.colPivHouseholderQr().solve(rhs);
}

// Greedy pick of observations with the smallest |residual| whose rows span the
// column space; the exact fit through them is a vertex of the LP.
bool vertex_through_smallest_residuals(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& residuals, Eigen::VectorXd& beta) {
  const Eigen::Index n = X.rows(), p = X.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(residuals(a)) < std::abs(residuals(b));
  });
  Eigen::MatrixXd basis(p, p);  // orthonormal rows spanning accepted rows
  std::vector<Eigen::Index> chosen;
  chosen.reserve(p);
  for (Eigen::Index idx : order) {
    Eigen::VectorXd v = X.row(idx).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      v -= basis.row(static_cast<Eigen::Index>(k)).dot(v) * basis.row(static_cast<Eigen::Index>(k)).transpose();
    }
    const double norm = v.norm();
    if (norm > 1e-9 * norm0) {
      basis.row(static_cast<Eigen::Index>(chosen.size())) = v.transpose() / norm;
      chosen.push_back(idx);
      if (static_cast<Eigen::Index>(chosen.size()) == p) break;
    }
  }
  if (static_cast<Eigen::Index>(chosen.size()) < p) return false;
  Eigen::MatrixXd xh(p, p);
  Eigen::VectorXd yh(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    xh.row(k) = X.row(chosen[static_cast<std::size_t>(k)]);
    yh(k) = y(chosen[static_cast<std::size_t>(k)]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xh);
  if (!lu.isInvertible()) return false;
  beta = lu.solve(yh);
  return beta.allFinite();
}

}  // namespace

std::string_view to_string(FitStatus s) {
  return s == FitStatus::Optimal ? "Optimal" : "MaxIter";
}

double check_loss(const Eigen::Ref<const Eigen::VectorXd>& residuals, double tau) {
  check_tau(tau);
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double r = residuals(i);
    total += r * (tau - (r < 0.0 ? 1.0 : 0.0));
  }
  return total;
}

double check_loss(const Eigen::Ref<const Eigen::VectorXd>& residuals, double tau,
                  const Eigen::Ref<const Eigen::VectorXd>& weights) {
  check_tau(tau);
  if (weights.size() != residuals.size()) throw ShapeError("weights/residuals length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double r = residuals(i);
    total += weights(i) * r * (tau - (r < 0.0 ? 1.0 : 0.0));
  }
  return total;
}

std::vector<int> dependent_columns(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::Index p = X.cols();
  std::vector<int> out;
  Eigen::MatrixXd scaled = X;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm = scaled.col(j).norm();
    if (norm == 0.0) {
      out.push_back(static_cast<int>(j));
    } else {
      scaled.col(j) /= norm;
    }
  }
  if (!out.empty()) return out;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  for (Eigen::Index k = rank; k < p; ++k) out.push_back(static_cast<int>(qr.colsPermutation().indices()(k)));
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::MatrixXd assemble_design(const std::vector<Eigen::MatrixXd>& blocks, Eigen::Index n) {
  Eigen::Index p = 1;
  for (const auto& b : blocks) {
    if (b.cols() > 0 && b.rows() != n) throw ShapeError("design block row count mismatch");
    p += b.cols();
  }
  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  Eigen::Index col = 1;
  for (const auto& b : blocks) {
    if (b.cols() == 0) continue;
    X.middleCols(col, b.cols()) = b;
    col += b.cols();
  }
  return X;
}

QuantileFit fit_quantile(const Eigen::Ref<const Eigen::MatrixXd>& X_in,
                         const Eigen::Ref<const Eigen::VectorXd>& y_in, double tau,
                         const SolverOptions& options,
                         const Eigen::Ref<const Eigen::VectorXd>& weights_in) {
  check_tau(tau);
  if (X_in.rows() != y_in.size()) throw ShapeError("design rows and response length differ");
  if (weights_in.size() != 0 && weights_in.size() != y_in.size())
    throw ShapeError("weights length differs from response length");
  if (!X_in.allFinite() || !y_in.allFinite()) throw DomainError("design or response has non-finite entries");

  // Rows with zero weight do not enter the objective.
  Eigen::MatrixXd X;
  Eigen::VectorXd y, u;
  if (weights_in.size() == 0) {
    X = X_in;
    y = y_in;
    u = Eigen::VectorXd::Ones(y_in.size());
  } else {
    if ((weights_in.array() < 0.0).any() || !weights_in.allFinite())
      throw DomainError("observation weights must be finite and non-negative");
    const Eigen::Index kept = (weights_in.array() > 0.0).count();
    X.resize(kept, X_in.cols());
    y.resize(kept);
    u.resize(kept);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < y_in.size(); ++i) {
      if (weights_in(i) > 0.0) {
        X.row(k) = X_in.row(i);
        y(k) = y_in(i);
        u(k) = weights_in(i);
        ++k;
      }
    }
  }
  const Eigen::Index n = X.rows(), p = X.cols();
  if (p == 0) throw ShapeError("design has no columns");
  if (n < p) throw DomainError("quantile regression needs at least as many observations as coefficients");

  if (auto dep = dependent_columns(X); !dep.empty()) {
    std::ostringstream os;
    os << "design matrix is rank deficient; dependent columns:";
    for (int c : dep) os << ' ' << c;
    throw SingularDesign(os.str(), dep);
  }

  QuantileFit fit;
  fit.tau = tau;
  const double base = (1.0 - tau) * u.dot(y);  // dual objective offset

  if (n == p) {
    fit.coefficients = X.fullPivLu().solve(y);
    fit.objective = check_loss(y - X * fit.coefficients, tau, u);
    fit.lower_bound = fit.objective;
    return fit;
  }

  // Bounded dual LP: min cᵀx s.t. Xᵀx = (1−τ)Xᵀu, 0 ≤ x ≤ u, with c = −y.
  // The equality multiplier is −θ. Iterates stay primal and dual feasible, so
  // only complementarity is driven to zero.
  Eigen::VectorXd x = (1.0 - tau) * u;
  Eigen::VectorXd s = u - x;
  Eigen::VectorXd dual = X.colPivHouseholderQr().solve(-y);
  Eigen::VectorXd r = -y - X * dual;
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i) == 0.0) r(i) = 0.001;
  Eigen::VectorXd z = r.cwiseMax(0.0);
  Eigen::VectorXd w = z - r;

  Eigen::VectorXd best_beta = -dual;
  double best_obj = check_loss(y - X * best_beta, tau, u);
  double lower = y.dot(x) - base;

  Eigen::VectorXd q(n), dx(n), ds(n), dz(n), dw(n), tmp(n);
  Eigen::MatrixXd xq(n, p);
  int it = 0;
  bool converged = best_obj - lower <= options.tol * (1.0 + std::abs(best_obj));
  while (!converged && it < options.max_iter) {
    ++it;
    q = (z.cwiseQuotient(x) + w.cwiseQuotient(s)).cwiseInverse();
    r = z - w;
    xq = q.asDiagonal() * X;
    const Eigen::MatrixXd normal = X.transpose() * xq;
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    const bool llt_ok = llt.info() == Eigen::Success;
    auto solve = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
      return llt_ok ? Eigen::VectorXd(llt.solve(rhs)) : solve_spd(normal, rhs);
    };

    // Affine-scaling direction.
    Eigen::VectorXd dy = solve(xq.transpose() * r);
    dx = q.cwiseProduct(X * dy - r);
    ds = -dx;
    dz = -z - z.cwiseQuotient(x).cwiseProduct(dx);
    dw = -w - w.cwiseQuotient(s).cwiseProduct(ds);
    double fp = std::min(step_length(x, dx), step_length(s, ds));
    double fd = std::min(step_length(z, dz), step_length(w, dw));

    if (std::min(fp, fd) < 1.0) {
      // Mehrotra centering and second-order correction.
      const double mu0 = z.dot(x) + w.dot(s);
      const double g = (z + fd * dz).dot(x + fp * dx) + (w + fd * dw).dot(s + fp * ds);
      const double mu = mu0 * std::pow(g / mu0, 3) / (2.0 * static_cast<double>(n));
      const Eigen::VectorXd dxdz = dx.cwiseProduct(dz);
      const Eigen::VectorXd dsdw = ds.cwiseProduct(dw);
      const Eigen::VectorXd xinv = x.cwiseInverse();
      const Eigen::VectorXd sinv = s.cwiseInverse();
      tmp = r - mu * (xinv - sinv) + dxdz.cwiseProduct(xinv) - dsdw.cwiseProduct(sinv);
      dy = solve(xq.transpose() * tmp);
      dx = q.cwiseProduct(X * dy - tmp);
      ds = -dx;
      dz = mu * xinv - z - xinv.cwiseProduct(z).cwiseProduct(dx) - dxdz.cwiseProduct(xinv);
      dw = mu * sinv - w - sinv.cwiseProduct(w).cwiseProduct(ds) - dsdw.cwiseProduct(sinv);
      fp = std::min(step_length(x, dx), step_length(s, ds));
      fd = std::min(step_length(z, dz), step_length(w, dw));
    }

    x += fp * dx;
    s += fp * ds;
    dual += fd * dy;
    z += fd * dz;
    w += fd * dw;

    lower = std::max(lower, y.dot(x) - base);
    const Eigen::VectorXd beta = -dual;
    const double obj = check_loss(y - X * beta, tau, u);
    if (obj < best_obj) {
      best_obj = obj;
      best_beta = beta;
    }
    converged = best_obj - lower <= options.tol * (1.0 + std::abs(best_obj));
  }

  // Move to a basic solution near the interior-point iterate; it is exact
  // whenever the LP optimum is unique and never worse than the iterate.
  Eigen::VectorXd vertex;
  if (vertex_through_smallest_residuals(X, y, y - X * best_beta, vertex)) {
    const double obj = check_loss(y - X * vertex, tau, u);
    if (obj <= best_obj) {
      best_obj = obj;
      best_beta = vertex;
    }
  }

  fit.coefficients = best_beta;
  fit.objective = best_obj;
  fit.lower_bound = lower;
  fit.iterations = it;
  fit.status = best_obj - lower <= options.tol * (1.0 + std::abs(best_obj)) ? FitStatus::Optimal
                                                                              : FitStatus::MaxIter;
  return fit;
}

}  // namespace fqme
