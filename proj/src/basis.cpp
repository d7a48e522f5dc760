#include "fqme/basis.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fqme/error.hpp"

namespace fqme {

namespace {

// Index of the knot span [knots(j), knots(j+1)) containing t, restricted to the
// non-degenerate spans; t = 1 belongs to the last span.
Eigen::Index find_span(const Eigen::VectorXd& knots, int degree, Eigen::Index n_basis, double t) {
  const Eigen::Index last = n_basis - 1;
  if (t >= knots(last + 1)) return last;
  Eigen::Index lo = degree, hi = last + 1;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (t < knots(mid))
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

}  // namespace

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
  const Eigen::Index T = grid.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(T);
  for (Eigen::Index i = 0; i + 1 < T; ++i) {
    const double h = 0.5 * (grid(i + 1) - grid(i));
    w(i) += h;
    w(i + 1) += h;
  }
  return w;
}

Eigen::VectorXd uniform_grid(Eigen::Index T) {
  if (T < 2) throw DomainError("grid needs at least two points");
  Eigen::VectorXd g(T);
  for (Eigen::Index i = 0; i < T; ++i) g(i) = static_cast<double>(i) / static_cast<double>(T - 1);
  return g;
}

SplineBasis::SplineBasis(int degree, int n_interior, Eigen::VectorXd grid)
    : degree_(degree), n_interior_(n_interior), grid_(std::move(grid)) {
  if (degree < 0) throw DomainError("spline degree must be >= 0");
  if (n_interior < 0) throw DomainError("number of interior knots must be >= 0");
  if (grid_.size() < 1) throw DomainError("grid must be non-empty");
  for (Eigen::Index i = 0; i < grid_.size(); ++i) {
    if (!(grid_(i) >= 0.0 && grid_(i) <= 1.0)) throw DomainError("grid points must lie in [0, 1]");
    if (i > 0 && !(grid_(i) > grid_(i - 1))) throw DomainError("grid must be strictly increasing");
  }
  const int K = n_interior + degree + 1;
  knots_.resize(K + degree + 1);
  for (int i = 0; i <= degree; ++i) {
    knots_(i) = 0.0;
    knots_(K + i) = 1.0;
  }
  for (int i = 1; i <= n_interior; ++i)
    knots_(degree + i) = static_cast<double>(i) / static_cast<double>(n_interior + 1);
  values_ = evaluate(grid_);
  weights_ = trapezoid_weights(grid_);
  projector_ = weights_.asDiagonal() * values_;
}

Eigen::MatrixXd SplineBasis::evaluate(const Eigen::VectorXd& points) const {
  const Eigen::Index K = knots_.size() - degree_ - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.size(), K);
  std::vector<double> left(degree_ + 1), right(degree_ + 1), N(degree_ + 1);
  for (Eigen::Index r = 0; r < points.size(); ++r) {
    const double t = points(r);
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("spline evaluation point outside [0, 1]");
    const Eigen::Index span = find_span(knots_, degree_, K, t);
    // Cox–de Boor triangle for the degree+1 non-zero functions on the span.
    N[0] = 1.0;
    for (int j = 1; j <= degree_; ++j) {
      left[j] = t - knots_(span + 1 - j);
      right[j] = knots_(span + j) - t;
      double saved = 0.0;
      for (int k = 0; k < j; ++k) {
        const double denom = right[k + 1] + left[j - k];
        const double temp = denom != 0.0 ? N[k] / denom : 0.0;
        N[k] = saved + right[k + 1] * temp;
        saved = left[j - k] * temp;
      }
      N[j] = saved;
    }
    for (int k = 0; k <= degree_; ++k) out(r, span - degree_ + k) = N[k];
  }
  return out;
}

Eigen::VectorXd SplineBasis::project(const Eigen::Ref<const Eigen::VectorXd>& curve) const {
  if (curve.size() != grid_.size())
    throw ShapeError("curve length " + std::to_string(curve.size()) + " differs from grid length " +
                     std::to_string(grid_.size()));
  return projector_.transpose() * curve;
}

Eigen::MatrixXd SplineBasis::project_rows(const Eigen::Ref<const Eigen::MatrixXd>& curves) const {
  if (curves.cols() != grid_.size()) throw ShapeError("curve matrix columns differ from grid length");
  return curves * projector_;
}

Eigen::VectorXd SplineBasis::reconstruct(const Eigen::Ref<const Eigen::VectorXd>& omega) const {
  if (omega.size() != dimension())
    throw ShapeError("coefficient length " + std::to_string(omega.size()) + " differs from basis dimension " +
                     std::to_string(dimension()));
  return values_ * omega;
}

SplineBasis make_basis(int degree, int n_interior, const Eigen::VectorXd& grid) {
  return SplineBasis(degree, n_interior, grid);
}

SplineBasis make_basis_with_dimension(int degree, int K, const Eigen::VectorXd& grid) {
  if (K < degree + 1)
    throw DomainError("basis dimension " + std::to_string(K) + " below degree + 1");
  return SplineBasis(degree, K - degree - 1, grid);
}

Eigen::VectorXd reconstruct_beta(const Eigen::Ref<const Eigen::VectorXd>& omega, const SplineBasis& basis) {
  return basis.reconstruct(omega);
}

double bic_score(double objective, double total_weight, Eigen::Index n, Eigen::Index p) {
  const double nn = static_cast<double>(n);
  const double mean_loss = objective / total_weight;
  // A perfect fit has no finite BIC; treat it as the best possible score.
  if (!(mean_loss > 0.0)) return -std::numeric_limits<double>::infinity();
  return 2.0 * nn * std::log(mean_loss) + static_cast<double>(p) * std::log(nn);
}

BicSelection select_K_bic(const Eigen::VectorXd& y, const std::vector<int>& candidate_K,
                          const std::vector<Eigen::MatrixXd>& projections,
                          const Eigen::MatrixXd& other, double tau, const Eigen::VectorXd& weights,
                          const SolverOptions& options) {
  if (candidate_K.empty()) throw DomainError("candidate K list is empty");
  if (candidate_K.size() != projections.size())
    throw ShapeError("one projection matrix is needed per candidate K");
  const Eigen::Index n = y.size();
  const Eigen::Index n_eff = weights.size() == 0 ? n : (weights.array() > 0.0).count();
  const double total_weight = weights.size() == 0 ? static_cast<double>(n) : weights.sum();
  // Losses at round-off level relative to the response count as exact fits.
  const double exact_floor =
      1e-10 * (weights.size() == 0 ? y.cwiseAbs().sum() : weights.cwiseProduct(y.cwiseAbs()).sum());
  BicSelection sel;
  sel.candidates = candidate_K;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidate_K.size(); ++c) {
    if (projections[c].cols() != candidate_K[c])
      throw ShapeError("projection for K=" + std::to_string(candidate_K[c]) + " has " +
                       std::to_string(projections[c].cols()) + " columns");
    const Eigen::MatrixXd X = assemble_design({projections[c], other}, n);
    QuantileFit fit;
    try {
      fit = fit_quantile(X, y, tau, options, weights);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "fit for K=" << candidate_K[c] << " failed: " << e.what();
      if (const auto* sd = dynamic_cast<const SingularDesign*>(&e)) throw SingularDesign(os.str(), sd->columns());
      throw FitError(os.str());
    }
    const double score = fit.objective <= exact_floor ? -std::numeric_limits<double>::infinity()
                                                      : bic_score(fit.objective, total_weight, n_eff, X.cols());
    sel.scores.push_back(score);
    sel.fits.push_back(std::move(fit));
    const bool better = score < best || (score == best && candidate_K[c] < sel.K);
    if (sel.fits.size() == 1 || better) {
      best = score;
      sel.K = candidate_K[c];
      sel.best_index = c;
    }
  }
  return sel;
}

}  // namespace fqme
