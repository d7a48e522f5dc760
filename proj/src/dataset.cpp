#include "fqme/dataset.hpp"

#include "fqme/error.hpp"

namespace fqme {

double stable_mean(const double* values, Eigen::Index count, Eigen::Index stride) {
  if (count <= 0) throw ShapeError("mean of an empty set");
  const double anchor = values[0];
  double acc = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) acc += values[i * stride] - anchor;
  return anchor + acc / static_cast<double>(count);
}

bool FunctionalDataset::balanced() const {
  if (w1.empty()) return true;
  const auto J = w1.front().rows();
  const auto L = w2.empty() ? 0 : w2.front().size();
  for (const auto& m : w1)
    if (m.rows() != J) return false;
  for (const auto& v : w2)
    if (v.size() != L) return false;
  return true;
}

void FunctionalDataset::validate() const {
  const Eigen::Index nn = n();
  const Eigen::Index T = grid_size();
  if (static_cast<Eigen::Index>(w1.size()) != nn) throw ShapeError("w1 subject count differs from y length");
  if (static_cast<Eigen::Index>(w2.size()) != nn) throw ShapeError("w2 subject count differs from y length");
  if (z.rows() != nn && !(z.size() == 0 && nn == 0)) throw ShapeError("z row count differs from y length");
  if (weights.size() != 0 && weights.size() != nn) throw ShapeError("weights length differs from y length");
  for (const auto& m : w1)
    if (m.cols() != T) throw ShapeError("functional replicate length differs from grid length");
  if (!subject_ids.empty() && static_cast<Eigen::Index>(subject_ids.size()) != nn)
    throw ShapeError("subject id count differs from y length");
  if (truth) {
    if (truth->x1.rows() != nn || truth->x1.cols() != T) throw ShapeError("latent x1 has the wrong shape");
    if (truth->x2.size() != nn) throw ShapeError("latent x2 has the wrong length");
  }
}

FunctionalDataset FunctionalDataset::subset(const std::vector<Eigen::Index>& rows) const {
  FunctionalDataset out;
  out.grid = grid;
  out.covariate_names = covariate_names;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.w1.reserve(rows.size());
  out.w2.reserve(rows.size());
  out.z.resize(m, z.cols());
  out.y.resize(m);
  if (has_weights()) out.weights.resize(m);
  if (truth) out.truth = LatentTruth{Eigen::MatrixXd(m, grid_size()), Eigen::VectorXd(m)};
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    if (i < 0 || i >= n()) throw ShapeError("subset row out of range");
    out.w1.push_back(w1[static_cast<std::size_t>(i)]);
    out.w2.push_back(w2[static_cast<std::size_t>(i)]);
    out.z.row(k) = z.row(i);
    out.y(k) = y(i);
    if (has_weights()) out.weights(k) = weights(i);
    if (!subject_ids.empty()) out.subject_ids.push_back(subject_ids[static_cast<std::size_t>(i)]);
    if (truth) {
      out.truth->x1.row(k) = truth->x1.row(i);
      out.truth->x2(k) = truth->x2(i);
    }
  }
  return out;
}

Eigen::MatrixXd FunctionalDataset::w1_mean() const {
  const Eigen::Index T = grid_size();
  Eigen::MatrixXd out(n(), T);
  for (Eigen::Index i = 0; i < n(); ++i) {
    const auto& m = w1[static_cast<std::size_t>(i)];
    if (m.rows() == 0) throw InsufficientReplicates("subject without functional replicates");
    for (Eigen::Index t = 0; t < T; ++t) out(i, t) = stable_mean(m.col(t).data(), m.rows());
  }
  return out;
}

Eigen::VectorXd FunctionalDataset::w2_mean() const {
  Eigen::VectorXd out(n());
  for (Eigen::Index i = 0; i < n(); ++i) {
    const auto& v = w2[static_cast<std::size_t>(i)];
    if (v.size() == 0) throw InsufficientReplicates("subject without scalar replicates");
    out(i) = stable_mean(v.data(), v.size());
  }
  return out;
}

}  // namespace fqme
