#include "ggeur/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ggeur/error.hpp"

namespace ggeur {

namespace {

void symmetrize(Matrix& m) { m = (0.5 * (m + m.transpose())).eval(); }

}  // namespace

ClassStats compute_class_stats(const RowMatrix& samples, int class_id) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index p = samples.cols();
  if (p < 1) throw DataError("class " + std::to_string(class_id) + ": embedding dimension must be >= 1");

  ClassStats out;
  out.class_id = class_id;
  out.count = n;
  out.mean = Vector::Zero(p);
  out.covariance = Matrix::Zero(p, p);
  if (n == 0) return out;

  for (Eigen::Index r = 0; r < n; ++r) {
    if (!samples.row(r).allFinite()) {
      throw DataError("class " + std::to_string(class_id) + ": non-finite value in row " + std::to_string(r));
    }
  }

  out.mean = samples.colwise().sum().transpose() / static_cast<double>(n);
  RowMatrix centered = samples.rowwise() - out.mean.transpose();
  out.covariance = centered.transpose() * centered / static_cast<double>(n);
  symmetrize(out.covariance);
  return out;
}

GlobalClassStats aggregate_global_stats(std::span<const ClassStats> locals) {
  if (locals.empty()) throw DataError("aggregate_global_stats: no local statistics");
  const int class_id = locals.front().class_id;
  const Eigen::Index p = locals.front().dim();
  std::int64_t total = 0;
  for (const auto& s : locals) {
    if (s.class_id != class_id) throw DataError("aggregate_global_stats: mixed class ids");
    if (s.dim() != p || s.covariance.rows() != p || s.covariance.cols() != p) {
      throw DataError("aggregate_global_stats: dimension mismatch for class " + std::to_string(class_id));
    }
    if (s.count < 0) throw DataError("aggregate_global_stats: negative count");
    total += s.count;
  }
  if (total == 0) throw DataError("aggregate_global_stats: every client is empty for class " + std::to_string(class_id));

  const double big_n = static_cast<double>(total);
  GlobalClassStats out;
  out.class_id = class_id;
  out.total_count = total;
  out.mean = Vector::Zero(p);
  for (const auto& s : locals) {
    if (s.empty()) continue;
    out.mean += static_cast<double>(s.count) * s.mean;
  }
  out.mean /= big_n;

  out.covariance = Matrix::Zero(p, p);
  for (const auto& s : locals) {
    if (s.empty()) continue;
    const double w = static_cast<double>(s.count);
    const Vector d = s.mean - out.mean;
    out.covariance += w * s.covariance;
    out.covariance.noalias() += w * d * d.transpose();
  }
  out.covariance /= big_n;
  symmetrize(out.covariance);
  return out;
}

void canonicalize_signs(Matrix& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double a = std::abs(vectors(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

EigenDecomposition symmetric_eigendecompose(const Matrix& matrix) {
  const Eigen::Index p = matrix.rows();
  if (p == 0 || matrix.cols() != p) throw DataError("symmetric_eigendecompose: matrix must be square and non-empty");
  if (!matrix.allFinite()) throw DataError("symmetric_eigendecompose: non-finite entry");
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    throw DataError("symmetric_eigendecompose: matrix not symmetric (max |A - A^T| = " + std::to_string(asym) + ")");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw Error("symmetric_eigendecompose: solver did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Vector& ascending = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ascending(a) > ascending(b); });

  EigenDecomposition out;
  out.values.resize(p);
  out.vectors.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out.values(i) = ascending(order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = solver.eigenvectors().col(order[static_cast<std::size_t>(i)]);
  }
  canonicalize_signs(out.vectors);
  return out;
}

GeometricShape build_shape(const GlobalClassStats& stats) {
  EigenDecomposition eig = symmetric_eigendecompose(stats.covariance);
  const double largest = eig.values.cwiseAbs().maxCoeff();
  const double floor = -1e-8 * largest;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) < floor) {
      throw DataError("build_shape: class " + std::to_string(stats.class_id) +
                      " covariance has eigenvalue " + std::to_string(eig.values(i)) + " below tolerance");
    }
    eig.values(i) = std::max(0.0, eig.values(i));
  }
  return GeometricShape{stats.class_id, std::move(eig.values), std::move(eig.vectors)};
}

double shape_similarity(const GeometricShape& a, const GeometricShape& b, int top) {
  if (a.dim() != b.dim()) throw DataError("shape_similarity: dimension mismatch");
  if (top < 0 || top > a.dim()) throw UsageError("shape_similarity: top must lie in [0, p]");
  double s = 0.0;
  for (int i = 0; i < top; ++i) s += std::abs(a.eigenvectors.col(i).dot(b.eigenvectors.col(i)));
  return s;
}

SimilarityMatrix similarity_matrix(const DomainShapes& a, const DomainShapes& b, int top) {
  if (a.by_class.size() != b.by_class.size()) {
    throw DataError("similarity_matrix: domains " + a.domain + " and " + b.domain + " cover different class counts");
  }
  const auto classes = static_cast<Eigen::Index>(a.by_class.size());
  SimilarityMatrix out;
  out.domain_a = a.domain;
  out.domain_b = b.domain;
  out.values = Matrix::Constant(classes, classes, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index c = 0; c < classes; ++c) {
    if (!a.by_class[static_cast<std::size_t>(c)]) out.missing_a.push_back(static_cast<int>(c));
    if (!b.by_class[static_cast<std::size_t>(c)]) out.missing_b.push_back(static_cast<int>(c));
  }
  for (Eigen::Index i = 0; i < classes; ++i) {
    const auto& sa = a.by_class[static_cast<std::size_t>(i)];
    if (!sa) continue;
    for (Eigen::Index j = 0; j < classes; ++j) {
      const auto& sb = b.by_class[static_cast<std::size_t>(j)];
      if (!sb) continue;
      out.values(i, j) = shape_similarity(*sa, *sb, top);
    }
  }
  return out;
}

std::vector<SimilarityMatrix> cross_domain_similarity_matrix(std::span<const DomainShapes> domains, int top) {
  std::vector<SimilarityMatrix> out;
  if (domains.size() == 1) {
    out.push_back(similarity_matrix(domains[0], domains[0], top));
    return out;
  }
  for (std::size_t a = 0; a < domains.size(); ++a) {
    for (std::size_t b = a + 1; b < domains.size(); ++b) out.push_back(similarity_matrix(domains[a], domains[b], top));
  }
  return out;
}

}  // namespace ggeur
