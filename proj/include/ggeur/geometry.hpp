#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ggeur/linalg.hpp"

namespace ggeur {

/// Per-class sufficient statistics held by one client. This triple is the
/// only thing a client uploads.
struct ClassStats {
  int class_id = 0;
  std::int64_t count = 0;
  Vector mean;        // length p
  Matrix covariance;  // p x p, population-normalized (divide by n)

  bool empty() const noexcept { return count == 0; }
  Eigen::Index dim() const noexcept { return mean.size(); }
};

struct GlobalClassStats {
  int class_id = 0;
  std::int64_t total_count = 0;
  Vector mean;
  Matrix covariance;
};

/// Eigen-structure of a class covariance: eigenvalues sorted descending and
/// clamped at zero, eigenvectors as unit-norm columns in canonical sign.
struct GeometricShape {
  int class_id = 0;
  Vector eigenvalues;
  Matrix eigenvectors;

  Eigen::Index dim() const noexcept { return eigenvalues.size(); }
};

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values(i)
};

/// Mean and population covariance of `samples` (one sample per row).
/// Zero rows yield an empty-flagged stats object of width `samples.cols()`.
/// Throws DataError naming the first row with a non-finite entry.
ClassStats compute_class_stats(const RowMatrix& samples, int class_id);

/// Exact pooled statistics from per-client triples. Empty entries are
/// skipped; the result is symmetrized after accumulation.
GlobalClassStats aggregate_global_stats(std::span<const ClassStats> locals);

/// Symmetric eigendecomposition with descending eigenvalues (ties keep the
/// solver's original order) and canonical eigenvector signs. Values are not
/// clamped here.
EigenDecomposition symmetric_eigendecompose(const Matrix& matrix);

/// Flip each column so its largest-magnitude entry is non-negative. On ties in
/// magnitude the first such entry decides.
void canonicalize_signs(Matrix& vectors);

GeometricShape build_shape(const GlobalClassStats& stats);

/// Sum over the first `top` rank-paired eigenvectors of |<a_i, b_i>|.
double shape_similarity(const GeometricShape& a, const GeometricShape& b, int top = 5);

struct DomainShapes {
  std::string domain;
  // Indexed by class id; nullopt marks a class with no samples in the domain.
  std::vector<std::optional<GeometricShape>> by_class;
};

struct SimilarityMatrix {
  std::string domain_a;
  std::string domain_b;
  Matrix values;  // C x C, NaN rows/columns for missing classes
  std::vector<int> missing_a;
  std::vector<int> missing_b;
};

SimilarityMatrix similarity_matrix(const DomainShapes& a, const DomainShapes& b, int top = 5);

/// One matrix per unordered domain pair (a before b in input order). A
/// single domain yields its self-similarity matrix.
std::vector<SimilarityMatrix> cross_domain_similarity_matrix(std::span<const DomainShapes> domains,
                                                             int top = 5);

}  // namespace ggeur
