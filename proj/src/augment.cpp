#include "ggeur/augment.hpp"

#include <algorithm>

#include "ggeur/error.hpp"

namespace ggeur {

void AugmentationPlan::validate() const {
  if (target_per_class < 0 || step1_target < 0 || step2_per_prototype < 0) {
    throw UsageError("augmentation targets must be non-negative");
  }
  if (eigen_rank_limit < 0) throw UsageError("eigen_rank_limit must be >= 1 (or 0 for full rank)");
}

int AugmentationPlan::rank_for(Eigen::Index p) const {
  if (eigen_rank_limit == 0) return static_cast<int>(p);
  return static_cast<int>(std::min<Eigen::Index>(eigen_rank_limit, p));
}

OffsetSampler::OffsetSampler(const GeometricShape& shape, int rank, Rng stream) : rng_(stream) {
  const Eigen::Index p = shape.dim();
  if (p < 1 || shape.eigenvectors.rows() != p || shape.eigenvectors.cols() != p) {
    throw DataError("OffsetSampler: malformed geometric shape");
  }
  if (rank < 1 || rank > p) throw UsageError("OffsetSampler: rank must lie in [1, p]");
  basis_ = shape.eigenvectors.leftCols(rank) * shape.eigenvalues.head(rank).asDiagonal();
  eps_.resize(rank);
}

void OffsetSampler::draw_into(Eigen::Ref<Eigen::RowVectorXd> out) {
  for (Eigen::Index m = 0; m < eps_.size(); ++m) eps_(m) = normal_(rng_);
  out.noalias() = (basis_ * eps_).transpose();
}

Vector OffsetSampler::draw() {
  Eigen::RowVectorXd row(basis_.rows());
  draw_into(row);
  return row.transpose();
}

OffsetSampler make_offset_sampler(const GeometricShape& shape, const AugmentationPlan& plan, const StreamId& id,
                                  std::string_view purpose) {
  return OffsetSampler(shape, plan.rank_for(shape.dim()), make_stream(id.seed, purpose, {id.client, id.class_id}));
}

std::size_t AugmentedSamples::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), p));
}

std::vector<int> generation_quotas(Eigen::Index n, int target) {
  std::vector<int> quotas(static_cast<std::size_t>(n), 0);
  if (n == 0 || n >= target) return quotas;
  const Eigen::Index deficit = target - n;
  const Eigen::Index base = deficit / n;
  const Eigen::Index extra = deficit % n;
  for (Eigen::Index j = 0; j < n; ++j) quotas[static_cast<std::size_t>(j)] = static_cast<int>(base + (j < extra ? 1 : 0));
  return quotas;
}

namespace {

void check_samples(const RowMatrix& samples, const GeometricShape& shape) {
  if (samples.cols() != shape.dim()) {
    throw DataError("augment: sample width " + std::to_string(samples.cols()) + " does not match shape dimension " +
                    std::to_string(shape.dim()));
  }
}

// Appends originals plus quota-driven offsets around each original.
void expand_locally(const RowMatrix& samples, int target, OffsetSampler& sampler, Provenance tag,
                    AugmentedSamples& out) {
  const Eigen::Index n = samples.rows();
  const std::vector<int> quotas = generation_quotas(n, target);
  Eigen::Index generated = 0;
  for (int q : quotas) generated += q;

  const Eigen::Index start = out.rows.rows();
  out.rows.conservativeResize(start + n + generated, samples.cols());
  out.rows.middleRows(start, n) = samples;
  out.tags.insert(out.tags.end(), static_cast<std::size_t>(n), Provenance::kOriginal);

  Eigen::Index row = start + n;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int h = 0; h < quotas[static_cast<std::size_t>(j)]; ++h, ++row) {
      sampler.draw_into(out.rows.row(row));
      out.rows.row(row) += samples.row(j);
    }
  }
  out.tags.insert(out.tags.end(), static_cast<std::size_t>(generated), tag);
}

}  // namespace

AugmentedSamples augment_single_domain(const RowMatrix& samples, const GeometricShape& shape,
                                       const AugmentationPlan& plan, const StreamId& id) {
  plan.validate();
  if (plan.mode != AugmentMode::kSingleDomain) throw UsageError("augment_single_domain: plan is not single-domain");
  check_samples(samples, shape);
  if (samples.rows() == 0) {
    throw DataError("augment_single_domain: class " + std::to_string(id.class_id) +
                    " has no local samples to anchor offsets; skip it");
  }
  AugmentedSamples out;
  out.class_id = id.class_id;
  out.rows.resize(0, samples.cols());
  OffsetSampler sampler = make_offset_sampler(shape, plan, id, "augment/local");
  expand_locally(samples, plan.target_per_class, sampler, Provenance::kStep1, out);
  return out;
}

AugmentedSamples augment_multi_domain(const RowMatrix& samples, const GeometricShape& shared_shape,
                                      std::span<const Prototype> prototypes, const AugmentationPlan& plan,
                                      const StreamId& id, bool step2_enabled) {
  plan.validate();
  if (plan.mode != AugmentMode::kMultiDomain) throw UsageError("augment_multi_domain: plan is not multi-domain");
  check_samples(samples, shared_shape);

  AugmentedSamples out;
  out.class_id = id.class_id;
  out.rows.resize(0, samples.cols());

  OffsetSampler local = make_offset_sampler(shared_shape, plan, id, "augment/local");
  expand_locally(samples, plan.step1_target, local, Provenance::kStep1, out);

  if (!step2_enabled || prototypes.empty()) return out;

  const Eigen::Index m = plan.step2_per_prototype;
  OffsetSampler foreign = make_offset_sampler(shared_shape, plan, id, "augment/prototype");
  Eigen::Index row = out.rows.rows();
  out.rows.conservativeResize(row + m * static_cast<Eigen::Index>(prototypes.size()), samples.cols());
  for (const Prototype& proto : prototypes) {
    if (proto.class_id != id.class_id) throw DataError("augment_multi_domain: prototype class mismatch");
    if (proto.mean.size() != samples.cols()) throw DataError("augment_multi_domain: prototype dimension mismatch");
    if (!proto.mean.allFinite()) throw DataError("augment_multi_domain: non-finite prototype");
    for (Eigen::Index h = 0; h < m; ++h, ++row) {
      foreign.draw_into(out.rows.row(row));
      out.rows.row(row) += proto.mean.transpose();
    }
  }
  out.tags.insert(out.tags.end(), static_cast<std::size_t>(m) * prototypes.size(), Provenance::kStep2);
  return out;
}

}  // namespace ggeur
