#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ggeur/geometry.hpp"
#include "ggeur/rng.hpp"

namespace ggeur {

enum class AugmentMode { kSingleDomain, kMultiDomain };

struct AugmentationPlan {
  AugmentMode mode = AugmentMode::kSingleDomain;
  int target_per_class = 2000;    // single-domain floor on (original + generated)
  int step1_target = 500;         // multi-domain Step 1 floor
  int step2_per_prototype = 500;  // M
  int eigen_rank_limit = 0;       // r; 0 means use every eigenvector

  void validate() const;
  int rank_for(Eigen::Index p) const;
};

enum class Provenance : std::uint8_t { kOriginal = 0, kStep1 = 1, kStep2 = 2 };

/// Identifies the private random stream of one (client, class) pair.
struct StreamId {
  std::uint64_t seed = 0;
  int client = 0;
  int class_id = 0;
};

/// A client's per-class sample mean, shared with clients of other domains.
struct Prototype {
  int class_id = 0;
  int source_client = 0;
  std::string source_domain;
  Vector mean;
};

/// Draws offsets beta = sum_m eps_m * lambda_m * xi_m with eps_m ~ N(0, 1).
/// The eigenvalues scale the offsets directly, they are not square-rooted.
class OffsetSampler {
 public:
  OffsetSampler(const GeometricShape& shape, int rank, Rng stream);

  Vector draw();
  void draw_into(Eigen::Ref<Eigen::RowVectorXd> out);

  Eigen::Index dim() const noexcept { return basis_.rows(); }
  int rank() const noexcept { return static_cast<int>(basis_.cols()); }

 private:
  Matrix basis_;  // p x r, columns xi_m * lambda_m
  Vector eps_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

OffsetSampler make_offset_sampler(const GeometricShape& shape, const AugmentationPlan& plan,
                                  const StreamId& id, std::string_view purpose);

struct AugmentedSamples {
  int class_id = 0;
  RowMatrix rows;
  std::vector<Provenance> tags;  // one per row

  Eigen::Index size() const noexcept { return rows.rows(); }
  std::size_t count(Provenance p) const;
};

/// Generation quota per original so that originals + generated reaches
/// max(n, target). Remainders go to the earliest originals.
std::vector<int> generation_quotas(Eigen::Index n, int target);

/// Originals first (in input order), then each original's generated samples
/// grouped by original.
AugmentedSamples augment_single_domain(const RowMatrix& samples, const GeometricShape& shape,
                                       const AugmentationPlan& plan, const StreamId& id);

/// Step 1 floors the local class at `step1_target` around the local samples;
/// Step 2 appends exactly M samples around each foreign prototype. A class
/// with no local samples skips Step 1 but still receives Step 2 samples.
AugmentedSamples augment_multi_domain(const RowMatrix& samples, const GeometricShape& shared_shape,
                                      std::span<const Prototype> prototypes, const AugmentationPlan& plan,
                                      const StreamId& id, bool step2_enabled = true);

}  // namespace ggeur
