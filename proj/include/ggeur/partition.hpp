#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ggeur/datastore.hpp"
#include "ggeur/rng.hpp"

namespace ggeur {

enum class PartitionMode { kDirichletLabel, kDomainPerClient, kLds };

const char* to_string(PartitionMode mode);
PartitionMode parse_partition_mode(std::string_view text);

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kDirichletLabel;
  double beta = 0.5;              // Dirichlet concentration
  int num_clients = 10;           // K
  double fraction_per_domain = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Indices always refer to the train split of `domain`.
struct ClientShard {
  int client_id = 0;
  std::string domain;
  std::vector<std::uint32_t> indices;
};

struct Partition {
  PartitionSpec spec;
  std::vector<ClientShard> clients;
  Matrix coefficients;  // K x C Dirichlet draws for lds mode, empty otherwise
};

/// Symmetric Dirichlet(alpha) over `k` categories, sampled in log space so
/// that very small alpha never produces an all-zero vector.
Vector sample_dirichlet(double alpha, int k, Rng& rng);

/// Integer counts summing exactly to `total`, proportional to `proportions`.
/// Leftover units go to the largest fractional parts, ties to the lower index.
std::vector<std::int64_t> largest_remainder(const Vector& proportions, std::int64_t total);

/// Round half up.
std::int64_t round_count(double x);

Partition dirichlet_label_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec);
Partition domain_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec);
Partition lds_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec);
Partition make_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec);

/// Disjointness, index range and (for dirichlet_label) exact coverage.
void validate_partition(const Partition& partition, const EmbeddingDataset& dataset);

/// K x C table of per-client class counts.
Eigen::MatrixXi client_class_counts(const Partition& partition, const EmbeddingDataset& dataset);

std::string partition_to_json(const Partition& partition);
Partition partition_from_json(std::string_view text);
void write_partition(const std::filesystem::path& path, const Partition& partition);
Partition read_partition(const std::filesystem::path& path);

}  // namespace ggeur
