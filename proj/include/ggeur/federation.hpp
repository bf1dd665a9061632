#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ggeur/augment.hpp"
#include "ggeur/datastore.hpp"
#include "ggeur/geometry.hpp"
#include "ggeur/model.hpp"
#include "ggeur/partition.hpp"

namespace ggeur {

enum class FedAvgWeighting { kAugmentedCount, kOriginalCount };

struct ExperimentConfig {
  std::string dataset;         // manifest path, resolved relative to the config file
  std::string partition_file;  // optional pre-built partition
  PartitionSpec partition;
  AugmentationPlan augmentation;
  SgdConfig sgd;
  int rounds = 100;            // E
  int local_rounds = 10;       // U, epochs per round
  std::uint64_t seed = 0;
  std::string aggregator = "fedavg";
  bool ggeur_enabled = true;
  bool step2_enabled = true;
  FedAvgWeighting weighting = FedAvgWeighting::kAugmentedCount;
  bool sample_std = false;

  void validate() const;
};

/// One client's training set. Rows are in double precision; `tags` marks
/// where each row came from.
struct ClientData {
  int client_id = 0;
  std::string domain;
  RowMatrix rows;
  std::vector<int> labels;
  std::vector<Provenance> tags;
  std::int64_t original_count = 0;

  Eigen::Index size() const noexcept { return rows.rows(); }
};

ClientData load_client_data(const ClientShard& shard, const EmbeddingDataset& dataset);

struct GeometryBundle {
  // uploads[k][c]: what client k sends for class c (empty-flagged if absent)
  std::vector<std::vector<ClassStats>> uploads;
  std::vector<std::optional<GeometricShape>> shapes;  // indexed by class
  std::vector<Prototype> prototypes;                  // every non-empty (client, class) mean
  std::vector<std::string> warnings;
};

/// Clients compute per-class stats from their original samples; the server
/// aggregates each class over every client (all domains pooled) and builds
/// its shape.
GeometryBundle prepare_geometry(std::span<const ClientData> clients, int classes, int dim);
GeometryBundle prepare_geometry(const Partition& partition, const EmbeddingDataset& dataset);

/// Applies single- or multi-domain augmentation (per `config.augmentation.mode`)
/// to every class of one client. Rows come out grouped by class.
ClientData augment_client(const ClientData& original, const GeometryBundle& geometry, const ExperimentConfig& config);

struct ClientUpdate {
  int client_id = 0;
  LinearClassifierParams params;
  double weight = 0.0;
  double train_loss = 0.0;  // mean cross-entropy over the last epoch's batches
};

/// U epochs of minibatch SGD starting from `global`. Momentum restarts each
/// round; batch order comes from the (seed, client, round) shuffle stream.
ClientUpdate run_local_training(const ClientData& data, const LinearClassifierParams& global,
                                const ExperimentConfig& config, int round);

/// Weighted entrywise mean. The result does not depend on the order of
/// `updates`, and equals the shared params exactly when every update agrees.
LinearClassifierParams fedavg_aggregate(std::span<const ClientUpdate> updates);

class Aggregator {
 public:
  virtual ~Aggregator() = default;
  virtual std::string name() const = 0;
  virtual LinearClassifierParams aggregate(std::span<const ClientUpdate> updates) const = 0;
};

class FedAvgAggregator final : public Aggregator {
 public:
  std::string name() const override { return "fedavg"; }
  LinearClassifierParams aggregate(std::span<const ClientUpdate> updates) const override {
    return fedavg_aggregate(updates);
  }
};

std::unique_ptr<Aggregator> make_aggregator(std::string_view name);

struct DomainMetric {
  std::string domain;
  double accuracy = 0.0;
  double loss = 0.0;
};

struct RoundRecord {
  int round = 0;                       // 1-based
  std::vector<double> client_accuracy; // each client's local model on its domain's test split
  std::vector<DomainMetric> domains;   // global model on every domain's test split
  LinearClassifierParams global;
};

struct RunOptions {
  int workers = 1;
  std::optional<Partition> partition;  // overrides config.partition / partition_file
  std::function<void(const RoundRecord&)> on_round;
};

struct FederationResult {
  Partition partition;
  GeometryBundle geometry;
  std::vector<std::int64_t> train_sizes;  // per client, after augmentation
  std::vector<RoundRecord> rounds;
  std::vector<std::string> warnings;
};

FederationResult run_federation(const ExperimentConfig& config, const EmbeddingDataset& dataset,
                                const RunOptions& options = {});

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception (by index) is rethrown after all tasks finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace ggeur
