#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ggeur/federation.hpp"
#include "ggeur/geometry.hpp"

namespace ggeur {

struct Last5 {
  double value = 0.0;
  bool flagged = false;  // fewer than five entries; mean of all of them
};

Last5 last5_average(std::span<const double> series);

/// Standard deviation of per-domain accuracies; divisor D unless `sample`.
double cross_domain_std(std::span<const double> accuracies, bool sample = false);

/// Per-round, per-domain accuracy and loss, as written to metrics.csv.
struct MetricsLog {
  std::vector<std::string> domains;
  std::vector<int> rounds;
  Matrix accuracy;  // rounds x domains
  Matrix loss;

  static MetricsLog from_rounds(std::span<const RoundRecord> records);

  std::vector<double> domain_series(std::size_t d) const;
  std::vector<double> avg_series() const;  // unweighted mean over domains
  std::vector<double> std_series(bool sample = false) const;
};

struct Summary {
  double avg = 0.0;  // last-5 average of the AVG series
  double std = 0.0;  // cross-domain STD of per-domain last-5 averages
  bool last5_flagged = false;
  double final_avg = 0.0;
  std::vector<std::string> domains;
  std::vector<double> domain_last5;
};

Summary summarize(const MetricsLog& log, bool sample_std = false);

void write_metrics_csv(const std::filesystem::path& path, const MetricsLog& log);
MetricsLog read_metrics_csv(const std::filesystem::path& path);

/// summary.json, schema 1. `config_echo` is embedded verbatim as JSON.
void write_summary_json(const std::filesystem::path& path, const Summary& summary, std::uint64_t seed,
                        const std::string& config_echo);

void write_heatmap_csv(const std::filesystem::path& path, const Eigen::MatrixXi& counts);
void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& matrix);
std::string similarity_file_name(const SimilarityMatrix& matrix);

/// Per-domain class shapes computed from the clients' uploaded statistics.
std::vector<DomainShapes> domain_shapes_from_uploads(const GeometryBundle& geometry,
                                                     std::span<const ClientShard> clients,
                                                     std::span<const std::string> domain_order);

/// Per-domain class shapes from each domain's full train split.
std::vector<DomainShapes> domain_shapes_from_dataset(const EmbeddingDataset& dataset);

/// Writes metrics.csv, summary.json, partition_heatmap.csv and (when GGEUR
/// ran) one similarity CSV per domain pair. Creates `out_dir` if needed and
/// overwrites existing files.
Summary emit_reports(const FederationResult& result, const ExperimentConfig& config, const EmbeddingDataset& dataset,
                     const std::filesystem::path& out_dir, const std::string& config_echo);

}  // namespace ggeur
