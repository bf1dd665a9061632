// ggeur: command-line front end for the federated simulator.
//
//   ggeur synth      --spec synth.json --out DIR
//   ggeur partition  --dataset manifest.json --spec partition.json --out partition.json
//   ggeur similarity --dataset manifest.json --out DIR [--top 5]
//   ggeur run        --config experiment.json --out DIR [--workers N] [--dataset manifest.json] [--seed S]
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 runtime error.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ggeur/config.hpp"
#include "ggeur/datastore.hpp"
#include "ggeur/error.hpp"
#include "ggeur/federation.hpp"
#include "ggeur/partition.hpp"
#include "ggeur/report.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const ggeur::SyntheticSpec spec = ggeur::parse_synthetic_spec(ggeur::read_text_file(spec_path));
  const ggeur::EmbeddingDataset ds = ggeur::synth_generate(spec);
  const fs::path manifest = ggeur::save_dataset(ds, out);
  std::size_t train = 0;
  for (const auto& d : ds.domains) train += d.train.size();
  std::cout << "synth: wrote " << manifest.string() << " (" << ds.domains.size() << " domains, " << train
            << " train rows, dim " << ds.dim << ")\n";
  return 0;
}

int cmd_partition(const fs::path& dataset_path, const fs::path& spec_path, const fs::path& out) {
  const ggeur::PartitionSpec spec = ggeur::parse_partition_spec(ggeur::read_text_file(spec_path));
  const ggeur::EmbeddingDataset ds = ggeur::load_dataset(dataset_path);
  const ggeur::Partition partition = ggeur::make_partition(ds, spec);
  ggeur::validate_partition(partition, ds);
  ggeur::write_partition(out, partition);
  fs::path heatmap = out;
  heatmap.replace_filename(out.stem().string() + "_heatmap.csv");
  ggeur::write_heatmap_csv(heatmap, ggeur::client_class_counts(partition, ds));
  std::size_t assigned = 0;
  for (const auto& c : partition.clients) assigned += c.indices.size();
  std::cout << "partition: " << ggeur::to_string(spec.mode) << " " << partition.clients.size() << " clients, "
            << assigned << " samples -> " << out.string() << "\n";
  return 0;
}

int cmd_similarity(const fs::path& dataset_path, const fs::path& out, int top) {
  const ggeur::EmbeddingDataset ds = ggeur::load_dataset(dataset_path);
  const auto shapes = ggeur::domain_shapes_from_dataset(ds);
  const auto matrices = ggeur::cross_domain_similarity_matrix(shapes, top);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ggeur::Error("cannot create " + out.string() + ": " + ec.message());
  for (const auto& m : matrices) {
    for (int c : m.missing_a) std::cerr << "warning: class " << c << " missing in domain " << m.domain_a << "\n";
    for (int c : m.missing_b) std::cerr << "warning: class " << c << " missing in domain " << m.domain_b << "\n";
    ggeur::write_similarity_csv(out / ggeur::similarity_file_name(m), m);
  }
  std::cout << "similarity: " << matrices.size() << " matrices (top " << top << ") -> " << out.string() << "\n";
  return 0;
}

int cmd_run(const fs::path& config_path, const fs::path& out, int workers, const std::string& dataset_override,
            const std::optional<std::uint64_t>& seed_override) {
  ggeur::ExperimentConfig config = ggeur::parse_experiment_config(ggeur::read_text_file(config_path));
  if (seed_override) {
    config.seed = *seed_override;
    config.partition.seed = *seed_override;
  }
  const fs::path base = config_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  if (!dataset_override.empty()) {
    config.dataset = dataset_override;
  } else if (config.dataset.empty()) {
    throw ggeur::UsageError("config has no \"dataset\" and --dataset was not given");
  } else {
    config.dataset = resolve(config.dataset).string();
  }
  if (!config.partition_file.empty()) config.partition_file = resolve(config.partition_file).string();
  if (workers < 1) throw ggeur::UsageError("--workers must be >= 1");

  const ggeur::EmbeddingDataset ds = ggeur::load_dataset(config.dataset);
  ggeur::RunOptions options;
  options.workers = workers;
  const ggeur::FederationResult result = ggeur::run_federation(config, ds, options);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  const ggeur::Summary summary =
      ggeur::emit_reports(result, config, ds, out, ggeur::experiment_config_to_json(config));
  std::cout << "run: rounds=" << config.rounds << " avg=" << summary.avg << " std=" << summary.std
            << " ggeur=" << (config.ggeur_enabled ? "on" : "off") << " -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated simulator with geometry-guided embedding augmentation"};
  app.require_subcommand(1);

  std::string spec, out, dataset, config;
  int top = 5;
  int workers = 1;
  std::optional<std::uint64_t> seed;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-domain embedding dataset");
  synth->add_option("--spec", spec, "Synthetic spec JSON")->required();
  synth->add_option("--out", out, "Output directory")->required();

  auto* part = app.add_subcommand("partition", "Build client shards and a class-count heatmap");
  part->add_option("--dataset", dataset, "Dataset manifest")->required();
  part->add_option("--spec", spec, "Partition spec JSON")->required();
  part->add_option("--out", out, "Partition JSON output path")->required();

  auto* sim = app.add_subcommand("similarity", "Cross-domain geometric-shape similarity CSVs");
  sim->add_option("--dataset", dataset, "Dataset manifest")->required();
  sim->add_option("--out", out, "Output directory")->required();
  sim->add_option("--top", top, "Number of leading eigenvectors")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Run a federation experiment");
  run->add_option("--config", config, "Experiment config JSON")->required();
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--workers", workers, "Client-parallel worker threads");
  run->add_option("--dataset", dataset, "Override the config's dataset manifest");
  run->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(spec, out);
    if (*part) return cmd_partition(dataset, spec, out);
    if (*sim) return cmd_similarity(dataset, out, top);
    if (*run) return cmd_run(config, out, workers, dataset, seed);
  } catch (const ggeur::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ggeur::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
