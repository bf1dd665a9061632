#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ggeur/datastore.hpp"
#include "ggeur/federation.hpp"
#include "ggeur/partition.hpp"

namespace ggeur {

// JSON readers for the CLI's input files. Unknown keys are rejected so that
// typos surface as UsageError instead of silently falling back to defaults.

ExperimentConfig parse_experiment_config(std::string_view text);
std::string experiment_config_to_json(const ExperimentConfig& config);

SyntheticSpec parse_synthetic_spec(std::string_view text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

PartitionSpec parse_partition_spec(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace ggeur
