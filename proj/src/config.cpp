#include "ggeur/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "ggeur/error.hpp"
#include "json.hpp"

namespace ggeur {

using json = nlohmann::json;

namespace {

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw UsageError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw UsageError(std::string(where) + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string(what) + ": " + e.what());
  }
}

PartitionSpec partition_from(const json& j) {
  only_keys(j, "partition", {"mode", "beta", "num_clients", "fraction_per_domain", "seed"});
  PartitionSpec spec;
  if (j.contains("mode")) spec.mode = parse_partition_mode(j.at("mode").get<std::string>());
  read(j, "beta", spec.beta);
  read(j, "num_clients", spec.num_clients);
  read(j, "fraction_per_domain", spec.fraction_per_domain);
  read(j, "seed", spec.seed);
  return spec;
}

json partition_json(const PartitionSpec& spec) {
  return {{"mode", to_string(spec.mode)},
          {"beta", spec.beta},
          {"num_clients", spec.num_clients},
          {"fraction_per_domain", spec.fraction_per_domain},
          {"seed", spec.seed}};
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  const json j = parse_json(text, "config");
  try {
    only_keys(j, "config",
              {"dataset", "partition_file", "partition", "augmentation", "sgd", "rounds", "local_rounds", "seed",
               "aggregator", "ggeur_enabled", "step2_enabled", "fedavg_weighting", "std"});
    ExperimentConfig c;
    read(j, "dataset", c.dataset);
    read(j, "partition_file", c.partition_file);
    if (j.contains("partition")) c.partition = partition_from(j.at("partition"));
    if (j.contains("augmentation")) {
      const json& a = j.at("augmentation");
      only_keys(a, "augmentation", {"mode", "target_per_class", "step1_target", "step2_per_prototype", "eigen_rank_limit"});
      if (a.contains("mode")) {
        const auto mode = a.at("mode").get<std::string>();
        if (mode == "single_domain") {
          c.augmentation.mode = AugmentMode::kSingleDomain;
        } else if (mode == "multi_domain") {
          c.augmentation.mode = AugmentMode::kMultiDomain;
        } else {
          throw UsageError("augmentation: unknown mode " + mode);
        }
      }
      read(a, "target_per_class", c.augmentation.target_per_class);
      read(a, "step1_target", c.augmentation.step1_target);
      read(a, "step2_per_prototype", c.augmentation.step2_per_prototype);
      read(a, "eigen_rank_limit", c.augmentation.eigen_rank_limit);
    }
    if (j.contains("sgd")) {
      const json& s = j.at("sgd");
      only_keys(s, "sgd", {"learning_rate", "momentum", "weight_decay", "batch_size"});
      read(s, "learning_rate", c.sgd.learning_rate);
      read(s, "momentum", c.sgd.momentum);
      read(s, "weight_decay", c.sgd.weight_decay);
      read(s, "batch_size", c.sgd.batch_size);
    }
    read(j, "rounds", c.rounds);
    read(j, "local_rounds", c.local_rounds);
    read(j, "seed", c.seed);
    read(j, "aggregator", c.aggregator);
    read(j, "ggeur_enabled", c.ggeur_enabled);
    read(j, "step2_enabled", c.step2_enabled);
    if (j.contains("fedavg_weighting")) {
      const auto w = j.at("fedavg_weighting").get<std::string>();
      if (w == "augmented") {
        c.weighting = FedAvgWeighting::kAugmentedCount;
      } else if (w == "original") {
        c.weighting = FedAvgWeighting::kOriginalCount;
      } else {
        throw UsageError("fedavg_weighting must be \"augmented\" or \"original\"");
      }
    }
    if (j.contains("std")) {
      const auto s = j.at("std").get<std::string>();
      if (s != "population" && s != "sample") throw UsageError("std must be \"population\" or \"sample\"");
      c.sample_std = s == "sample";
    }
    c.partition.seed = c.seed;
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  if (!c.partition_file.empty()) j["partition_file"] = c.partition_file;
  j["partition"] = partition_json(c.partition);
  j["augmentation"] = {{"mode", c.augmentation.mode == AugmentMode::kSingleDomain ? "single_domain" : "multi_domain"},
                       {"target_per_class", c.augmentation.target_per_class},
                       {"step1_target", c.augmentation.step1_target},
                       {"step2_per_prototype", c.augmentation.step2_per_prototype},
                       {"eigen_rank_limit", c.augmentation.eigen_rank_limit}};
  j["sgd"] = {{"learning_rate", c.sgd.learning_rate},
              {"momentum", c.sgd.momentum},
              {"weight_decay", c.sgd.weight_decay},
              {"batch_size", c.sgd.batch_size}};
  j["rounds"] = c.rounds;
  j["local_rounds"] = c.local_rounds;
  j["seed"] = c.seed;
  j["aggregator"] = c.aggregator;
  j["ggeur_enabled"] = c.ggeur_enabled;
  j["step2_enabled"] = c.step2_enabled;
  j["fedavg_weighting"] = c.weighting == FedAvgWeighting::kAugmentedCount ? "augmented" : "original";
  j["std"] = c.sample_std ? "sample" : "population";
  return j.dump();
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  const json j = parse_json(text, "synthetic spec");
  try {
    only_keys(j, "synthetic spec",
              {"name", "dim", "classes", "domains", "spectrum_scale", "spectrum_decay", "spectrum_plateau", "spectrum_floor", "shared_basis",
               "class_separation", "domain_shift", "train_per_class", "test_per_class", "seed"});
    SyntheticSpec s;
    read(j, "name", s.name);
    read(j, "dim", s.dim);
    read(j, "classes", s.classes);
    if (j.contains("domains")) {
      const json& d = j.at("domains");
      if (d.is_number_integer()) {
        const int count = d.get<int>();
        if (count < 1) throw UsageError("synthetic spec: domains must be >= 1");
        s.domains.clear();
        for (int i = 0; i < count; ++i) s.domains.push_back("d" + std::to_string(i));
      } else {
        s.domains = d.get<std::vector<std::string>>();
      }
    }
    read(j, "spectrum_scale", s.spectrum_scale);
    read(j, "spectrum_decay", s.spectrum_decay);
    read(j, "spectrum_plateau", s.spectrum_plateau);
    read(j, "spectrum_floor", s.spectrum_floor);
    read(j, "shared_basis", s.shared_basis);
    read(j, "class_separation", s.class_separation);
    read(j, "domain_shift", s.domain_shift);
    read(j, "train_per_class", s.train_per_class);
    read(j, "test_per_class", s.test_per_class);
    read(j, "seed", s.seed);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw UsageError(std::string("synthetic spec: ") + e.what());
  }
}

std::string synthetic_spec_to_json(const SyntheticSpec& s) {
  json j{{"name", s.name},
         {"dim", s.dim},
         {"classes", s.classes},
         {"domains", s.domains},
         {"spectrum_scale", s.spectrum_scale},
         {"spectrum_decay", s.spectrum_decay},
         {"spectrum_plateau", s.spectrum_plateau},
         {"spectrum_floor", s.spectrum_floor},
         {"shared_basis", s.shared_basis},
         {"class_separation", s.class_separation},
         {"domain_shift", s.domain_shift},
         {"train_per_class", s.train_per_class},
         {"test_per_class", s.test_per_class},
         {"seed", s.seed}};
  return j.dump(2);
}

PartitionSpec parse_partition_spec(std::string_view text) {
  const json j = parse_json(text, "partition spec");
  try {
    PartitionSpec spec = partition_from(j);
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw UsageError(std::string("partition spec: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ggeur
