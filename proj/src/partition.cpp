#include "ggeur/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ggeur/error.hpp"
#include "json.hpp"

namespace ggeur {

using json = nlohmann::json;

const char* to_string(PartitionMode mode) {
  switch (mode) {
    case PartitionMode::kDirichletLabel: return "dirichlet_label";
    case PartitionMode::kDomainPerClient: return "domain_per_client";
    case PartitionMode::kLds: return "lds";
  }
  return "unknown";
}

PartitionMode parse_partition_mode(std::string_view text) {
  if (text == "dirichlet_label") return PartitionMode::kDirichletLabel;
  if (text == "domain_per_client") return PartitionMode::kDomainPerClient;
  if (text == "lds") return PartitionMode::kLds;
  throw UsageError("unknown partition mode: " + std::string(text));
}

void PartitionSpec::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw UsageError("partition beta must be a positive finite number");
  if (num_clients < 1) throw UsageError("partition num_clients must be >= 1");
  if (!(fraction_per_domain > 0.0 && fraction_per_domain <= 1.0)) {
    throw UsageError("partition fraction_per_domain must lie in (0, 1]");
  }
}

Vector sample_dirichlet(double alpha, int k, Rng& rng) {
  Vector logs(k);
  for (int i = 0; i < k; ++i) logs(i) = log_gamma_variate(alpha, rng);
  const double top = logs.maxCoeff();
  Vector w = (logs.array() - top).exp().matrix();
  return w / w.sum();
}

std::vector<std::int64_t> largest_remainder(const Vector& proportions, std::int64_t total) {
  const auto k = static_cast<std::size_t>(proportions.size());
  if (k == 0) throw UsageError("largest_remainder: empty proportions");
  if (std::abs(proportions.sum() - 1.0) > 1e-9 || (proportions.array() < 0.0).any()) {
    throw UsageError("largest_remainder: proportions must be non-negative and sum to 1");
  }
  std::vector<std::int64_t> counts(k, 0);
  std::vector<double> frac(k, 0.0);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = proportions(static_cast<Eigen::Index>(i)) * static_cast<double>(total);
    counts[i] = static_cast<std::int64_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Sum of floors never exceeds `total` for proportions summing to 1, and at
  // most k units remain.
  for (std::size_t i = 0; assigned < total; i = (i + 1) % k) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

std::int64_t round_count(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

namespace {

// Train indices of `split` grouped by label.
std::vector<std::vector<std::uint32_t>> indices_by_class(const LabeledSplit& split, int classes) {
  std::vector<std::vector<std::uint32_t>> out(static_cast<std::size_t>(classes));
  for (std::uint32_t i = 0; i < split.size(); ++i) out[split.labels[i]].push_back(i);
  return out;
}

void shuffle_indices(std::vector<std::uint32_t>& v, Rng& rng) { std::shuffle(v.begin(), v.end(), rng); }

void sort_shards(Partition& p) {
  for (auto& c : p.clients) std::sort(c.indices.begin(), c.indices.end());
}

}  // namespace

Partition dirichlet_label_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec) {
  spec.validate();
  if (spec.mode != PartitionMode::kDirichletLabel) throw UsageError("dirichlet_label_partition: wrong mode");
  if (dataset.domains.size() != 1) {
    throw DataError("dirichlet_label partition needs a single-domain dataset, got " +
                    std::to_string(dataset.domains.size()) + " domains");
  }
  const DomainSplit& domain = dataset.domains.front();
  Partition out;
  out.spec = spec;
  for (int k = 0; k < spec.num_clients; ++k) out.clients.push_back({k, domain.domain, {}});

  auto by_class = indices_by_class(domain.train, dataset.classes);
  for (int c = 0; c < dataset.classes; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    Rng rng = make_stream(spec.seed, "partition/dirichlet", {c});
    const Vector proportions = sample_dirichlet(spec.beta, spec.num_clients, rng);
    shuffle_indices(pool, rng);
    const auto counts = largest_remainder(proportions, static_cast<std::int64_t>(pool.size()));
    std::size_t cursor = 0;
    for (int k = 0; k < spec.num_clients; ++k) {
      auto& dst = out.clients[static_cast<std::size_t>(k)].indices;
      const auto take = static_cast<std::size_t>(counts[static_cast<std::size_t>(k)]);
      dst.insert(dst.end(), pool.begin() + static_cast<std::ptrdiff_t>(cursor),
                 pool.begin() + static_cast<std::ptrdiff_t>(cursor + take));
      cursor += take;
    }
  }
  sort_shards(out);
  return out;
}

Partition domain_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec) {
  spec.validate();
  if (spec.mode != PartitionMode::kDomainPerClient) throw UsageError("domain_partition: wrong mode");
  if (static_cast<int>(dataset.domains.size()) != spec.num_clients) {
    throw DataError("domain_per_client partition needs one client per domain: " +
                    std::to_string(dataset.domains.size()) + " domains vs " + std::to_string(spec.num_clients) +
                    " clients");
  }
  Partition out;
  out.spec = spec;
  for (int k = 0; k < spec.num_clients; ++k) {
    const DomainSplit& domain = dataset.domains[static_cast<std::size_t>(k)];
    std::vector<std::uint32_t> pool(domain.train.size());
    std::iota(pool.begin(), pool.end(), 0u);
    Rng rng = make_stream(spec.seed, "partition/domain", {k});
    shuffle_indices(pool, rng);
    const auto keep = static_cast<std::size_t>(
        std::min<std::int64_t>(round_count(spec.fraction_per_domain * static_cast<double>(pool.size())),
                               static_cast<std::int64_t>(pool.size())));
    pool.resize(keep);
    out.clients.push_back({k, domain.domain, std::move(pool)});
  }
  sort_shards(out);
  return out;
}

Partition lds_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec) {
  spec.validate();
  if (spec.mode != PartitionMode::kLds) throw UsageError("lds_partition: wrong mode");
  const int k_clients = spec.num_clients;
  if (static_cast<int>(dataset.domains.size()) != k_clients) {
    throw DataError("lds partition needs one client per domain: " + std::to_string(dataset.domains.size()) +
                    " domains vs " + std::to_string(k_clients) + " clients");
  }
  for (const auto& d : dataset.domains) {
    std::vector<bool> seen(static_cast<std::size_t>(dataset.classes), false);
    for (auto l : d.train.labels) seen[l] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw DataError("lds partition: domain " + d.domain + " does not cover all " +
                      std::to_string(dataset.classes) + " classes");
    }
  }

  Partition out;
  out.spec = spec;
  out.coefficients.resize(k_clients, dataset.classes);
  for (int c = 0; c < dataset.classes; ++c) {
    Rng rng = make_stream(spec.seed, "partition/lds", {c});
    out.coefficients.col(c) = sample_dirichlet(spec.beta, k_clients, rng);
  }
  for (int k = 0; k < k_clients; ++k) {
    const DomainSplit& domain = dataset.domains[static_cast<std::size_t>(k)];
    auto by_class = indices_by_class(domain.train, dataset.classes);
    ClientShard shard{k, domain.domain, {}};
    for (int c = 0; c < dataset.classes; ++c) {
      auto& pool = by_class[static_cast<std::size_t>(c)];
      Rng rng = make_stream(spec.seed, "partition/lds-pick", {k, c});
      shuffle_indices(pool, rng);
      const auto keep = static_cast<std::size_t>(std::min<std::int64_t>(
          round_count(out.coefficients(k, c) * static_cast<double>(pool.size())), static_cast<std::int64_t>(pool.size())));
      shard.indices.insert(shard.indices.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    out.clients.push_back(std::move(shard));
  }
  sort_shards(out);
  return out;
}

Partition make_partition(const EmbeddingDataset& dataset, const PartitionSpec& spec) {
  switch (spec.mode) {
    case PartitionMode::kDirichletLabel: return dirichlet_label_partition(dataset, spec);
    case PartitionMode::kDomainPerClient: return domain_partition(dataset, spec);
    case PartitionMode::kLds: return lds_partition(dataset, spec);
  }
  throw UsageError("unknown partition mode");
}

void validate_partition(const Partition& partition, const EmbeddingDataset& dataset) {
  std::vector<std::vector<bool>> used;
  for (const auto& d : dataset.domains) used.emplace_back(d.train.size(), false);
  for (const auto& shard : partition.clients) {
    std::size_t d = 0;
    while (d < dataset.domains.size() && dataset.domains[d].domain != shard.domain) ++d;
    if (d == dataset.domains.size()) throw DataError("partition: client " + std::to_string(shard.client_id) + " names unknown domain " + shard.domain);
    for (auto i : shard.indices) {
      if (i >= used[d].size()) throw DataError("partition: index " + std::to_string(i) + " out of range in domain " + shard.domain);
      if (used[d][i]) throw DataError("partition: index " + std::to_string(i) + " assigned twice in domain " + shard.domain);
      used[d][i] = true;
    }
  }
  if (partition.spec.mode == PartitionMode::kDirichletLabel) {
    for (std::size_t d = 0; d < used.size(); ++d) {
      if (std::find(used[d].begin(), used[d].end(), false) != used[d].end()) {
        throw DataError("partition: dirichlet_label shards do not cover the train split of " + dataset.domains[d].domain);
      }
    }
  }
}

Eigen::MatrixXi client_class_counts(const Partition& partition, const EmbeddingDataset& dataset) {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(partition.clients.size()), dataset.classes);
  for (std::size_t k = 0; k < partition.clients.size(); ++k) {
    const auto& shard = partition.clients[k];
    const LabeledSplit& train = dataset.domain(shard.domain).train;
    for (auto i : shard.indices) {
      if (i >= train.size()) throw DataError("partition index out of range");
      ++counts(static_cast<Eigen::Index>(k), train.labels[i]);
    }
  }
  return counts;
}

std::string partition_to_json(const Partition& partition) {
  json j;
  j["mode"] = to_string(partition.spec.mode);
  j["seed"] = partition.spec.seed;
  j["beta"] = partition.spec.beta;
  j["num_clients"] = partition.spec.num_clients;
  j["fraction_per_domain"] = partition.spec.fraction_per_domain;
  j["clients"] = json::array();
  for (const auto& c : partition.clients) {
    j["clients"].push_back({{"client_id", c.client_id}, {"domain", c.domain}, {"indices", c.indices}});
  }
  if (partition.coefficients.size() > 0) {
    json rows = json::array();
    for (Eigen::Index k = 0; k < partition.coefficients.rows(); ++k) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < partition.coefficients.cols(); ++c) row.push_back(partition.coefficients(k, c));
      rows.push_back(row);
    }
    j["coefficients"] = rows;
  }
  return j.dump();
}

Partition partition_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    Partition p;
    p.spec.mode = parse_partition_mode(j.at("mode").get<std::string>());
    p.spec.seed = j.at("seed").get<std::uint64_t>();
    p.spec.beta = j.at("beta").get<double>();
    p.spec.num_clients = j.value("num_clients", static_cast<int>(j.at("clients").size()));
    p.spec.fraction_per_domain = j.value("fraction_per_domain", 1.0);
    for (const auto& c : j.at("clients")) {
      p.clients.push_back({c.at("client_id").get<int>(), c.at("domain").get<std::string>(),
                           c.at("indices").get<std::vector<std::uint32_t>>()});
    }
    if (j.contains("coefficients")) {
      const auto& rows = j.at("coefficients");
      const auto k = static_cast<Eigen::Index>(rows.size());
      const auto c = k > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
      p.coefficients.resize(k, c);
      for (Eigen::Index r = 0; r < k; ++r) {
        if (static_cast<Eigen::Index>(rows.at(r).size()) != c) throw DataError("partition: ragged coefficients");
        for (Eigen::Index q = 0; q < c; ++q) p.coefficients(r, q) = rows.at(r).at(q).get<double>();
      }
    }
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed partition file: ") + e.what());
  }
}

void write_partition(const std::filesystem::path& path, const Partition& partition) {
  const std::string text = partition_to_json(partition) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Partition read_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return partition_from_json(ss.str());
}

}  // namespace ggeur
