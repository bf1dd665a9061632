#include "ggeur/federation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <thread>

#include "ggeur/error.hpp"
#include "ggeur/rng.hpp"

namespace ggeur {

void ExperimentConfig::validate() const {
  partition.validate();
  augmentation.validate();
  sgd.validate();
  if (rounds < 1) throw UsageError("config: rounds must be >= 1");
  if (local_rounds < 1) throw UsageError("config: local_rounds must be >= 1");
  make_aggregator(aggregator);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ClientData load_client_data(const ClientShard& shard, const EmbeddingDataset& dataset) {
  const LabeledSplit& train = dataset.domain(shard.domain).train;
  ClientData out;
  out.client_id = shard.client_id;
  out.domain = shard.domain;
  out.rows = train.gather(shard.indices);
  out.labels.reserve(shard.indices.size());
  for (auto i : shard.indices) out.labels.push_back(static_cast<int>(train.labels[i]));
  out.tags.assign(shard.indices.size(), Provenance::kOriginal);
  out.original_count = static_cast<std::int64_t>(shard.indices.size());
  return out;
}

namespace {

RowMatrix class_rows(const ClientData& data, int class_id) {
  std::vector<Eigen::Index> picked;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] == class_id && data.tags[i] == Provenance::kOriginal) picked.push_back(static_cast<Eigen::Index>(i));
  }
  RowMatrix out(static_cast<Eigen::Index>(picked.size()), data.rows.cols());
  for (std::size_t i = 0; i < picked.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.rows.row(picked[i]);
  return out;
}

}  // namespace

GeometryBundle prepare_geometry(std::span<const ClientData> clients, int classes, int dim) {
  GeometryBundle out;
  out.uploads.resize(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const ClientData& client = clients[k];
    if (client.rows.rows() > 0 && client.rows.cols() != dim) throw DataError("prepare_geometry: client width mismatch");
    for (int c = 0; c < classes; ++c) {
      RowMatrix rows = class_rows(client, c);
      if (rows.rows() == 0) rows.resize(0, dim);
      out.uploads[k].push_back(compute_class_stats(rows, c));
    }
  }
  out.shapes.resize(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    std::vector<ClassStats> locals;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      const ClassStats& s = out.uploads[k][static_cast<std::size_t>(c)];
      locals.push_back(s);
      if (!s.empty()) out.prototypes.push_back({c, clients[k].client_id, clients[k].domain, s.mean});
    }
    const bool any = std::any_of(locals.begin(), locals.end(), [](const ClassStats& s) { return !s.empty(); });
    if (!any) {
      out.warnings.push_back("class " + std::to_string(c) + " is absent from every client; no shape, augmentation skipped");
      continue;
    }
    out.shapes[static_cast<std::size_t>(c)] = build_shape(aggregate_global_stats(locals));
  }
  return out;
}

GeometryBundle prepare_geometry(const Partition& partition, const EmbeddingDataset& dataset) {
  std::vector<ClientData> clients;
  for (const auto& shard : partition.clients) clients.push_back(load_client_data(shard, dataset));
  return prepare_geometry(clients, dataset.classes, dataset.dim);
}

ClientData augment_client(const ClientData& original, const GeometryBundle& geometry, const ExperimentConfig& config) {
  const auto& plan = config.augmentation;
  const auto classes = static_cast<int>(geometry.shapes.size());
  std::vector<AugmentedSamples> parts;
  Eigen::Index total = 0;
  for (int c = 0; c < classes; ++c) {
    RowMatrix local = class_rows(original, c);
    if (local.rows() == 0) local.resize(0, original.rows.cols());
    const auto& shape = geometry.shapes[static_cast<std::size_t>(c)];
    const StreamId id{config.seed, original.client_id, c};
    AugmentedSamples part;
    part.class_id = c;
    if (!shape) {
      part.rows = local;
      part.tags.assign(static_cast<std::size_t>(local.rows()), Provenance::kOriginal);
    } else if (plan.mode == AugmentMode::kSingleDomain) {
      if (local.rows() == 0) continue;
      part = augment_single_domain(local, *shape, plan, id);
    } else {
      std::vector<Prototype> foreign;
      for (const auto& p : geometry.prototypes) {
        if (p.class_id == c && p.source_domain != original.domain) foreign.push_back(p);
      }
      if (local.rows() == 0 && (foreign.empty() || !config.step2_enabled)) continue;
      if (local.cols() == 0) local.resize(0, shape->dim());
      part = augment_multi_domain(local, *shape, foreign, plan, id, config.step2_enabled);
    }
    total += part.size();
    parts.push_back(std::move(part));
  }

  ClientData out;
  out.client_id = original.client_id;
  out.domain = original.domain;
  out.original_count = original.original_count;
  out.rows.resize(total, original.rows.cols());
  Eigen::Index row = 0;
  for (const auto& part : parts) {
    out.rows.middleRows(row, part.size()) = part.rows;
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(part.size()), part.class_id);
    out.tags.insert(out.tags.end(), part.tags.begin(), part.tags.end());
    row += part.size();
  }
  return out;
}

ClientUpdate run_local_training(const ClientData& data, const LinearClassifierParams& global,
                                const ExperimentConfig& config, int round) {
  config.sgd.validate();
  if (config.local_rounds < 0) throw UsageError("local_rounds must be >= 0");
  ClientUpdate out;
  out.client_id = data.client_id;
  out.params = global;
  out.weight = static_cast<double>(config.weighting == FedAvgWeighting::kAugmentedCount ? data.size()
                                                                                        : data.original_count);
  const Eigen::Index n = data.size();
  if (n == 0 || config.local_rounds == 0) return out;
  if (data.rows.cols() != global.dim()) throw DataError("run_local_training: data width does not match model");

  LinearClassifierParams velocity = LinearClassifierParams::zeros(global.classes(), global.dim());
  Rng rng = make_stream(config.seed, "train/shuffle", {data.client_id, round});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const Eigen::Index b = config.sgd.batch_size;
  RowMatrix batch(b, data.rows.cols());
  std::vector<int> labels(static_cast<std::size_t>(b));
  for (int epoch = 0; epoch < config.local_rounds; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += b) {
      const Eigen::Index len = std::min(b, n - start);
      if (batch.rows() != len) {
        batch.resize(len, data.rows.cols());
        labels.resize(static_cast<std::size_t>(len));
      }
      for (Eigen::Index i = 0; i < len; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
        batch.row(i) = data.rows.row(src);
        labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
      }
      const LossAndGrad lg = loss_and_grad(out.params, batch, labels, config.sgd.weight_decay);
      epoch_loss += lg.cross_entropy * static_cast<double>(len);
      sgd_step(out.params, velocity, lg.grad, config.sgd);
    }
    out.train_loss = epoch_loss / static_cast<double>(n);
  }
  if (!out.params.weights.allFinite() || !out.params.bias.allFinite()) {
    throw Error("client " + std::to_string(data.client_id) + " diverged in round " + std::to_string(round));
  }
  return out;
}

namespace {

bool params_less(const LinearClassifierParams& a, const LinearClassifierParams& b) {
  if (a.weights.size() != b.weights.size()) return a.weights.size() < b.weights.size();
  const auto lw = std::lexicographical_compare(a.weights.data(), a.weights.data() + a.weights.size(), b.weights.data(),
                                               b.weights.data() + b.weights.size());
  const auto rw = std::lexicographical_compare(b.weights.data(), b.weights.data() + b.weights.size(), a.weights.data(),
                                               a.weights.data() + a.weights.size());
  if (lw || rw) return lw;
  return std::lexicographical_compare(a.bias.data(), a.bias.data() + a.bias.size(), b.bias.data(),
                                      b.bias.data() + b.bias.size());
}

}  // namespace

LinearClassifierParams fedavg_aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw Error("fedavg_aggregate: no client updates");
  const auto classes = updates.front().params.classes();
  const auto dim = updates.front().params.dim();
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.params.classes() != classes || u.params.dim() != dim) throw DataError("fedavg_aggregate: shape mismatch");
    if (!(u.weight >= 0.0) || !std::isfinite(u.weight)) throw DataError("fedavg_aggregate: invalid weight");
  }

  // Canonical order makes the floating-point reduction independent of the
  // order clients report in.
  std::vector<const ClientUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(), [](const ClientUpdate* a, const ClientUpdate* b) {
    if (a->client_id != b->client_id) return a->client_id < b->client_id;
    if (a->weight != b->weight) return a->weight < b->weight;
    return params_less(a->params, b->params);
  });
  for (const auto* u : sorted) total += u->weight;
  if (!(total > 0.0)) throw Error("fedavg_aggregate: total weight is zero");

  // Accumulate deviations from a reference client; identical inputs then
  // reproduce the reference bit-for-bit.
  const LinearClassifierParams& ref = sorted.front()->params;
  Matrix dw = Matrix::Zero(classes, dim);
  Vector db = Vector::Zero(classes);
  for (const auto* u : sorted) {
    const double w = u->weight / total;
    dw += w * (u->params.weights - ref.weights);
    db += w * (u->params.bias - ref.bias);
  }
  return {ref.weights + dw, ref.bias + db};
}

std::unique_ptr<Aggregator> make_aggregator(std::string_view name) {
  if (name == "fedavg") return std::make_unique<FedAvgAggregator>();
  throw UsageError("unknown aggregator: " + std::string(name));
}

FederationResult run_federation(const ExperimentConfig& config, const EmbeddingDataset& dataset,
                                const RunOptions& options) {
  config.validate();
  dataset.validate();
  FederationResult result;
  if (options.partition) {
    result.partition = *options.partition;
  } else if (!config.partition_file.empty()) {
    result.partition = read_partition(config.partition_file);
  } else {
    PartitionSpec spec = config.partition;
    spec.seed = config.seed;
    result.partition = make_partition(dataset, spec);
  }
  validate_partition(result.partition, dataset);

  const std::size_t k_clients = result.partition.clients.size();
  if (k_clients == 0) throw DataError("partition has no clients");
  std::vector<ClientData> clients(k_clients);
  parallel_for(k_clients, options.workers,
               [&](std::size_t k) { clients[k] = load_client_data(result.partition.clients[k], dataset); });

  // Geometry only ever sees the original samples.
  if (config.ggeur_enabled) {
    result.geometry = prepare_geometry(clients, dataset.classes, dataset.dim);
    result.warnings = result.geometry.warnings;
    std::vector<ClientData> augmented(k_clients);
    parallel_for(k_clients, options.workers,
                 [&](std::size_t k) { augmented[k] = augment_client(clients[k], result.geometry, config); });
    clients = std::move(augmented);
  }
  for (const auto& c : clients) result.train_sizes.push_back(c.size());

  const auto aggregator = make_aggregator(config.aggregator);
  LinearClassifierParams global = LinearClassifierParams::zeros(dataset.classes, dataset.dim);
  std::vector<ClientUpdate> updates(k_clients);
  std::vector<double> client_accuracy(k_clients);
  for (int round = 1; round <= config.rounds; ++round) {
    parallel_for(k_clients, options.workers, [&](std::size_t k) {
      updates[k] = run_local_training(clients[k], global, config, round);
      client_accuracy[k] = evaluate_split(updates[k].params, dataset.domain(clients[k].domain).test).accuracy;
    });
    global = aggregator->aggregate(updates);

    RoundRecord record;
    record.round = round;
    record.client_accuracy = client_accuracy;
    record.domains.resize(dataset.domains.size());
    parallel_for(dataset.domains.size(), options.workers, [&](std::size_t d) {
      const Evaluation e = evaluate_split(global, dataset.domains[d].test);
      record.domains[d] = {dataset.domains[d].domain, e.accuracy, e.loss};
    });
    record.global = global;
    if (options.on_round) options.on_round(record);
    result.rounds.push_back(std::move(record));
  }
  return result;
}

}  // namespace ggeur
