// Acceptance suite. Each criterion prints one PASS/FAIL line; the exit status
// is non-zero when any selected criterion fails.
//
//   acceptance [--only NAME]... [--ggeur PATH] [--work DIR] [--list]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "e2e.hpp"
#include "ggeur/augment.hpp"
#include "ggeur/datastore.hpp"
#include "ggeur/federation.hpp"
#include "ggeur/geometry.hpp"
#include "ggeur/model.hpp"
#include "ggeur/report.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace ggeur;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path ggeur_binary;
  fs::path work;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome global_covariance_exactness(const Context&) {
  std::mt19937_64 rng(1001);
  const int dims[] = {4, 64, 512};
  const int clients[] = {1, 3, 10};
  const int counts[] = {0, 1, 7, 500};
  double worst = 0.0;
  double timed = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int p = dims[inst % 3];
    const int k = clients[(inst / 3) % 3];
    std::vector<RowMatrix> shards;
    std::int64_t total = 0;
    for (int c = 0; c < k; ++c) {
      int n = counts[rng() % 4];
      if (c == k - 1 && total == 0 && n == 0) n = 7;  // pooled covariance needs N > 0
      std::normal_distribution<double> shift(0.0, 3.0);
      shards.push_back(oracle::gaussian_rows(rng, n, p, 1.0 + static_cast<double>(c % 3), shift(rng)));
      total += n;
    }
    const auto start = Clock::now();
    std::vector<ClassStats> locals;
    for (const auto& s : shards) locals.push_back(compute_class_stats(s, 0));
    const GlobalClassStats global = aggregate_global_stats(locals);
    timed += seconds_since(start);

    // Oracle: stack every sample and take the two-pass population covariance.
    RowMatrix pooled(total, p);
    Eigen::Index row = 0;
    for (const auto& s : shards) {
      pooled.middleRows(row, s.rows()) = s;
      row += s.rows();
    }
    const Vector mean = pooled.colwise().mean().transpose();
    const RowMatrix centered = pooled.rowwise() - mean.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(total);
    worst = std::max(worst, oracle::rel_frobenius(global.covariance, cov));
    worst = std::max(worst, (global.mean - mean).norm() / std::max(1.0, mean.norm()));
    if (global.total_count != total) return {false, "total count mismatch"};
  }
  const bool pass = worst <= 1e-10 && timed < 30.0;
  return {pass, "max rel Frobenius " + fmt("%.3g", worst) + ", aggregation time " + fmt("%.2f", timed) + " s"};
}

Outcome eigendecomposition(const Context&) {
  std::mt19937_64 rng(1002);
  double worst_residual = 0.0;
  double worst_ortho = 0.0;
  const auto start = Clock::now();
  for (int inst = 0; inst < 100; ++inst) {
    const int p = inst < 10 ? 512 : 2 + static_cast<int>(rng() % 255);
    const int rank = (inst % 4 == 0) ? std::max(1, p / 8) : p;  // include low-rank matrices
    const Matrix a = oracle::random_psd(rng, p, rank);
    const EigenDecomposition e = symmetric_eigendecompose(a);
    const Matrix resid = a * e.vectors - e.vectors * e.values.asDiagonal();
    worst_residual = std::max(worst_residual, resid.norm() / a.norm());
    const Matrix gram = e.vectors.transpose() * e.vectors - Matrix::Identity(p, p);
    worst_ortho = std::max(worst_ortho, gram.norm());
    for (Eigen::Index i = 1; i < e.values.size(); ++i) {
      if (e.values(i) > e.values(i - 1)) return {false, "eigenvalues not descending"};
    }
  }
  const double t = seconds_since(start);
  const bool pass = worst_residual <= 1e-8 && worst_ortho <= 1e-8 && t < 60.0;
  return {pass, "residual " + fmt("%.3g", worst_residual) + ", orthonormality " + fmt("%.3g", worst_ortho) + ", " +
                    fmt("%.1f", t) + " s"};
}

GeometricShape random_shape(std::mt19937_64& rng, int p) {
  const RowMatrix x = oracle::gaussian_rows(rng, 3 * p, p);
  RowMatrix scaled = x;
  for (int j = 0; j < p; ++j) scaled.col(j) *= 1.0 + 0.5 * static_cast<double>(j);  // distinct spectrum
  return build_shape(aggregate_global_stats(std::vector<ClassStats>{compute_class_stats(scaled, 0)}));
}

Outcome similarity_metric(const Context&) {
  std::mt19937_64 rng(1003);
  double worst_self = 0.0;
  bool flips_exact = true;
  double lo = 5.0;
  double hi = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int p = 5 + static_cast<int>(rng() % 28);
    const GeometricShape a = random_shape(rng, p);
    const GeometricShape b = random_shape(rng, p);
    if (i < 200) worst_self = std::max(worst_self, std::abs(shape_similarity(a, a) - 5.0));
    const double s = shape_similarity(a, b);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    GeometricShape flipped = b;
    for (Eigen::Index c = 0; c < flipped.eigenvectors.cols(); ++c) {
      if (rng() % 2 == 0) flipped.eigenvectors.col(c) = -flipped.eigenvectors.col(c);
    }
    flips_exact = flips_exact && shape_similarity(a, flipped) == s && shape_similarity(flipped, a) == shape_similarity(b, a);
  }
  const bool pass = worst_self <= 1e-9 && flips_exact && lo >= 0.0 && hi <= 5.0;
  return {pass, "self error " + fmt("%.3g", worst_self) + ", sign flips " + (flips_exact ? "exact" : "NOT exact") +
                    ", range [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "]"};
}

Outcome offset_statistics(const Context&) {
  std::mt19937_64 rng(1004);
  const int p = 16;
  const auto start = Clock::now();
  GeometricShape shape;
  shape.class_id = 0;
  shape.eigenvalues.resize(p);
  for (int m = 0; m < p; ++m) shape.eigenvalues(m) = 2.0 * std::pow(0.8, m);
  const Matrix g = oracle::gaussian_rows(rng, p, p);
  shape.eigenvectors = Eigen::HouseholderQR<Matrix>(g).householderQ();
  AugmentationPlan plan;
  OffsetSampler sampler = make_offset_sampler(shape, plan, {7, 0, 0}, "acceptance/offsets");
  const int draws = 100000;
  RowMatrix offsets(draws, p);
  for (int i = 0; i < draws; ++i) offsets.row(i) = sampler.draw().transpose();
  const auto m = oracle::pooled_moments(oracle::to_rows(offsets), p);
  const Matrix target = shape.eigenvectors * shape.eigenvalues.array().square().matrix().asDiagonal() *
                        shape.eigenvectors.transpose();
  const double err = oracle::rel_frobenius(oracle::to_matrix(m.cov), target);
  const double t = seconds_since(start);
  return {err <= 0.05 && t < 10.0, "rel Frobenius " + fmt("%.4f", err) + ", " + fmt("%.2f", t) + " s"};
}

Outcome count_contracts(const Context&) {
  std::mt19937_64 rng(1005);
  const int p = 8;
  const GeometricShape shape = random_shape(rng, p);
  int checked = 0;
  for (int n : {1, 2, 3, 7, 500, 1999, 2000, 2001, 2600}) {
    const RowMatrix local = oracle::gaussian_rows(rng, n, p);
    const AugmentationPlan plan;
    const AugmentedSamples out = augment_single_domain(local, shape, plan, {1, 0, 0});
    const auto want = static_cast<Eigen::Index>(std::max(n, 2000));
    if (out.size() != want) return {false, "single-domain n=" + std::to_string(n) + " gave " + std::to_string(out.size())};
    if (out.count(Provenance::kOriginal) != static_cast<std::size_t>(n)) return {false, "originals altered"};
    ++checked;
  }
  AugmentationPlan plan;
  plan.mode = AugmentMode::kMultiDomain;
  for (int n : {0, 1, 13, 500, 740}) {
    for (int protos : {0, 1, 3, 9}) {
      if (n == 0 && protos == 0) continue;
      std::vector<Prototype> foreign;
      for (int j = 0; j < protos; ++j) foreign.push_back({0, j + 1, "other" + std::to_string(j), Vector::Random(p)});
      const RowMatrix local = oracle::gaussian_rows(rng, n, p);
      const AugmentedSamples out = augment_multi_domain(local, shape, foreign, plan, {2, 0, 0});
      const Eigen::Index step1 = n == 0 ? 0 : std::max(n, 500);
      const Eigen::Index want = step1 + 500 * protos;
      if (out.size() != want) {
        return {false, "multi-domain n=" + std::to_string(n) + " protos=" + std::to_string(protos) + " gave " +
                           std::to_string(out.size())};
      }
      if (out.count(Provenance::kStep2) != static_cast<std::size_t>(500 * protos)) return {false, "step-2 count"};
      ++checked;
    }
  }
  return {true, std::to_string(checked) + " configurations exact"};
}

Outcome gradient_check(const Context&) {
  std::mt19937_64 rng(1006);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::Index c = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng() % 10);
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 16);
    std::normal_distribution<double> normal(0.0, 0.7);
    LinearClassifierParams params = LinearClassifierParams::zeros(c, p);
    for (Eigen::Index i = 0; i < params.weights.size(); ++i) params.weights.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < c; ++i) params.bias(i) = normal(rng);
    const RowMatrix x = oracle::gaussian_rows(rng, n, p);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng() % static_cast<std::uint64_t>(c));
    const double wd = inst % 2 == 0 ? 1e-5 : 0.05;
    const LossAndGrad lg = loss_and_grad(params, x, y, wd);
    const double h = 1e-4;
    auto probe = [&](double& slot, double analytic) {
      const double saved = slot;
      slot = saved + h;
      const double up = loss_and_grad(params, x, y, wd).objective;
      slot = saved - h;
      const double down = loss_and_grad(params, x, y, wd).objective;
      slot = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric)));
    };
    for (Eigen::Index i = 0; i < params.weights.size(); ++i) probe(params.weights.data()[i], lg.grad.weights.data()[i]);
    for (Eigen::Index i = 0; i < c; ++i) probe(params.bias(i), lg.grad.bias(i));
  }
  return {worst <= 1e-4, "max relative error " + fmt("%.3g", worst)};
}

Outcome fedavg_identities(const Context&) {
  std::mt19937_64 rng(1007);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_params = [&](Eigen::Index c, Eigen::Index p) {
    LinearClassifierParams out = LinearClassifierParams::zeros(c, p);
    for (Eigen::Index i = 0; i < out.weights.size(); ++i) out.weights.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < c; ++i) out.bias(i) = normal(rng);
    return out;
  };
  bool idempotent = true;
  bool permutation = true;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index c = 2 + static_cast<Eigen::Index>(rng() % 9);
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng() % 64);
    const int k = 1 + static_cast<int>(rng() % 10);
    const LinearClassifierParams shared = random_params(c, p);
    std::vector<ClientUpdate> same;
    std::vector<ClientUpdate> mixed;
    for (int j = 0; j < k; ++j) {
      const double w = 1.0 + static_cast<double>(rng() % 4000);
      same.push_back({j, shared, w, 0.0});
      mixed.push_back({j, random_params(c, p), w, 0.0});
    }
    idempotent = idempotent && fedavg_aggregate(same) == shared;

    // Brute force: plain weighted sum in long double.
    const LinearClassifierParams got = fedavg_aggregate(mixed);
    long double total = 0.0L;
    for (const auto& u : mixed) total += u.weight;
    for (Eigen::Index i = 0; i < c; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        long double s = 0.0L;
        for (const auto& u : mixed) s += static_cast<long double>(u.weight) * u.params.weights(i, j);
        worst = std::max(worst, std::abs(static_cast<double>(s / total) - got.weights(i, j)));
      }
      long double s = 0.0L;
      for (const auto& u : mixed) s += static_cast<long double>(u.weight) * u.params.bias(i);
      worst = std::max(worst, std::abs(static_cast<double>(s / total) - got.bias(i)));
    }
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
      std::shuffle(mixed.begin(), mixed.end(), rng);
      permutation = permutation && fedavg_aggregate(mixed) == got;
    }
  }
  const bool pass = idempotent && permutation && worst <= 1e-12;
  return {pass, std::string("idempotence ") + (idempotent ? "exact" : "BROKEN") + ", permutation " +
                    (permutation ? "exact" : "BROKEN") + ", brute-force deviation " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------

std::string quote(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const Context& ctx) {
  if (ctx.ggeur_binary.empty() || !fs::exists(ctx.ggeur_binary)) return {false, "ggeur binary not found"};
  const fs::path dir = ctx.work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "synth.json") << R"({"name": "det", "dim": 16, "classes": 5, "domains": 4,
    "train_per_class": 150, "test_per_class": 40, "class_separation": 2.0, "domain_shift": 1.0, "seed": 21})";
  std::ofstream(dir / "run.json") << R"({"dataset": "data/manifest.json",
    "partition": {"mode": "lds", "beta": 0.1, "num_clients": 4},
    "augmentation": {"mode": "multi_domain", "step1_target": 60, "step2_per_prototype": 30},
    "sgd": {"batch_size": 16}, "rounds": 4, "local_rounds": 2, "seed": 5})";
  const std::string bin = quote(ctx.ggeur_binary);
  const std::string quiet = " > " + quote(dir / "log.txt") + " 2>&1";
  if (std::system((bin + " synth --spec " + quote(dir / "synth.json") + " --out " + quote(dir / "data") + quiet).c_str()) != 0) {
    return {false, "synth failed"};
  }
  std::vector<std::string> outputs;
  int index = 0;
  for (int workers : {1, 1, 4, 4}) {
    const fs::path out = dir / ("out" + std::to_string(index++));
    const std::string cmd = bin + " run --config " + quote(dir / "run.json") + " --out " + quote(out) + " --workers " +
                            std::to_string(workers) + quiet;
    if (std::system(cmd.c_str()) != 0) return {false, "run failed (workers " + std::to_string(workers) + ")"};
    outputs.push_back(file_bytes(out / "metrics.csv"));
  }
  const bool same = !outputs[0].empty() && std::all_of(outputs.begin(), outputs.end(),
                                                       [&](const std::string& s) { return s == outputs[0]; });
  return {same, same ? "metrics.csv byte-identical over 4 runs (workers 1,1,4,4)" : "metrics.csv differs"};
}

// ---------------------------------------------------------------------------

Outcome label_skew_e2e(const Context&) {
  const auto start = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : e2e::kSeeds) {
    const auto [with, without] = e2e::label_skew_pair(seed);
    const double gain = 100.0 * (with - without);
    wins += gain >= 3.0;
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.2f", 100 * with) + " vs " + fmt("%.2f", 100 * without) +
              " (" + fmt("%+.2f", gain) + "); ";
  }
  const double t = seconds_since(start);
  return {wins >= 2 && t < 600.0, detail + std::to_string(wins) + "/3 seeds >= 3 points, " + fmt("%.0f", t) + " s"};
}

Outcome multi_domain_e2e(const Context&) {
  const auto start = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : e2e::kSeeds) {
    const e2e::AblationResult r = e2e::multi_domain_ablation(seed);
    const bool ok = r.both.avg >= r.step1.avg && r.step1.avg >= r.baseline.avg && r.both.std <= r.baseline.std;
    wins += ok;
    detail += "seed " + std::to_string(seed) + ": AVG " + fmt("%.2f", 100 * r.both.avg) + "/" +
              fmt("%.2f", 100 * r.step1.avg) + "/" + fmt("%.2f", 100 * r.baseline.avg) + " STD " +
              fmt("%.2f", 100 * r.both.std) + "/" + fmt("%.2f", 100 * r.baseline.std) + (ok ? " ok" : " no") + "; ";
  }
  const double t = seconds_since(start);
  return {wins >= 2 && t < 900.0, detail + std::to_string(wins) + "/3 seeds, " + fmt("%.0f", t) + " s"};
}

Outcome similarity_structure(const Context&) {
  const EmbeddingDataset ds = synth_generate(e2e::multi_domain_spec(e2e::kSeeds[0]));
  const auto matrices = cross_domain_similarity_matrix(domain_shapes_from_dataset(ds));
  double worst = 1e300;
  for (const auto& m : matrices) {
    double diag = 0.0;
    double off = 0.0;
    const Eigen::Index c = m.values.rows();
    for (Eigen::Index i = 0; i < c; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) (i == j ? diag : off) += m.values(i, j);
    }
    worst = std::min(worst, diag / static_cast<double>(c) - off / static_cast<double>(c * (c - 1)));
  }
  return {matrices.size() == 6 && worst >= 1.0,
          std::to_string(matrices.size()) + " matrices, min diag-offdiag gap " + fmt("%.3f", worst)};
}

struct Criterion {
  const char* name;
  std::function<Outcome(const Context&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"global_covariance_exactness", global_covariance_exactness},
      {"eigendecomposition", eigendecomposition},
      {"similarity_metric", similarity_metric},
      {"offset_statistics", offset_statistics},
      {"count_contracts", count_contracts},
      {"gradient_check", gradient_check},
      {"fedavg_identities", fedavg_identities},
      {"determinism", determinism},
      {"label_skew_e2e", label_skew_e2e},
      {"multi_domain_e2e", multi_domain_e2e},
      {"similarity_structure", similarity_structure},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "ggeur_acceptance";
  std::vector<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only.push_back(argv[++i]);
    } else if (arg == "--ggeur" && i + 1 < argc) {
      ctx.ggeur_binary = argv[++i];
    } else if (arg == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else if (arg == "--list") {
      for (const auto& c : criteria()) std::cout << c.name << "\n";
      return 0;
    } else {
      std::cerr << "usage: acceptance [--only NAME]... [--ggeur PATH] [--work DIR] [--list]\n";
      return 2;
    }
  }
  for (const auto& name : only) {
    const bool known = std::any_of(criteria().begin(), criteria().end(), [&](const Criterion& c) { return name == c.name; });
    if (!known) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
