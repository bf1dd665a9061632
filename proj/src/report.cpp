#include "ggeur/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ggeur/error.hpp"
#include "json.hpp"

namespace ggeur {

namespace fs = std::filesystem;
using json = nlohmann::json;

Last5 last5_average(std::span<const double> series) {
  if (series.empty()) throw DataError("last5_average: empty series");
  const std::size_t take = std::min<std::size_t>(5, series.size());
  double sum = 0.0;
  for (std::size_t i = series.size() - take; i < series.size(); ++i) sum += series[i];
  return {sum / static_cast<double>(take), series.size() < 5};
}

double cross_domain_std(std::span<const double> accuracies, bool sample) {
  if (accuracies.empty()) throw DataError("cross_domain_std: no domains");
  const auto d = static_cast<double>(accuracies.size());
  if (sample && accuracies.size() < 2) return 0.0;
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= d;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / (sample ? d - 1.0 : d));
}

MetricsLog MetricsLog::from_rounds(std::span<const RoundRecord> records) {
  MetricsLog log;
  if (records.empty()) return log;
  for (const auto& m : records.front().domains) log.domains.push_back(m.domain);
  const auto r = static_cast<Eigen::Index>(records.size());
  const auto d = static_cast<Eigen::Index>(log.domains.size());
  log.accuracy.resize(r, d);
  log.loss.resize(r, d);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& rec = records[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(rec.domains.size()) != d) throw DataError("round records disagree on domains");
    log.rounds.push_back(rec.round);
    for (Eigen::Index j = 0; j < d; ++j) {
      log.accuracy(i, j) = rec.domains[static_cast<std::size_t>(j)].accuracy;
      log.loss(i, j) = rec.domains[static_cast<std::size_t>(j)].loss;
    }
  }
  return log;
}

std::vector<double> MetricsLog::domain_series(std::size_t d) const {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < accuracy.rows(); ++i) out.push_back(accuracy(i, static_cast<Eigen::Index>(d)));
  return out;
}

std::vector<double> MetricsLog::avg_series() const {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < accuracy.rows(); ++i) out.push_back(accuracy.row(i).mean());
  return out;
}

std::vector<double> MetricsLog::std_series(bool sample) const {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < accuracy.rows(); ++i) {
    std::vector<double> row(accuracy.row(i).begin(), accuracy.row(i).end());
    out.push_back(cross_domain_std(row, sample));
  }
  return out;
}

Summary summarize(const MetricsLog& log, bool sample_std) {
  if (log.rounds.empty() || log.domains.empty()) throw DataError("summarize: empty metrics log");
  Summary s;
  s.domains = log.domains;
  const auto avg = log.avg_series();
  const Last5 l5 = last5_average(avg);
  s.avg = l5.value;
  s.last5_flagged = l5.flagged;
  s.final_avg = avg.back();
  for (std::size_t d = 0; d < log.domains.size(); ++d) s.domain_last5.push_back(last5_average(log.domain_series(d)).value);
  s.std = cross_domain_std(s.domain_last5, sample_std);
  return s;
}

namespace {

std::string fmt_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_6sig(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_metrics_csv(const fs::path& path, const MetricsLog& log) {
  std::string text = "round,domain,accuracy,loss\n";
  for (std::size_t i = 0; i < log.rounds.size(); ++i) {
    for (std::size_t d = 0; d < log.domains.size(); ++d) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(d);
      text += std::to_string(log.rounds[i]) + "," + log.domains[d] + "," + fmt_exact(log.accuracy(r, c)) + "," +
              fmt_exact(log.loss(r, c)) + "\n";
    }
  }
  write_text(path, text);
}

namespace {

int parse_int_cell(const std::string& cell, const fs::path& path) {
  int v = 0;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || end != cell.data() + cell.size()) throw DataError(path.string() + ": bad integer '" + cell + "'");
  return v;
}

double parse_double_cell(const std::string& cell, const fs::path& path) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) throw DataError(path.string() + ": bad number '" + cell + "'");
  return v;
}

}  // namespace

MetricsLog read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "round,domain,accuracy,loss") throw DataError(path.string() + ": bad header");
  struct Row {
    int round;
    std::string domain;
    double acc, loss;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw DataError(path.string() + ": malformed row: " + line);
    rows.push_back({parse_int_cell(cells[0], path), cells[1], parse_double_cell(cells[2], path),
                    parse_double_cell(cells[3], path)});
  }
  MetricsLog log;
  for (const auto& r : rows) {
    if (log.rounds.empty() || log.rounds.back() != r.round) log.rounds.push_back(r.round);
    if (log.rounds.size() == 1) log.domains.push_back(r.domain);
  }
  const auto nr = static_cast<Eigen::Index>(log.rounds.size());
  const auto nd = static_cast<Eigen::Index>(log.domains.size());
  if (static_cast<Eigen::Index>(rows.size()) != nr * nd) throw DataError(path.string() + ": ragged metrics table");
  log.accuracy.resize(nr, nd);
  log.loss.resize(nr, nd);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i) / nd;
    const auto d = static_cast<Eigen::Index>(i) % nd;
    if (rows[i].domain != log.domains[static_cast<std::size_t>(d)]) throw DataError(path.string() + ": domain order differs between rounds");
    log.accuracy(r, d) = rows[i].acc;
    log.loss(r, d) = rows[i].loss;
  }
  return log;
}

void write_summary_json(const fs::path& path, const Summary& summary, std::uint64_t seed,
                        const std::string& config_echo) {
  json j;
  j["schema"] = 1;
  j["seed"] = seed;
  j["avg"] = summary.avg;
  j["std"] = summary.std;
  j["final_avg"] = summary.final_avg;
  j["last5_flagged"] = summary.last5_flagged;
  json per_domain = json::object();
  for (std::size_t d = 0; d < summary.domains.size(); ++d) per_domain[summary.domains[d]] = summary.domain_last5[d];
  j["domain_last5"] = per_domain;
  j["config"] = config_echo.empty() ? json::object() : json::parse(config_echo);
  write_text(path, j.dump(2) + "\n");
}

void write_heatmap_csv(const fs::path& path, const Eigen::MatrixXi& counts) {
  std::string text = "client";
  for (Eigen::Index c = 0; c < counts.cols(); ++c) text += ",class_" + std::to_string(c);
  text += "\n";
  for (Eigen::Index k = 0; k < counts.rows(); ++k) {
    text += std::to_string(k);
    for (Eigen::Index c = 0; c < counts.cols(); ++c) text += "," + std::to_string(counts(k, c));
    text += "\n";
  }
  write_text(path, text);
}

void write_similarity_csv(const fs::path& path, const SimilarityMatrix& matrix) {
  // rows: classes of domain_a, columns: classes of domain_b
  std::string text = "class";
  for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) text += "," + std::to_string(j);
  text += "\n";
  for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
    text += std::to_string(i);
    for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) text += "," + fmt_6sig(matrix.values(i, j));
    text += "\n";
  }
  write_text(path, text);
}

std::string similarity_file_name(const SimilarityMatrix& matrix) {
  return "similarity_" + matrix.domain_a + "__" + matrix.domain_b + ".csv";
}

std::vector<DomainShapes> domain_shapes_from_uploads(const GeometryBundle& geometry,
                                                     std::span<const ClientShard> clients,
                                                     std::span<const std::string> domain_order) {
  std::vector<DomainShapes> out;
  const std::size_t classes = geometry.shapes.size();
  for (const auto& domain : domain_order) {
    DomainShapes ds{domain, std::vector<std::optional<GeometricShape>>(classes)};
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<ClassStats> locals;
      for (std::size_t k = 0; k < clients.size(); ++k) {
        if (clients[k].domain == domain && !geometry.uploads[k][c].empty()) locals.push_back(geometry.uploads[k][c]);
      }
      if (!locals.empty()) ds.by_class[c] = build_shape(aggregate_global_stats(locals));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainShapes> domain_shapes_from_dataset(const EmbeddingDataset& dataset) {
  std::vector<DomainShapes> out;
  for (const auto& domain : dataset.domains) {
    DomainShapes ds{domain.domain, std::vector<std::optional<GeometricShape>>(static_cast<std::size_t>(dataset.classes))};
    std::vector<std::vector<std::uint32_t>> idx(static_cast<std::size_t>(dataset.classes));
    for (std::uint32_t i = 0; i < domain.train.size(); ++i) idx[domain.train.labels[i]].push_back(i);
    for (int c = 0; c < dataset.classes; ++c) {
      const auto& rows = idx[static_cast<std::size_t>(c)];
      if (rows.empty()) continue;
      const ClassStats s = compute_class_stats(domain.train.gather(rows), c);
      const std::vector<ClassStats> one{s};
      ds.by_class[static_cast<std::size_t>(c)] = build_shape(aggregate_global_stats(one));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

Summary emit_reports(const FederationResult& result, const ExperimentConfig& config, const EmbeddingDataset& dataset,
                     const fs::path& out_dir, const std::string& config_echo) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw Error("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
  }
  const MetricsLog log = MetricsLog::from_rounds(result.rounds);
  write_metrics_csv(out_dir / "metrics.csv", log);
  const Summary summary = summarize(log, config.sample_std);
  write_summary_json(out_dir / "summary.json", summary, config.seed, config_echo);
  write_heatmap_csv(out_dir / "partition_heatmap.csv", client_class_counts(result.partition, dataset));
  if (config.ggeur_enabled && !result.geometry.uploads.empty()) {
    std::vector<std::string> order;
    for (const auto& d : dataset.domains) {
      for (const auto& c : result.partition.clients) {
        if (c.domain == d.domain) {
          order.push_back(d.domain);
          break;
        }
      }
    }
    const auto shapes = domain_shapes_from_uploads(result.geometry, result.partition.clients, order);
    for (const auto& m : cross_domain_similarity_matrix(shapes)) write_similarity_csv(out_dir / similarity_file_name(m), m);
  }
  return summary;
}

}  // namespace ggeur
