#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ggeur/error.hpp"
#include "ggeur/report.hpp"
#include "json.hpp"

using namespace ggeur;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ggeur_test_report_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricsLog random_log(std::mt19937_64& rng, int rounds, int domains) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RoundRecord> recs;
  for (int r = 1; r <= rounds; ++r) {
    RoundRecord rec;
    rec.round = r;
    for (int d = 0; d < domains; ++d) rec.domains.push_back({"dom" + std::to_string(d), u(rng), 3.0 * u(rng)});
    recs.push_back(rec);
  }
  return MetricsLog::from_rounds(recs);
}

}  // namespace

TEST_CASE("last-5 average") {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const auto a = last5_average(s);
  CHECK(a.value == doctest::Approx(0.5));
  CHECK_FALSE(a.flagged);
  const std::vector<double> short_s{0.2, 0.4};
  const auto b = last5_average(short_s);
  CHECK(b.value == doctest::Approx(0.3));
  CHECK(b.flagged);
  CHECK_THROWS(last5_average(std::vector<double>{}));
}

TEST_CASE("cross-domain standard deviation") {
  const std::vector<double> two{0.9, 0.7};
  CHECK(cross_domain_std(two) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cross_domain_std(two, true) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(cross_domain_std(std::vector<double>{0.4}) == 0.0);

  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(2 + rng() % 6);
    for (auto& x : v) x = u(rng);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(cross_domain_std(v) == doctest::Approx(std::sqrt(ss / static_cast<double>(v.size()))).epsilon(1e-12));
    CHECK(cross_domain_std(v, true) ==
          doctest::Approx(std::sqrt(ss / static_cast<double>(v.size() - 1))).epsilon(1e-12));
  }
}

TEST_CASE("metrics.csv round-trips and the summary is consistent with it") {
  std::mt19937_64 rng(62);
  const MetricsLog log = random_log(rng, 9, 4);
  const fs::path dir = scratch("csv") / "nested";
  write_metrics_csv(dir / "metrics.csv", log);  // missing directories are created
  const std::string text = slurp(dir / "metrics.csv");
  CHECK(text.rfind("round,domain,accuracy,loss\n", 0) == 0);

  const MetricsLog back = read_metrics_csv(dir / "metrics.csv");
  CHECK(back.domains == log.domains);
  CHECK(back.rounds == log.rounds);
  CHECK(back.accuracy == log.accuracy);  // %.17g is lossless
  CHECK(back.loss == log.loss);

  const Summary s = summarize(back);
  std::vector<double> per_domain;
  for (std::size_t d = 0; d < 4; ++d) {
    double m = 0.0;
    for (int r = 4; r < 9; ++r) m += log.accuracy(r, static_cast<Eigen::Index>(d));
    per_domain.push_back(m / 5.0);
    CHECK(s.domain_last5[d] == doctest::Approx(m / 5.0).epsilon(1e-12));
  }
  double avg = 0.0;
  for (double v : per_domain) avg += v / 4.0;
  CHECK(std::abs(s.avg - avg) <= 1e-9);
  CHECK(std::abs(s.std - cross_domain_std(per_domain)) <= 1e-9);
  CHECK(s.final_avg == doctest::Approx(log.accuracy.row(8).mean()));
  CHECK_FALSE(s.last5_flagged);

  write_summary_json(dir / "summary.json", s, 77, R"({"rounds": 9})");
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(j["schema"] == 1);
  CHECK(j["seed"] == 77);
  CHECK(std::abs(j["avg"].get<double>() - s.avg) <= 1e-9);
  CHECK(j["config"]["rounds"] == 9);
  CHECK(j["domain_last5"].size() == 4);
}

TEST_CASE("short runs are flagged") {
  std::mt19937_64 rng(63);
  const Summary s = summarize(random_log(rng, 3, 2));
  CHECK(s.last5_flagged);
}

TEST_CASE("malformed metrics files are rejected") {
  const fs::path dir = scratch("bad");
  fs::create_directories(dir);
  std::ofstream(dir / "m.csv") << "round,domain,acc\n1,a,0.5\n";
  CHECK_THROWS_AS(read_metrics_csv(dir / "m.csv"), DataError);
  std::ofstream(dir / "n.csv") << "round,domain,accuracy,loss\n1,a,zero,1\n";
  CHECK_THROWS_AS(read_metrics_csv(dir / "n.csv"), DataError);
  CHECK_THROWS(read_metrics_csv(dir / "absent.csv"));
}

TEST_CASE("writing under a regular file fails cleanly") {
  const fs::path dir = scratch("blocked");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  std::mt19937_64 rng(64);
  CHECK_THROWS_AS(write_metrics_csv(dir / "file" / "metrics.csv", random_log(rng, 2, 1)), Error);
}

TEST_CASE("heatmap and similarity CSV formats") {
  const fs::path dir = scratch("formats");
  Eigen::MatrixXi counts(2, 3);
  counts << 1, 0, 5, 2, 3, 0;
  write_heatmap_csv(dir / "h.csv", counts);
  CHECK(slurp(dir / "h.csv") == "client,class_0,class_1,class_2\n0,1,0,5\n1,2,3,0\n");

  SimilarityMatrix m;
  m.domain_a = "art";
  m.domain_b = "photo";
  m.values.resize(2, 2);
  m.values << 5.0, 1.0 / 3.0, std::nan(""), 2.5;
  write_similarity_csv(dir / similarity_file_name(m), m);
  CHECK(similarity_file_name(m) == "similarity_art__photo.csv");
  CHECK(slurp(dir / "similarity_art__photo.csv") == "class,0,1\n0,5,0.333333\n1,nan,2.5\n");
}

TEST_CASE("emit_reports writes the expected artifacts") {
  SyntheticSpec spec;
  spec.dim = 5;
  spec.classes = 3;
  spec.domains = {"a", "b"};
  spec.train_per_class = 20;
  spec.test_per_class = 5;
  spec.seed = 2;
  const auto ds = synth_generate(spec);
  ExperimentConfig cfg;
  cfg.rounds = 2;
  cfg.local_rounds = 1;
  cfg.partition.mode = PartitionMode::kDomainPerClient;
  cfg.partition.num_clients = 2;
  cfg.augmentation.mode = AugmentMode::kMultiDomain;
  cfg.augmentation.step1_target = 25;
  cfg.augmentation.step2_per_prototype = 5;
  const auto result = run_federation(cfg, ds);
  const fs::path dir = scratch("emit");
  const Summary s = emit_reports(result, cfg, ds, dir, "{}");
  for (const char* f : {"metrics.csv", "summary.json", "partition_heatmap.csv", "similarity_a__b.csv"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(s.last5_flagged);
  const MetricsLog back = read_metrics_csv(dir / "metrics.csv");
  CHECK(back.rounds.size() == 2);
  CHECK(back.domains == std::vector<std::string>{"a", "b"});
}
