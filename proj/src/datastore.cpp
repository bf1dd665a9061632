#include "ggeur/datastore.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "ggeur/error.hpp"
#include "ggeur/rng.hpp"
#include "json.hpp"

namespace ggeur {

namespace fs = std::filesystem;
using json = nlohmann::json;

RowMatrix LabeledSplit::gather(std::span<const std::uint32_t> indices) const {
  RowMatrix out(static_cast<Eigen::Index>(indices.size()), rows.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw DataError("gather: index " + std::to_string(indices[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = rows.row(indices[i]).cast<double>();
  }
  return out;
}

RowMatrix LabeledSplit::to_double() const { return rows.cast<double>(); }

bool operator==(const LabeledSplit& a, const LabeledSplit& b) {
  if (a.rows.rows() != b.rows.rows() || a.rows.cols() != b.rows.cols()) return false;
  const auto bytes = static_cast<std::size_t>(a.rows.size()) * sizeof(float);
  return std::memcmp(a.rows.data(), b.rows.data(), bytes) == 0 && a.labels == b.labels &&
         a.provenance == b.provenance;
}

void EmbeddingDataset::validate() const {
  if (dim < 1) throw DataError("dataset " + name + ": dim must be >= 1");
  if (classes < 1) throw DataError("dataset " + name + ": classes must be >= 1");
  for (const auto& d : domains) {
    for (const LabeledSplit* s : {&d.train, &d.test}) {
      if (s->rows.rows() != static_cast<Eigen::Index>(s->labels.size())) {
        throw DataError("domain " + d.domain + ": label count does not match row count");
      }
      if (s->rows.rows() > 0 && s->rows.cols() != dim) {
        throw DataError("domain " + d.domain + ": width " + std::to_string(s->rows.cols()) + " != dim " +
                        std::to_string(dim));
      }
      if (!s->provenance.empty() && s->provenance.size() != s->labels.size()) {
        throw DataError("domain " + d.domain + ": provenance count does not match row count");
      }
      for (std::uint32_t l : s->labels) {
        if (l >= static_cast<std::uint32_t>(classes)) {
          throw DataError("domain " + d.domain + ": label " + std::to_string(l) + " outside [0, " +
                          std::to_string(classes) + ")");
        }
      }
    }
  }
}

const DomainSplit& EmbeddingDataset::domain(std::string_view id) const {
  for (const auto& d : domains) {
    if (d.domain == id) return d;
  }
  throw DataError("dataset " + name + ": unknown domain " + std::string(id));
}

// ---- byte-level helpers ---------------------------------------------------

namespace {

class ByteWriter {
 public:
  void bytes(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatErrorKind::kTruncated, pos_,
                        std::string("need ") + std::to_string(n) + " bytes for " + what + ", have " +
                            std::to_string(remaining()));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
  std::int64_t i64(const char* what) { return static_cast<std::int64_t>(u64(what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  void magic(const char* expected) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) {
      throw FormatError(FormatErrorKind::kBadMagic, pos_, std::string("expected magic ") + expected);
    }
    pos_ += 4;
  }
  void finish() const {
    if (remaining() != 0) {
      throw FormatError(FormatErrorKind::kTrailingBytes, pos_, std::to_string(remaining()) + " unexpected bytes");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeFloat32 = 1;
constexpr std::uint8_t kDtypeFloat64 = 2;

void check_version(ByteReader& r) {
  const std::uint64_t at = r.offset();
  const std::uint32_t v = r.u32("version");
  if (v != kVersion) throw FormatError(FormatErrorKind::kBadVersion, at, "unsupported version " + std::to_string(v));
}

// Rejects payload sizes that cannot be represented or cannot possibly fit.
void check_payload(const ByteReader& r, std::uint64_t header_end, std::uint64_t a, std::uint64_t b,
                   std::uint64_t elem_bytes) {
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  if (a != 0 && b > kMax / a) {
    throw FormatError(FormatErrorKind::kDimensionOverflow, header_end, "element count overflows");
  }
  const std::uint64_t elems = a * b;
  if (elems > kMax / elem_bytes ||
      elems > static_cast<std::uint64_t>(std::numeric_limits<Eigen::Index>::max())) {
    throw FormatError(FormatErrorKind::kDimensionOverflow, header_end, "payload size overflows");
  }
  r.need(elems * elem_bytes, "payload");
}

}  // namespace

std::vector<std::uint8_t> encode_emb1(const LabeledSplit& split) {
  const auto n = static_cast<std::uint64_t>(split.labels.size());
  if (split.rows.rows() != static_cast<Eigen::Index>(n)) throw DataError("encode_emb1: label/row count mismatch");
  if (!split.provenance.empty() && split.provenance.size() != n) {
    throw DataError("encode_emb1: provenance/row count mismatch");
  }
  const auto p = static_cast<std::uint64_t>(split.rows.cols());
  if (n > std::numeric_limits<std::uint32_t>::max() || p > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("encode_emb1: dimensions exceed u32");
  }
  ByteWriter w;
  w.bytes("EMB1", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(p));
  w.u8(kDtypeFloat32);
  w.u8(split.provenance.empty() ? 0 : 1);
  w.u8(0);
  w.u8(0);
  const float* data = split.rows.data();
  for (std::uint64_t i = 0; i < n * p; ++i) w.f32(data[i]);
  for (std::uint32_t l : split.labels) w.u32(l);
  for (std::uint8_t t : split.provenance) w.u8(t);
  return w.take();
}

LabeledSplit decode_emb1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.magic("EMB1");
  check_version(r);
  const std::uint32_t n = r.u32("n");
  const std::uint64_t p_at = r.offset();
  const std::uint32_t p = r.u32("p");
  const std::uint64_t dtype_at = r.offset();
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype != kDtypeFloat32) {
    throw FormatError(FormatErrorKind::kBadDtype, dtype_at, "unsupported dtype " + std::to_string(dtype));
  }
  const std::uint8_t flags = r.u8("flags");
  if (flags > 1) throw FormatError(FormatErrorKind::kBadDtype, dtype_at + 1, "unknown flag byte");
  r.u8("pad");
  r.u8("pad");
  if (p == 0 && n > 0) throw FormatError(FormatErrorKind::kDimensionOverflow, p_at, "p = 0 with n > 0");
  check_payload(r, r.offset(), n, p, 4);

  LabeledSplit out;
  out.rows.resize(n, p);
  float* data = out.rows.data();
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(n) * p; ++i) data[i] = r.f32("embedding");
  r.need(static_cast<std::uint64_t>(n) * 4, "labels");
  out.labels.resize(n);
  for (auto& l : out.labels) l = r.u32("label");
  if (flags == 1) {
    r.need(n, "provenance");
    out.provenance.resize(n);
    for (auto& t : out.provenance) {
      const std::uint64_t at = r.offset();
      t = r.u8("provenance");
      if (t > 2) throw FormatError(FormatErrorKind::kBadDtype, at, "provenance tag " + std::to_string(t));
    }
  }
  r.finish();
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, 0, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_emb1(const fs::path& path, const LabeledSplit& split) { write_file_bytes(path, encode_emb1(split)); }

LabeledSplit read_emb1(const fs::path& path) {
  try {
    return decode_emb1(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), e.offset(), path.string() + ": " + e.what());
  }
}

fs::path save_dataset(const EmbeddingDataset& dataset, const fs::path& dir) {
  dataset.validate();
  json manifest;
  manifest["name"] = dataset.name;
  manifest["dim"] = dataset.dim;
  manifest["classes"] = dataset.classes;
  manifest["domains"] = json::array();
  for (const auto& d : dataset.domains) {
    const std::string train = d.domain + "_train.emb";
    const std::string test = d.domain + "_test.emb";
    write_emb1(dir / train, d.train);
    write_emb1(dir / test, d.test);
    manifest["domains"].push_back({{"domain", d.domain}, {"train_path", train}, {"test_path", test}});
  }
  const fs::path path = dir / "manifest.json";
  const std::string text = manifest.dump(2) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return path;
}

EmbeddingDataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
    EmbeddingDataset ds;
    ds.name = manifest.at("name").get<std::string>();
    ds.dim = manifest.at("dim").get<int>();
    ds.classes = manifest.at("classes").get<int>();
    const fs::path base = manifest_path.parent_path();
    for (const auto& d : manifest.at("domains")) {
      DomainSplit split;
      split.domain = d.at("domain").get<std::string>();
      split.train = read_emb1(base / d.at("train_path").get<std::string>());
      split.test = read_emb1(base / d.at("test_path").get<std::string>());
      if (split.train.rows.rows() == 0) split.train.rows.resize(0, ds.dim);
      if (split.test.rows.rows() == 0) split.test.rows.resize(0, ds.dim);
      ds.domains.push_back(std::move(split));
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

// ---- stats / shapes ---------------------------------------------------------

namespace {

void write_vec(ByteWriter& w, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}
void write_mat(ByteWriter& w, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}
Vector read_vec(ByteReader& r, Eigen::Index p) {
  Vector v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = r.f64("vector");
  return v;
}
Matrix read_mat(ByteReader& r, Eigen::Index p) {
  Matrix m(p, p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64("matrix");
  return m;
}

template <typename T>
std::uint32_t common_dim(std::span<const T> items) {
  if (items.empty()) return 0;
  const auto p = items.front().dim();
  for (const auto& s : items) {
    if (s.dim() != p) throw DataError("container entries have mixed dimensions");
  }
  return static_cast<std::uint32_t>(p);
}

std::uint64_t record_bytes(const ByteReader& r, std::uint64_t fixed, std::uint32_t p) {
  const std::uint64_t floats = (static_cast<std::uint64_t>(p) + 1) * p;
  if (floats > (std::numeric_limits<std::uint64_t>::max() - fixed) / 8) {
    throw FormatError(FormatErrorKind::kDimensionOverflow, r.offset(), "record size overflows");
  }
  return fixed + floats * 8;
}

}  // namespace

std::vector<std::uint8_t> encode_stats(std::span<const ClassStats> stats) {
  const std::uint32_t p = common_dim(stats);
  ByteWriter w;
  w.bytes("STA1", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(stats.size()));
  w.u32(p);
  w.u8(kDtypeFloat64);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  for (const auto& s : stats) {
    w.i32(s.class_id);
    w.i64(s.count);
    write_vec(w, s.mean);
    write_mat(w, s.covariance);
  }
  return w.take();
}

std::vector<ClassStats> decode_stats(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.magic("STA1");
  check_version(r);
  const std::uint32_t count = r.u32("count");
  const std::uint32_t p = r.u32("p");
  const std::uint64_t dtype_at = r.offset();
  if (r.u8("dtype") != kDtypeFloat64) throw FormatError(FormatErrorKind::kBadDtype, dtype_at, "expected float64");
  for (int i = 0; i < 3; ++i) r.u8("pad");
  check_payload(r, r.offset(), count, record_bytes(r, 12, p), 1);
  std::vector<ClassStats> out(count);
  for (auto& s : out) {
    s.class_id = r.i32("class_id");
    s.count = r.i64("count");
    s.mean = read_vec(r, p);
    s.covariance = read_mat(r, p);
  }
  r.finish();
  return out;
}

std::vector<std::uint8_t> encode_shapes(std::span<const GeometricShape> shapes) {
  const std::uint32_t p = common_dim(shapes);
  ByteWriter w;
  w.bytes("SHP1", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(shapes.size()));
  w.u32(p);
  w.u8(kDtypeFloat64);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  for (const auto& s : shapes) {
    w.i32(s.class_id);
    write_vec(w, s.eigenvalues);
    write_mat(w, s.eigenvectors);
  }
  return w.take();
}

std::vector<GeometricShape> decode_shapes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.magic("SHP1");
  check_version(r);
  const std::uint32_t count = r.u32("count");
  const std::uint32_t p = r.u32("p");
  const std::uint64_t dtype_at = r.offset();
  if (r.u8("dtype") != kDtypeFloat64) throw FormatError(FormatErrorKind::kBadDtype, dtype_at, "expected float64");
  for (int i = 0; i < 3; ++i) r.u8("pad");
  check_payload(r, r.offset(), count, record_bytes(r, 4, p), 1);
  std::vector<GeometricShape> out(count);
  for (auto& s : out) {
    s.class_id = r.i32("class_id");
    s.eigenvalues = read_vec(r, p);
    s.eigenvectors = read_mat(r, p);
  }
  r.finish();
  return out;
}

// ---- synthetic generator ---------------------------------------------------

void SyntheticSpec::validate() const {
  if (dim < 1) throw UsageError("synthetic spec: dim must be >= 1");
  if (classes < 1) throw UsageError("synthetic spec: classes must be >= 1");
  if (domains.empty()) throw UsageError("synthetic spec: at least one domain required");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].empty()) throw UsageError("synthetic spec: empty domain name");
    for (std::size_t j = 0; j < i; ++j) {
      if (domains[i] == domains[j]) throw UsageError("synthetic spec: duplicate domain " + domains[i]);
    }
  }
  if (!(spectrum_scale > 0.0) || !(spectrum_decay > 0.0) || !(spectrum_decay <= 1.0)) {
    throw UsageError("synthetic spec: spectrum must be positive with decay in (0, 1]");
  }
  if (!std::isfinite(class_separation) || !std::isfinite(domain_shift)) {
    throw UsageError("synthetic spec: non-finite mean scale");
  }
  if (!(spectrum_floor >= 0.0) || !std::isfinite(spectrum_floor)) throw UsageError("synthetic spec: spectrum_floor must be >= 0");
  if (spectrum_plateau < 0 || spectrum_plateau > dim) throw UsageError("synthetic spec: spectrum_plateau must be in [0, dim]");
  if (train_per_class < 0 || test_per_class < 0) throw UsageError("synthetic spec: negative sample count");
}

Vector SyntheticSpec::spectrum() const {
  Vector s(dim);
  const int start = std::max(spectrum_plateau - 1, 0);
  for (int m = 0; m < dim; ++m) {
    s(m) = spectrum_scale * std::pow(spectrum_decay, std::max(m - start, 0)) + spectrum_floor;
  }
  return s;
}

namespace {

Vector gaussian_vector(Rng& rng, Eigen::Index p) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = normal(rng);
  return v;
}

Matrix random_orthonormal(Rng& rng, Eigen::Index p) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < p; ++i) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  canonicalize_signs(q);
  return q;
}

}  // namespace

SyntheticCell synthetic_cell(const SyntheticSpec& spec, int domain, int class_id) {
  const double root_p = std::sqrt(static_cast<double>(spec.dim));
  Rng basis_rng = spec.shared_basis ? make_stream(spec.seed, "synth/basis", {class_id})
                                    : make_stream(spec.seed, "synth/basis", {class_id, domain});
  Rng class_rng = make_stream(spec.seed, "synth/class-mean", {class_id});
  Rng domain_rng = make_stream(spec.seed, "synth/domain-shift", {domain});
  SyntheticCell cell;
  cell.basis = random_orthonormal(basis_rng, spec.dim);
  cell.mean = spec.class_separation * gaussian_vector(class_rng, spec.dim) / root_p +
              spec.domain_shift * gaussian_vector(domain_rng, spec.dim) / root_p;
  return cell;
}

RowMatrix synth_samples(const SyntheticSpec& spec, int domain, int class_id, int count, std::string_view purpose) {
  const SyntheticCell cell = synthetic_cell(spec, domain, class_id);
  const Matrix scaled = cell.basis * spec.spectrum().cwiseSqrt().asDiagonal();
  Rng rng = make_stream(spec.seed, std::string("synth/") + std::string(purpose), {domain, class_id});
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix out(count, spec.dim);
  Vector eta(spec.dim);
  for (int r = 0; r < count; ++r) {
    for (int m = 0; m < spec.dim; ++m) eta(m) = normal(rng);
    out.row(r) = (cell.mean + scaled * eta).transpose();
  }
  return out;
}

EmbeddingDataset synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  EmbeddingDataset ds;
  ds.name = spec.name;
  ds.dim = spec.dim;
  ds.classes = spec.classes;
  for (std::size_t d = 0; d < spec.domains.size(); ++d) {
    DomainSplit split;
    split.domain = spec.domains[d];
    for (auto [target, count, purpose] : {std::tuple{&split.train, spec.train_per_class, "train"},
                                          std::tuple{&split.test, spec.test_per_class, "test"}}) {
      const Eigen::Index total = static_cast<Eigen::Index>(count) * spec.classes;
      target->rows.resize(total, spec.dim);
      target->labels.resize(static_cast<std::size_t>(total));
      Eigen::Index row = 0;
      for (int c = 0; c < spec.classes; ++c) {
        const RowMatrix block = synth_samples(spec, static_cast<int>(d), c, count, purpose);
        target->rows.middleRows(row, count) = block.cast<float>();
        std::fill_n(target->labels.begin() + row, count, static_cast<std::uint32_t>(c));
        row += count;
      }
    }
    ds.domains.push_back(std::move(split));
  }
  ds.validate();
  return ds;
}

}  // namespace ggeur
