#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ggeur/geometry.hpp"
#include "ggeur/linalg.hpp"

namespace ggeur {

/// Rows of float32 embeddings with one label per row and optional one-byte
/// provenance tags (0 original, 1 step1, 2 step2).
struct LabeledSplit {
  FloatRows rows;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint8_t> provenance;  // empty, or one per row

  std::size_t size() const noexcept { return labels.size(); }
  Eigen::Index dim() const noexcept { return rows.cols(); }

  /// Double-precision copy of the rows selected by `indices`.
  RowMatrix gather(std::span<const std::uint32_t> indices) const;
  RowMatrix to_double() const;

  friend bool operator==(const LabeledSplit& a, const LabeledSplit& b);
};

struct DomainSplit {
  std::string domain;
  LabeledSplit train;
  LabeledSplit test;
};

struct EmbeddingDataset {
  std::string name;
  int dim = 0;
  int classes = 0;
  std::vector<DomainSplit> domains;

  /// Throws DataError on width or label-range violations.
  void validate() const;
  const DomainSplit& domain(std::string_view id) const;
};

// ---- EMB1 container -------------------------------------------------------
//
//   0  "EMB1"
//   4  u32 version = 1
//   8  u32 n
//  12  u32 p
//  16  u8  dtype (1 = float32)
//  17  u8  flags (1 = provenance tags follow the labels)
//  18  u8[2] zero
//  20  n*p float32, row-major
//      n u32 labels
//      n u8 provenance (only when flags == 1)
//
// Every multi-byte field is little-endian.

std::vector<std::uint8_t> encode_emb1(const LabeledSplit& split);
LabeledSplit decode_emb1(std::span<const std::uint8_t> bytes);

void write_emb1(const std::filesystem::path& path, const LabeledSplit& split);
LabeledSplit read_emb1(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Writes `<dir>/manifest.json` and one train/test container per domain.
/// Returns the manifest path.
std::filesystem::path save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& dir);
EmbeddingDataset load_dataset(const std::filesystem::path& manifest);

// ---- statistics and shape containers (float64 payloads) -------------------

std::vector<std::uint8_t> encode_stats(std::span<const ClassStats> stats);
std::vector<ClassStats> decode_stats(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_shapes(std::span<const GeometricShape> shapes);
std::vector<GeometricShape> decode_shapes(std::span<const std::uint8_t> bytes);

// ---- synthetic generator ---------------------------------------------------

struct SyntheticSpec {
  std::string name = "synthetic";
  int dim = 64;
  int classes = 10;
  std::vector<std::string> domains{"d0"};
  double spectrum_scale = 1.0;  // a in s_m = a * decay^m
  double spectrum_decay = 0.9;
  int spectrum_plateau = 0;     // the first r variances stay at a, decay starts after
  double spectrum_floor = 0.0;  // added to every variance
  bool shared_basis = true;     // same per-class eigenbasis in every domain
  double class_separation = 1.0;  // norm scale of class means
  double domain_shift = 0.0;      // norm scale of per-domain mean offsets
  int train_per_class = 2000;
  int test_per_class = 500;
  std::uint64_t seed = 0;

  void validate() const;
  Vector spectrum() const;
};

/// Per-(domain, class) generating parameters; exposed so tests can compare
/// empirical moments against the analytic ones.
struct SyntheticCell {
  Vector mean;
  Matrix basis;  // p x p orthonormal, canonical signs
};

SyntheticCell synthetic_cell(const SyntheticSpec& spec, int domain, int class_id);

EmbeddingDataset synth_generate(const SyntheticSpec& spec);

/// Draws `count` samples of one cell from its own stream.
RowMatrix synth_samples(const SyntheticSpec& spec, int domain, int class_id, int count, std::string_view purpose);

}  // namespace ggeur
