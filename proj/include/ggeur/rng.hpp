#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ggeur {

// All randomness in the simulator comes from named substreams of a single
// root seed. A substream is identified by a purpose string plus up to a few
// integer coordinates (client, class, round, ...); identical identifiers
// always reproduce the same sequence, independent of call order or thread.
using Rng = std::mt19937_64;

std::uint64_t mix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                          std::initializer_list<std::int64_t> coords = {});

inline Rng make_stream(std::uint64_t root, std::string_view purpose,
                       std::initializer_list<std::int64_t> coords = {}) {
  return Rng(derive_seed(root, purpose, coords));
}

// log of a Gamma(shape, 1) variate. Works for tiny shapes (e.g. 0.01) where
// the plain variate underflows to zero in double precision.
double log_gamma_variate(double shape, Rng& rng);

}  // namespace ggeur
