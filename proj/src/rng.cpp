#include "ggeur/rng.hpp"

#include <cmath>

#include "ggeur/error.hpp"

namespace ggeur {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                          std::initializer_list<std::int64_t> coords) {
  // FNV-1a over the purpose tag, then fold in the coordinates.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = mix64(root ^ mix64(h));
  for (std::int64_t c : coords) {
    s = mix64(s ^ mix64(static_cast<std::uint64_t>(c) + 0x632be59bd9b4e019ULL));
  }
  return s;
}

double log_gamma_variate(double shape, Rng& rng) {
  if (!(shape > 0.0)) throw UsageError("gamma shape must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space.
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    return log_gamma_variate(shape + 1.0, rng) + std::log(u) / shape;
  }
  // Marsaglia-Tsang
  std::normal_distribution<double> norm(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = norm(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = unif(rng);
    if (u <= 0.0) continue;
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d * v);
  }
}

}  // namespace ggeur
