#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "babel/diffusion.hpp"
#include "babel/rng.hpp"
#include "babel/text.hpp"

namespace babel {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xCBF29CE484222325ULL) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Signed feature hashing of character n-grams.
///
/// Each n-gram g (n in [min_n, max_n], taken over code points, no padding)
/// contributes sign(g) to bucket(g), where with h = fnv1a64(utf8(g)) seeded by
/// basis mix64(seed): bucket = h mod dim and sign = -1 iff the top bit of
/// mix64(h) is set. The result is not normalised.
inline Vector hashed_ngrams(std::u32string_view cps, int min_n, int max_n, Eigen::Index dim, std::uint64_t seed) {
  Vector v = Vector::Zero(dim);
  const std::uint64_t basis = mix64(seed);
  std::string gram;
  for (int n = min_n; n <= max_n; ++n) {
    if (cps.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      gram.clear();
      for (int k = 0; k < n; ++k) text::append_utf8(gram, cps[i + k]);
      const std::uint64_t h = fnv1a64(gram, basis);
      const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
      const double sign = (mix64(h) >> 63) ? -1.0 : 1.0;
      v[bucket] += sign;
    }
  }
  return v;
}

inline Vector l2_normalized(const Vector& v) {
  const double n = v.norm();
  if (n == 0.0) return v;
  return v / n;
}

inline double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace babel
