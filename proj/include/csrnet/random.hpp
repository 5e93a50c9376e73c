#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace csrnet {

// Draw helpers built directly on mt19937_64 output. The standard pins the
// engine's bit stream but not the distribution adaptors, so rolling the
// mappings by hand keeps every seeded artifact byte-stable across toolchains.

inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
    return n == 0 ? 0 : gen() % n;
}

inline double uniform_real(std::mt19937_64& gen, double lo, double hi) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53; // [0, 1)
    return lo + u * (hi - lo);
}

// Standard normal via Box-Muller (cosine branch only).
inline double normal_draw(std::mt19937_64& gen) {
    const double u1 = (static_cast<double>(gen() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
    const double u2 = static_cast<double>(gen() >> 11) * 0x1.0p-53;         // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Fisher-Yates with engine-pinned index draws.
template <typename Vec>
void shuffle_indices(Vec& v, std::mt19937_64& gen) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(gen, i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace csrnet
