#pragma once

#include "dsl/types.hpp"

#include <cstdint>
#include <random>

namespace dsl {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Sub-seed for stream `stream`, item `index` under `master`.
///
/// Every independent unit of work (a chain, a grid point, a draw batch) gets
/// its own engine seeded from (master, stream, index), so results do not
/// depend on how work is split across threads.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(master) ^ stream) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

template <typename Scalar = double>
MatrixX<Scalar> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    MatrixX<Scalar> out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
    return out;
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace dsl
