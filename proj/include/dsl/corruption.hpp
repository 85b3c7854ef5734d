#pragma once

#include "dsl/corpus.hpp"
#include "dsl/random.hpp"
#include "dsl/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsl {

enum class RoarMode { smoothed, atomic };

RoarMode parse_roar_mode(const std::string& name);
const char* to_string(RoarMode mode) noexcept;

/// Token-wise mixed SNR corruption: each position is an endpoint (ROAR)
/// token with probability 1/k, otherwise it draws a lognormal SNR.
struct CorruptionConfig {
    double k = 10.0;
    double mu = 1.65;
    double sigma = 0.9;
    double gamma_min = 0.5;
    double gamma_max = 50.0;
    double c = 0.9;  ///< high endpoint range is [c gamma_max, gamma_max]
    RoarMode mode = RoarMode::smoothed;
    bool clip_lognormal = false;

    /// Throws invalid_config naming the offending field.
    void validate() const;
};

struct GammaSample {
    Vector gamma;
    std::vector<bool> roar;  ///< position drawn as an endpoint token
    std::vector<bool> high;  ///< endpoint token took the high branch
};

/// Positions included independently with probability 1/k.
std::vector<int> sample_roar_set(int length, double k, std::uint64_t seed);
std::vector<int> sample_roar_set(int length, double k, Rng& rng);

GammaSample sample_gammas(int length, const CorruptionConfig& config, Rng& rng);
Vector sample_gamma_vector(int length, const CorruptionConfig& config, std::uint64_t seed);

/// z_i = gamma_i enc(x_i) + sqrt(gamma_i) eps_i; gamma_i = 0 gives z_i = 0 exactly.
/// The mask id is accepted and embeds to zero, so only noise remains there.
Matrix corrupt(const Sequence& x, const Vector& gamma, const EmbeddingTable& emb, std::uint64_t seed);
Matrix corrupt(const Sequence& x, const Vector& gamma, const EmbeddingTable& emb, Rng& rng);

} // namespace dsl
