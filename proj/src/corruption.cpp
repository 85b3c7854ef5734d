#include "dsl/corruption.hpp"

#include "dsl/error.hpp"

#include <algorithm>
#include <cmath>

namespace dsl {

namespace {
constexpr std::uint64_t kRoarStream = 0x20a2;
constexpr std::uint64_t kGammaStream = 0x9a3;
constexpr std::uint64_t kNoiseStream = 0xe95;
} // namespace

RoarMode parse_roar_mode(const std::string& name) {
    if (name == "smoothed") return RoarMode::smoothed;
    if (name == "atomic") return RoarMode::atomic;
    throw Error(Errc::invalid_config, "mode: expected 'smoothed' or 'atomic', got '" + name + "'");
}

const char* to_string(RoarMode mode) noexcept { return mode == RoarMode::atomic ? "atomic" : "smoothed"; }

void CorruptionConfig::validate() const {
    if (!(k >= 1.0)) throw Error(Errc::invalid_config, "k: must be >= 1");
    if (!(sigma > 0.0)) throw Error(Errc::invalid_config, "sigma: must be > 0");
    if (!std::isfinite(mu)) throw Error(Errc::invalid_config, "mu: must be finite");
    if (!(gamma_min >= 0.0)) throw Error(Errc::invalid_config, "gamma_min: must be >= 0");
    if (!(gamma_min < gamma_max) || !std::isfinite(gamma_max))
        throw Error(Errc::invalid_config, "gamma_max: must be finite and exceed gamma_min");
    if (!(c >= 0.0 && c <= 1.0)) throw Error(Errc::invalid_config, "c: must lie in [0, 1]");
}

std::vector<int> sample_roar_set(int length, double k, Rng& rng) {
    if (!(k >= 1.0)) throw Error(Errc::invalid_config, "k: must be >= 1");
    std::bernoulli_distribution include(1.0 / k);
    std::vector<int> out;
    for (int i = 0; i < length; ++i)
        if (include(rng)) out.push_back(i);
    return out;
}

std::vector<int> sample_roar_set(int length, double k, std::uint64_t seed) {
    Rng rng = make_rng(seed, kRoarStream);
    return sample_roar_set(length, k, rng);
}

GammaSample sample_gammas(int length, const CorruptionConfig& config, Rng& rng) {
    config.validate();
    GammaSample out;
    out.gamma.resize(length);
    out.roar.assign(static_cast<std::size_t>(length), false);
    out.high.assign(static_cast<std::size_t>(length), false);
    for (int i : sample_roar_set(length, config.k, rng)) out.roar[static_cast<std::size_t>(i)] = true;

    std::bernoulli_distribution coin(0.5);
    std::lognormal_distribution<double> lognormal(config.mu, config.sigma);
    for (int i = 0; i < length; ++i) {
        const auto slot = static_cast<std::size_t>(i);
        if (out.roar[slot]) {
            const bool high = coin(rng);
            out.high[slot] = high;
            if (config.mode == RoarMode::atomic) {
                out.gamma(i) = high ? config.gamma_max : 0.0;
            } else if (high) {
                out.gamma(i) = std::uniform_real_distribution<double>(config.c * config.gamma_max, config.gamma_max)(rng);
            } else {
                out.gamma(i) = std::uniform_real_distribution<double>(0.0, config.gamma_min)(rng);
            }
        } else {
            double g = lognormal(rng);
            if (config.clip_lognormal) g = std::clamp(g, config.gamma_min, config.gamma_max);
            out.gamma(i) = g;
        }
    }
    return out;
}

Vector sample_gamma_vector(int length, const CorruptionConfig& config, std::uint64_t seed) {
    Rng rng = make_rng(seed, kGammaStream);
    return sample_gammas(length, config, rng).gamma;
}

Matrix corrupt(const Sequence& x, const Vector& gamma, const EmbeddingTable& emb, Rng& rng) {
    if (gamma.size() != static_cast<Eigen::Index>(x.size()))
        throw Error(Errc::dimension, "SNR vector length does not match the sequence");
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
        if (!(gamma(i) >= 0.0) || !std::isfinite(gamma(i)))
            throw Error(Errc::invalid_snr, "gamma_" + std::to_string(i) + " must be finite and >= 0");
    for (Token v : x)
        if (v < 0 || v > emb.mask_id())
            throw Error(Errc::invalid_vocab, "token id " + std::to_string(v) + " outside the vocabulary");
    const Matrix embedded = emb.encode(x);
    const Matrix noise = standard_normal(embedded.rows(), embedded.cols(), rng);
    Matrix z = gamma.asDiagonal() * embedded;
    z += gamma.cwiseSqrt().asDiagonal() * noise;
    return z;
}

Matrix corrupt(const Sequence& x, const Vector& gamma, const EmbeddingTable& emb, std::uint64_t seed) {
    Rng rng = make_rng(seed, kNoiseStream);
    return corrupt(x, gamma, emb, rng);
}

} // namespace dsl
