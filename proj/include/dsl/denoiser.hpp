#pragma once

// Exact posterior quantities of an empirical distribution under the
// per-token spherical Gaussian channel z_i = g_i x_i + sqrt(g_i) eps_i.
//
// With unit-norm embeddings every SNR-dependent factor of the likelihood is
// constant across sequences, so the posterior is the exponential tilt
// P(x) exp(sum_i z_i . x_i) / Z(z). None of the routines below take an SNR
// argument except denoise_gaussian_oracle, which evaluates the channel
// likelihood directly and exists to cross-check that identity.

#include "dsl/corpus.hpp"
#include "dsl/error.hpp"
#include "dsl/types.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dsl {

template <typename Scalar>
struct BasicSequencePosterior {
    VectorX<Scalar> log_weights;  ///< normalized: logsumexp == 0

    VectorX<Scalar> probabilities() const { return log_weights.array().exp().matrix(); }
};

template <typename Scalar>
struct BasicTokenPosterior {
    MatrixX<Scalar> probs;  ///< L x K, rows on the simplex

    Eigen::Index length() const noexcept { return probs.rows(); }
    Eigen::Index vocab_size() const noexcept { return probs.cols(); }
};

using SequencePosterior = BasicSequencePosterior<double>;
using TokenPosterior = BasicTokenPosterior<double>;

/// Observed tokens for hard conditioning; nullopt means unobserved.
using Observation = std::vector<std::optional<Token>>;

namespace detail {

template <typename Derived>
void check_state(const Eigen::MatrixBase<Derived>& z, const EmpiricalDistribution& data, int dim) {
    if (z.rows() != data.length() || z.cols() != dim)
        throw Error(Errc::dimension, "state is " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                                         ", expected " + std::to_string(data.length()) + "x" + std::to_string(dim));
}

template <typename Scalar>
void check_vocab(const EmpiricalDistribution& data, const BasicEmbeddingTable<Scalar>& emb) {
    if (data.vocab_size() != emb.vocab_size())
        throw Error(Errc::dimension, "dataset vocabulary " + std::to_string(data.vocab_size()) +
                                         " does not match embedding vocabulary " + std::to_string(emb.vocab_size()));
}

template <typename Scalar>
Scalar log_sum_exp(const VectorX<Scalar>& v) {
    const Scalar top = v.maxCoeff();
    if (!std::isfinite(static_cast<double>(top))) return top;
    return top + std::log((v.array() - top).exp().sum());
}

} // namespace detail

/// Unnormalized log tilt log P(x) + sum_i z_i . x_i for every dataset sequence.
template <typename Derived>
VectorX<typename Derived::Scalar> tilted_scores(const Eigen::MatrixBase<Derived>& z, const EmpiricalDistribution& data,
                                                const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    using Scalar = typename Derived::Scalar;
    detail::check_vocab(data, emb);
    detail::check_state(z, data, emb.dim());
    const MatrixX<Scalar> projection = z * emb.tokens().transpose();  // L x K
    const auto& tokens = data.token_matrix();
    VectorX<Scalar> scores = data.log_weights().template cast<Scalar>();
    for (Eigen::Index n = 0; n < tokens.rows(); ++n)
        for (Eigen::Index i = 0; i < tokens.cols(); ++i) scores(n) += projection(i, tokens(n, i));
    return scores;
}

template <typename Derived>
BasicSequencePosterior<typename Derived::Scalar> tilted_posterior(
    const Eigen::MatrixBase<Derived>& z, const EmpiricalDistribution& data,
    const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    auto scores = tilted_scores(z, data, emb);
    const auto log_norm = detail::log_sum_exp(scores);
    scores.array() -= log_norm;
    return {std::move(scores)};
}

/// Per-position token marginals of the tilted posterior.
template <typename Derived>
BasicTokenPosterior<typename Derived::Scalar> token_marginals(const Eigen::MatrixBase<Derived>& z,
                                                              const EmpiricalDistribution& data,
                                                              const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    using Scalar = typename Derived::Scalar;
    const VectorX<Scalar> weights = tilted_posterior(z, data, emb).probabilities();
    const auto& tokens = data.token_matrix();
    MatrixX<Scalar> probs = MatrixX<Scalar>::Zero(data.length(), data.vocab_size());
    for (Eigen::Index n = 0; n < tokens.rows(); ++n)
        for (Eigen::Index i = 0; i < tokens.cols(); ++i) probs(i, tokens(n, i)) += weights(n);
    return {std::move(probs)};
}

/// MMSE denoiser E[x | z]; independent of the SNR that produced z.
template <typename Derived>
MatrixX<typename Derived::Scalar> denoise(const Eigen::MatrixBase<Derived>& z, const EmpiricalDistribution& data,
                                          const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    return token_marginals(z, data, emb).probs * emb.tokens();
}

/// Posterior mean from the Gaussian channel likelihood, without cancelling
/// the SNR-dependent terms. Test oracle for denoise.
template <typename Derived, typename GammaDerived>
MatrixX<typename Derived::Scalar> denoise_gaussian_oracle(const Eigen::MatrixBase<Derived>& z,
                                                          const Eigen::MatrixBase<GammaDerived>& gamma,
                                                          const EmpiricalDistribution& data,
                                                          const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    using Scalar = typename Derived::Scalar;
    detail::check_vocab(data, emb);
    detail::check_state(z, data, emb.dim());
    if (gamma.size() != z.rows())
        throw Error(Errc::dimension, "SNR vector has " + std::to_string(gamma.size()) + " entries, expected " +
                                         std::to_string(z.rows()));
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
        if (!(gamma(i) > Scalar(0)))
            throw Error(Errc::invalid_snr, "oracle requires gamma_" + std::to_string(i) + " > 0");

    const auto count = static_cast<Eigen::Index>(data.size());
    VectorX<Scalar> log_lik(count);
    for (Eigen::Index n = 0; n < count; ++n) {
        const MatrixX<Scalar> x = emb.encode(data.sequence(static_cast<std::size_t>(n)));
        Scalar acc = static_cast<Scalar>(data.log_weights()(n));
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            acc -= (z.row(i) - gamma(i) * x.row(i)).squaredNorm() / (Scalar(2) * gamma(i));
        log_lik(n) = acc;
    }
    const Scalar log_norm = detail::log_sum_exp(log_lik);
    MatrixX<Scalar> mean = MatrixX<Scalar>::Zero(z.rows(), z.cols());
    for (Eigen::Index n = 0; n < count; ++n)
        mean += std::exp(log_lik(n) - log_norm) * emb.encode(data.sequence(static_cast<std::size_t>(n)));
    return mean;
}

/// Denoiser of the distribution restricted to sequences matching `observed`
/// (the infinite-SNR limit on observed positions).
template <typename Derived>
MatrixX<typename Derived::Scalar> conditional_denoise(const Eigen::MatrixBase<Derived>& z,
                                                      const Observation& observed,
                                                      const EmpiricalDistribution& data,
                                                      const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    for (const auto& v : observed)
        if (v && (*v < 0 || *v >= data.vocab_size()))
            throw Error(Errc::invalid_vocab, "observed token " + std::to_string(*v) + " out of range");
    return denoise(z, data.condition(observed), emb);
}

/// log sum_x P(x) exp(z . x). Its gradient in z is denoise(z).
template <typename Derived>
typename Derived::Scalar hopfield_energy(const Eigen::MatrixBase<Derived>& z, const EmpiricalDistribution& data,
                                         const BasicEmbeddingTable<typename Derived::Scalar>& emb) {
    return detail::log_sum_exp(tilted_scores(z, data, emb));
}

/// Posterior provider used by the likelihood estimators. The exact model
/// below enumerates the dataset; a learned model can be substituted.
class PosteriorModel {
public:
    virtual ~PosteriorModel() = default;

    virtual int length() const = 0;
    virtual int dim() const = 0;
    virtual Matrix denoise(const Matrix& z) const = 0;
    /// log P(x | z) of a full sequence.
    virtual double log_prob(const Matrix& z, const Sequence& x) const = 0;
    /// log P(x_i = v | z) of one position.
    virtual double log_token_prob(const Matrix& z, int position, Token v) const = 0;
};

class ExactPosterior final : public PosteriorModel {
public:
    ExactPosterior(EmpiricalDistribution data, EmbeddingTable emb);

    int length() const override { return data_.length(); }
    int dim() const override { return emb_.dim(); }
    Matrix denoise(const Matrix& z) const override;
    double log_prob(const Matrix& z, const Sequence& x) const override;
    double log_token_prob(const Matrix& z, int position, Token v) const override;

    const EmpiricalDistribution& data() const noexcept { return data_; }
    const EmbeddingTable& embeddings() const noexcept { return emb_; }

private:
    EmpiricalDistribution data_;
    EmbeddingTable emb_;
};

} // namespace dsl
