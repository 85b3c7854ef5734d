#include "dsl/denoiser.hpp"

#include <limits>

namespace dsl {

ExactPosterior::ExactPosterior(EmpiricalDistribution data, EmbeddingTable emb)
    : data_(std::move(data)), emb_(std::move(emb)) {
    detail::check_vocab(data_, emb_);
}

Matrix ExactPosterior::denoise(const Matrix& z) const { return dsl::denoise(z, data_, emb_); }

double ExactPosterior::log_prob(const Matrix& z, const Sequence& x) const {
    const auto n = data_.find(x);
    if (!n) return -std::numeric_limits<double>::infinity();
    return tilted_posterior(z, data_, emb_).log_weights(static_cast<Eigen::Index>(*n));
}

double ExactPosterior::log_token_prob(const Matrix& z, int position, Token v) const {
    const auto marg = token_marginals(z, data_, emb_);
    return std::log(marg.probs(position, v));
}

} // namespace dsl
