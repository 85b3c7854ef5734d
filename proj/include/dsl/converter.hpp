#pragma once

#include "dsl/corpus.hpp"
#include "dsl/corruption.hpp"
#include "dsl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace dsl {

/// Softmax converter parameters: global temperature and per-token logit
/// biases over K data tokens plus the mask (index K).
struct ConverterParams {
    double beta = 1.0;
    Vector bias;

    /// Zero biases except bias[K] = mask_bias.
    static ConverterParams mask_favoring(int vocab_size, double mask_bias = 3.0, double beta = 1.0);

    void validate(int vocab_size) const;
};

/// softmax(beta * z . W_v + b_v) over v = 0..K, W_K being the zero mask row.
Vector convert(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb, const ConverterParams& params);

/// Converted mixture renormalized over the K data tokens.
Vector convert_tokens_only(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb,
                           const ConverterParams& params);

struct ConverterExample {
    Token token;
    RowVector z;
};

/// A single-token corruption draw: z = gamma enc(token) + sqrt(gamma) eps.
struct CorruptionDraw {
    Token token;
    double gamma;
    std::uint64_t seed;
};

std::vector<ConverterExample> realize_draws(const std::vector<CorruptionDraw>& draws, const EmbeddingTable& emb);

/// Mean -log convert(z)[token]. Targets must be data tokens.
double converter_nll(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb,
                     const ConverterParams& params);

struct ConverterGradient {
    double loss = 0.0;
    double d_beta = 0.0;
    Vector d_bias;
};

ConverterGradient converter_gradient(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb,
                                     const ConverterParams& params);

struct TrainOptions {
    double learning_rate = 0.5;
    std::size_t iterations = 1000;
};

struct TrainResult {
    ConverterParams params;
    std::vector<double> loss_trace;     ///< loss before iteration 0, then after each iteration
    std::vector<double> learning_rate;  ///< accepted step size per iteration
};

/// Gradient descent on (beta, b) with step halving whenever the loss would
/// increase, so the trace is non-increasing.
TrainResult train_converter(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb,
                            const ConverterParams& init, const TrainOptions& options);
TrainResult train_converter(const std::vector<CorruptionDraw>& draws, const EmbeddingTable& emb,
                            const ConverterParams& init, const TrainOptions& options);

/// n draws with uniform tokens and per-draw SNR from the corruption sampler.
std::vector<CorruptionDraw> sample_converter_draws(std::size_t n, int vocab_size, const CorruptionConfig& config,
                                                   std::uint64_t seed);

/// Bayes posterior of a single token under a uniform prior: softmax(z . e_v).
Vector single_token_posterior(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb);

struct ConverterEval {
    double gamma = 0.0;
    double kl = 0.0;          ///< mean KL(Bayes || converter), mask mass counted as error
    double true_mass = 0.0;   ///< mean converter mass on the clean token
    double mask_mass = 0.0;
    double entropy = 0.0;     ///< mean entropy of the (K + 1)-way mixture, nats
    double mask_argmax = 0.0; ///< fraction of draws whose arg-max is the mask
};

/// Averages over n single-token draws at a fixed SNR (uniform tokens).
ConverterEval evaluate_converter(const ConverterParams& params, const EmbeddingTable& emb, double gamma,
                                 std::size_t n, std::uint64_t seed);

/// key = value text form.
void write_params(std::ostream& out, const ConverterParams& params);
ConverterParams read_params(std::istream& in);

} // namespace dsl
