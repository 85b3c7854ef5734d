#include "dsl/converter.hpp"

#include "dsl/error.hpp"
#include "dsl/random.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace dsl {

namespace {

constexpr std::uint64_t kDrawStream = 0xd4a;
constexpr std::uint64_t kSampleStream = 0x5a3d;
constexpr std::uint64_t kEvalStream = 0xe7a1;

Vector logits(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb, const ConverterParams& params) {
    if (z.size() != emb.dim()) throw Error(Errc::dimension, "converter input has the wrong dimension");
    return params.beta * (emb.with_mask() * z.transpose()) + params.bias;
}

Vector softmax(const Vector& l) {
    Vector p = (l.array() - l.maxCoeff()).exp().matrix();
    return p / p.sum();
}

double log_softmax_at(const Vector& l, Eigen::Index v) {
    const double top = l.maxCoeff();
    return l(v) - top - std::log((l.array() - top).exp().sum());
}

void check_targets(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb) {
    if (examples.empty()) throw Error(Errc::invalid_config, "converter corpus is empty");
    for (const auto& ex : examples) {
        if (ex.token == emb.mask_id()) throw Error(Errc::invalid_target, "the mask token cannot be a target");
        if (ex.token < 0 || ex.token > emb.mask_id())
            throw Error(Errc::invalid_vocab, "target token " + std::to_string(ex.token) + " out of range");
    }
}

} // namespace

ConverterParams ConverterParams::mask_favoring(int vocab_size, double mask_bias, double beta) {
    ConverterParams p;
    p.beta = beta;
    p.bias = Vector::Zero(vocab_size + 1);
    p.bias(vocab_size) = mask_bias;
    return p;
}

void ConverterParams::validate(int vocab_size) const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(Errc::invalid_config, "beta: must be finite and > 0");
    if (bias.size() != vocab_size + 1)
        throw Error(Errc::dimension, "bias has " + std::to_string(bias.size()) + " entries, expected " +
                                         std::to_string(vocab_size + 1));
    if (!bias.allFinite()) throw Error(Errc::invalid_config, "bias: must be finite");
}

Vector convert(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb, const ConverterParams& params) {
    params.validate(emb.vocab_size());
    return softmax(logits(z, emb, params));
}

Vector convert_tokens_only(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb,
                           const ConverterParams& params) {
    params.validate(emb.vocab_size());
    const Vector l = logits(z, emb, params).head(emb.vocab_size());
    return softmax(l);
}

std::vector<ConverterExample> realize_draws(const std::vector<CorruptionDraw>& draws, const EmbeddingTable& emb) {
    std::vector<ConverterExample> out;
    out.reserve(draws.size());
    for (const auto& d : draws) {
        if (d.token < 0 || d.token >= emb.vocab_size())
            throw Error(Errc::invalid_target, "draw token " + std::to_string(d.token) + " is not a data token");
        if (!(d.gamma >= 0.0)) throw Error(Errc::invalid_snr, "draw gamma must be >= 0");
        Rng rng = make_rng(d.seed, kDrawStream);
        std::normal_distribution<double> normal;
        RowVector z = d.gamma * emb.row(d.token);
        const double scale = std::sqrt(d.gamma);
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) += scale * normal(rng);
        out.push_back({d.token, std::move(z)});
    }
    return out;
}

double converter_nll(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb,
                     const ConverterParams& params) {
    check_targets(examples, emb);
    params.validate(emb.vocab_size());
    double total = 0.0;
    for (const auto& ex : examples) total -= log_softmax_at(logits(ex.z, emb, params), ex.token);
    return total / static_cast<double>(examples.size());
}

ConverterGradient converter_gradient(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb,
                                     const ConverterParams& params) {
    check_targets(examples, emb);
    params.validate(emb.vocab_size());
    ConverterGradient g;
    g.d_bias = Vector::Zero(emb.vocab_size() + 1);
    for (const auto& ex : examples) {
        const Vector similarity = emb.with_mask() * ex.z.transpose();
        const Vector l = params.beta * similarity + params.bias;
        Vector residual = softmax(l);
        g.loss -= log_softmax_at(l, ex.token);
        residual(ex.token) -= 1.0;
        g.d_beta += residual.dot(similarity);
        g.d_bias += residual;
    }
    const double n = static_cast<double>(examples.size());
    g.loss /= n;
    g.d_beta /= n;
    g.d_bias /= n;
    return g;
}

TrainResult train_converter(const std::vector<ConverterExample>& examples, const EmbeddingTable& emb,
                            const ConverterParams& init, const TrainOptions& options) {
    if (!(options.learning_rate > 0.0)) throw Error(Errc::invalid_config, "lr: must be > 0");
    init.validate(emb.vocab_size());
    TrainResult out;
    out.params = init;
    auto grad = converter_gradient(examples, emb, out.params);
    if (!std::isfinite(grad.loss)) throw Error(Errc::training, "loss is not finite at iteration 0");
    out.loss_trace.push_back(grad.loss);

    double lr = options.learning_rate;
    for (std::size_t it = 0; it < options.iterations; ++it) {
        ConverterParams next = out.params;
        double next_loss = grad.loss;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            next.beta = out.params.beta - lr * grad.d_beta;
            next.bias = out.params.bias - lr * grad.d_bias;
            if (next.beta > 0.0 && next.bias.allFinite() && std::isfinite(next.beta)) {
                next_loss = converter_nll(examples, emb, next);
                if (std::isfinite(next_loss) && next_loss <= grad.loss) {
                    accepted = true;
                    break;
                }
            }
            lr *= 0.5;
        }
        if (!accepted) {
            // No decreasing step at machine precision: stationary point.
            out.loss_trace.push_back(grad.loss);
            out.learning_rate.push_back(0.0);
            continue;
        }
        out.params = std::move(next);
        out.learning_rate.push_back(lr);
        grad = converter_gradient(examples, emb, out.params);
        if (!std::isfinite(grad.loss))
            throw Error(Errc::training, "loss is not finite at iteration " + std::to_string(it + 1));
        out.loss_trace.push_back(grad.loss);
        lr = std::min(2.0 * lr, options.learning_rate);
    }
    return out;
}

TrainResult train_converter(const std::vector<CorruptionDraw>& draws, const EmbeddingTable& emb,
                            const ConverterParams& init, const TrainOptions& options) {
    return train_converter(realize_draws(draws, emb), emb, init, options);
}

std::vector<CorruptionDraw> sample_converter_draws(std::size_t n, int vocab_size, const CorruptionConfig& config,
                                                   std::uint64_t seed) {
    config.validate();
    if (vocab_size < 1) throw Error(Errc::invalid_vocab, "vocabulary must be non-empty");
    std::vector<CorruptionDraw> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(seed, kSampleStream, i);
        const Token v = std::uniform_int_distribution<Token>(0, vocab_size - 1)(rng);
        const double gamma = sample_gammas(1, config, rng).gamma(0);
        out.push_back({v, gamma, derive_seed(seed, kDrawStream, i)});
    }
    return out;
}

Vector single_token_posterior(const Eigen::Ref<const RowVector>& z, const EmbeddingTable& emb) {
    if (z.size() != emb.dim()) throw Error(Errc::dimension, "state has the wrong dimension");
    return softmax(emb.tokens() * z.transpose());
}

ConverterEval evaluate_converter(const ConverterParams& params, const EmbeddingTable& emb, double gamma,
                                 std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error(Errc::invalid_config, "evaluation needs at least one draw");
    const int K = emb.vocab_size();
    std::vector<CorruptionDraw> draws;
    draws.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(seed, kEvalStream, i);
        draws.push_back({std::uniform_int_distribution<Token>(0, K - 1)(rng), gamma, derive_seed(seed, kEvalStream, i)});
    }
    ConverterEval ev;
    ev.gamma = gamma;
    for (const auto& ex : realize_draws(draws, emb)) {
        const Vector q = convert(ex.z, emb, params);
        const Vector p = single_token_posterior(ex.z, emb);
        for (int v = 0; v < K; ++v)
            if (p(v) > 0.0) ev.kl += p(v) * (std::log(p(v)) - std::log(q(v)));
        double h = 0.0;
        for (Eigen::Index v = 0; v < q.size(); ++v)
            if (q(v) > 0.0) h -= q(v) * std::log(q(v));
        ev.entropy += h;
        ev.true_mass += q(ex.token);
        ev.mask_mass += q(K);
        Eigen::Index best;
        q.maxCoeff(&best);
        if (best == K) ev.mask_argmax += 1.0;
    }
    const double dn = static_cast<double>(n);
    ev.kl /= dn;
    ev.true_mass /= dn;
    ev.mask_mass /= dn;
    ev.entropy /= dn;
    ev.mask_argmax /= dn;
    return ev;
}

void write_params(std::ostream& out, const ConverterParams& params) {
    std::ostringstream text;
    text.precision(17);
    text << "beta = " << params.beta << '\n';
    text << "vocab_size = " << (params.bias.size() - 1) << '\n';
    for (Eigen::Index v = 0; v < params.bias.size(); ++v) text << "bias." << v << " = " << params.bias(v) << '\n';
    out << text.str();
}

ConverterParams read_params(std::istream& in) {
    std::map<std::string, double> values;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
        };
        trim(key);
        trim(value);
        try {
            values[key] = std::stod(value);
        } catch (const std::exception&) {
            throw Error(Errc::invalid_config, key + ": not a number");
        }
    }
    if (!values.count("beta") || !values.count("vocab_size"))
        throw Error(Errc::invalid_config, "params file needs beta and vocab_size");
    const int k = static_cast<int>(values["vocab_size"]);
    ConverterParams p;
    p.beta = values["beta"];
    p.bias = Vector::Zero(k + 1);
    for (int v = 0; v <= k; ++v) {
        const auto it = values.find("bias." + std::to_string(v));
        if (it == values.end()) throw Error(Errc::invalid_config, "bias." + std::to_string(v) + ": missing");
        p.bias(v) = it->second;
    }
    p.validate(k);
    return p;
}

} // namespace dsl
