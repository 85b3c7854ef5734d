#include "dsl/dynamics.hpp"

#include "dsl/parallel.hpp"
#include "dsl/random.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

namespace dsl {

namespace {

constexpr std::uint64_t kConditionalStream = 0xc0d1;
constexpr std::uint64_t kUnconditionalStream = 0x0c0d;
constexpr std::uint64_t kChainStream = 0xc4a1;

bool should_record(std::size_t knot, std::size_t last, std::size_t stride) {
    if (knot == 0 || knot == last) return true;
    return stride != 0 && knot % stride == 0;
}

template <typename Drift>
Trajectory run_euler_maruyama(const SnrPath& path, int dim, std::uint64_t seed, const SimulationOptions& options,
                              std::uint64_t stream, Drift&& drift) {
    const int length = path.length();
    Rng rng = make_rng(seed, stream);
    std::normal_distribution<double> normal;
    Matrix z = Matrix::Zero(length, dim);
    Trajectory out;
    const std::size_t last = path.knot_count() - 1;
    out.times.push_back(path.times().front());
    out.states.push_back(z);
    Vector previous = path.knot(0);
    for (std::size_t j = 1; j <= last; ++j) {
        const Vector current = path.knot(j);
        const Vector step = current - previous;
        drift(z, step);
        for (int i = 0; i < length; ++i) {
            const double scale = std::sqrt(std::max(step(i), 0.0));
            for (int c = 0; c < dim; ++c) z(i, c) += scale * normal(rng);
        }
        previous = current;
        if (should_record(j, last, options.record_stride)) {
            out.times.push_back(path.times()[j]);
            out.states.push_back(z);
        }
    }
    out.terminal = true;
    return out;
}

} // namespace

SnrPath::SnrPath(std::vector<double> times, Matrix gammas) : times_(std::move(times)), gammas_(std::move(gammas)) {
    if (times_.size() < 2) throw Error(Errc::invalid_path, "path needs at least two knots");
    if (static_cast<Eigen::Index>(times_.size()) != gammas_.rows())
        throw Error(Errc::invalid_path, "knot times and SNR rows disagree in count");
    if (gammas_.cols() < 1) throw Error(Errc::invalid_path, "path covers no tokens");
    if (times_.front() != 0.0) throw Error(Errc::invalid_path, "first knot must be at t = 0");
    for (std::size_t j = 1; j < times_.size(); ++j)
        if (!(times_[j] > times_[j - 1])) throw Error(Errc::invalid_path, "knot times must be strictly increasing");
    if (!(gammas_.row(0).array() == 0.0).all()) throw Error(Errc::invalid_path, "gamma_i(0) must be exactly 0");
    for (Eigen::Index j = 1; j < gammas_.rows(); ++j)
        if ((gammas_.row(j).array() < gammas_.row(j - 1).array()).any() || !gammas_.row(j).allFinite())
            throw Error(Errc::invalid_path, "SNR must be finite and non-decreasing");
}

SnrPath SnrPath::from_token_knots(const std::vector<std::vector<std::pair<double, double>>>& knots) {
    if (knots.empty()) throw Error(Errc::invalid_path, "path covers no tokens");
    std::set<double> grid;
    for (const auto& token : knots) {
        if (token.empty() || token.front().first != 0.0 || token.front().second != 0.0)
            throw Error(Errc::invalid_path, "every token path must start at (0, 0)");
        for (std::size_t j = 1; j < token.size(); ++j)
            if (!(token[j].first > token[j - 1].first))
                throw Error(Errc::invalid_path, "knot times must be strictly increasing");
        for (const auto& [t, g] : token) grid.insert(t);
    }
    std::vector<double> times(grid.begin(), grid.end());
    Matrix gammas(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(knots.size()));
    for (std::size_t i = 0; i < knots.size(); ++i) {
        const auto& token = knots[i];
        std::size_t seg = 0;
        for (std::size_t j = 0; j < times.size(); ++j) {
            const double t = times[j];
            while (seg + 1 < token.size() && token[seg + 1].first <= t) ++seg;
            double g = token[seg].second;
            if (seg + 1 < token.size()) {
                const auto& [t0, g0] = token[seg];
                const auto& [t1, g1] = token[seg + 1];
                g = g0 + (g1 - g0) * (t - t0) / (t1 - t0);
            }
            gammas(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = g;
        }
    }
    if (times.size() == 1) {  // every token constant at zero
        times.push_back(1.0);
        gammas.conservativeResize(2, gammas.cols());
        gammas.row(1).setZero();
    }
    return SnrPath(std::move(times), std::move(gammas));
}

std::size_t SnrPath::segment(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 0;
    return std::min<std::size_t>(static_cast<std::size_t>(it - times_.begin()) - 1, times_.size() - 2);
}

Vector SnrPath::at(double t) const {
    t = std::clamp(t, 0.0, t_end());
    const std::size_t j = segment(t);
    const double w = (t - times_[j]) / (times_[j + 1] - times_[j]);
    return ((1.0 - w) * gammas_.row(static_cast<Eigen::Index>(j)) + w * gammas_.row(static_cast<Eigen::Index>(j + 1)))
        .transpose();
}

Vector SnrPath::rate(double t) const {
    const std::size_t j = segment(std::clamp(t, 0.0, t_end()));
    return ((gammas_.row(static_cast<Eigen::Index>(j + 1)) - gammas_.row(static_cast<Eigen::Index>(j))) /
            (times_[j + 1] - times_[j]))
        .transpose();
}

SnrPath diagonal_path(int length, double gamma_end, int n_steps) {
    if (length < 1) throw Error(Errc::invalid_path, "length must be positive");
    if (!(gamma_end > 0.0)) throw Error(Errc::invalid_path, "gamma_end must be positive");
    if (n_steps < 1) throw Error(Errc::invalid_path, "n_steps must be >= 1");
    std::vector<double> times(static_cast<std::size_t>(n_steps) + 1);
    Matrix gammas(n_steps + 1, length);
    for (int j = 0; j <= n_steps; ++j) {
        const double t = (j == n_steps) ? gamma_end : gamma_end * j / n_steps;
        times[static_cast<std::size_t>(j)] = t;
        gammas.row(j).setConstant(t);
    }
    return SnrPath(std::move(times), std::move(gammas));
}

Observation ArPath::observation(const Sequence& x) const {
    if (x.size() != roles.size())
        throw Error(Errc::dimension, "sequence length does not match the contour length");
    Observation obs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        if (roles[i] == TokenRole::conditioned) obs[i] = x[i];
    return obs;
}

ArPath ar_path(int length, int focus, double gamma_end, int n_steps) {
    if (focus < 0 || focus >= length)
        throw Error(Errc::invalid_path, "focus index " + std::to_string(focus) + " outside [0, " +
                                            std::to_string(length) + ")");
    if (!(gamma_end > 0.0)) throw Error(Errc::invalid_path, "gamma_end must be positive");
    if (n_steps < 1) throw Error(Errc::invalid_path, "n_steps must be >= 1");
    ArPath out;
    out.focus = focus;
    out.roles.resize(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i)
        out.roles[static_cast<std::size_t>(i)] =
            i < focus ? TokenRole::conditioned : (i == focus ? TokenRole::sweeping : TokenRole::silent);
    std::vector<double> times(static_cast<std::size_t>(n_steps) + 1);
    Matrix gammas = Matrix::Zero(n_steps + 1, length);
    for (int j = 0; j <= n_steps; ++j) {
        const double t = (j == n_steps) ? gamma_end : gamma_end * j / n_steps;
        times[static_cast<std::size_t>(j)] = t;
        gammas(j, focus) = t;
    }
    out.path = SnrPath(std::move(times), std::move(gammas));
    return out;
}

Trajectory simulate_conditional(const Sequence& x, const SnrPath& path, const EmbeddingTable& emb,
                                std::uint64_t seed, const SimulationOptions& options) {
    if (static_cast<int>(x.size()) != path.length())
        throw Error(Errc::dimension, "sequence length does not match the path");
    for (Token v : x)
        if (v < 0 || v >= emb.vocab_size())
            throw Error(Errc::invalid_vocab, "token id " + std::to_string(v) + " outside the vocabulary");
    const Matrix embedded = emb.encode(x);
    // Given x the SDE is linear, so each knot-to-knot increment is exactly
    // Normal(dgamma x_i, dgamma I).
    return run_euler_maruyama(path, emb.dim(), seed, options, kConditionalStream,
                              [&](Matrix& z, const Vector& step) { z += step.asDiagonal() * embedded; });
}

Trajectory simulate_unconditional(const SnrPath& path, const EmpiricalDistribution& data, const EmbeddingTable& emb,
                                  std::uint64_t seed, const SimulationOptions& options) {
    if (path.length() != data.length()) throw Error(Errc::dimension, "path length does not match the data");
    detail::check_vocab(data, emb);
    return run_euler_maruyama(path, emb.dim(), seed, options, kUnconditionalStream,
                              [&](Matrix& z, const Vector& step) { z += step.asDiagonal() * denoise(z, data, emb); });
}

Trajectory simulate_unconditional(const SnrPath& path, const PosteriorModel& model, std::uint64_t seed,
                                  const SimulationOptions& options) {
    if (path.length() != model.length()) throw Error(Errc::dimension, "path length does not match the model");
    return run_euler_maruyama(path, model.dim(), seed, options, kUnconditionalStream,
                              [&](Matrix& z, const Vector& step) { z += step.asDiagonal() * model.denoise(z); });
}

Sequence decode(const Matrix& z, const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    const auto marginals = token_marginals(z, data, emb);
    Sequence out(static_cast<std::size_t>(marginals.length()));
    for (Eigen::Index i = 0; i < marginals.length(); ++i)
        out[static_cast<std::size_t>(i)] = static_cast<Token>(argmax_first(marginals.probs.row(i)));
    return out;
}

std::uint64_t chain_seed(std::uint64_t master, std::size_t chain) {
    return derive_seed(master, kChainStream, chain);
}

SampleCounts sample_batch(std::size_t n_chains, const SnrPath& path, const EmpiricalDistribution& data,
                          const EmbeddingTable& emb, std::uint64_t seed, unsigned threads) {
    if (n_chains < 1) throw Error(Errc::invalid_config, "n_chains must be >= 1");
    std::vector<Sequence> decoded(n_chains);
    const SimulationOptions terminal_only{0};
    parallel_for(n_chains, threads, [&](std::size_t c) {
        const auto traj = simulate_unconditional(path, data, emb, chain_seed(seed, c), terminal_only);
        decoded[c] = decode(traj.final_state(), data, emb);
    });
    SampleCounts out;
    out.chains = n_chains;
    for (auto& seq : decoded) ++out.counts[std::move(seq)];
    return out;
}

double valid_fraction(const SampleCounts& samples, const EmpiricalDistribution& data) {
    std::size_t valid = 0;
    for (const auto& [seq, count] : samples.counts)
        if (data.find(seq)) valid += count;
    return samples.chains ? static_cast<double>(valid) / static_cast<double>(samples.chains) : 0.0;
}

double total_variation(const SampleCounts& samples, const EmpiricalDistribution& data) {
    const double total = static_cast<double>(samples.chains);
    double tv = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto it = samples.counts.find(data.sequence(n));
        const double empirical = it == samples.counts.end() ? 0.0 : static_cast<double>(it->second) / total;
        tv += std::abs(empirical - data.weights()(static_cast<Eigen::Index>(n)));
    }
    for (const auto& [seq, count] : samples.counts)
        if (!data.find(seq)) tv += static_cast<double>(count) / total;
    return 0.5 * tv;
}

void write_trajectory_csv(std::ostream& out, const std::vector<std::pair<std::size_t, Trajectory>>& chains) {
    int dim = 0;
    for (const auto& [c, traj] : chains)
        if (!traj.states.empty()) dim = static_cast<int>(traj.states.front().cols());
    out << "chain,step,t,token";
    for (int j = 0; j < dim; ++j) out << ",z" << j;
    out << '\n';
    std::ostringstream line;
    line.precision(12);
    for (const auto& [c, traj] : chains) {
        for (std::size_t s = 0; s < traj.states.size(); ++s) {
            const Matrix& z = traj.states[s];
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                line.str("");
                line << c << ',' << s << ',' << traj.times[s] << ',' << i;
                for (Eigen::Index j = 0; j < z.cols(); ++j) line << ',' << z(i, j);
                out << line.str() << '\n';
            }
        }
    }
}

} // namespace dsl
