#pragma once

#include "dsl/corpus.hpp"
#include "dsl/denoiser.hpp"
#include "dsl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <utility>
#include <vector>

namespace dsl {

/// Per-token piecewise-linear, non-decreasing SNR schedules on a shared knot
/// grid. Knot 0 is t = 0 with every gamma_i(0) = 0.
class SnrPath {
public:
    SnrPath() = default;
    /// `times`: strictly increasing, times[0] == 0. `gammas`: knots x L.
    SnrPath(std::vector<double> times, Matrix gammas);

    /// Builds the shared grid from per-token (t, gamma) knot lists; each list
    /// must start at (0, 0). Tokens hold their last value past their last knot.
    static SnrPath from_token_knots(const std::vector<std::vector<std::pair<double, double>>>& knots);

    int length() const noexcept { return static_cast<int>(gammas_.cols()); }
    std::size_t knot_count() const noexcept { return times_.size(); }
    double t_end() const noexcept { return times_.back(); }
    const std::vector<double>& times() const noexcept { return times_; }
    /// SNR vector at knot j.
    Vector knot(std::size_t j) const { return gammas_.row(static_cast<Eigen::Index>(j)).transpose(); }
    /// SNR vector at time t (clamped to [0, t_end]).
    Vector at(double t) const;
    /// Per-token SNR rate on the segment containing t.
    Vector rate(double t) const;

private:
    std::size_t segment(double t) const;

    std::vector<double> times_;
    Matrix gammas_;
};

/// gamma_i(t) = t for every token on n_steps + 1 uniform knots in [0, gamma_end].
SnrPath diagonal_path(int length, double gamma_end, int n_steps);

enum class TokenRole { conditioned, sweeping, silent };

/// Autoregressive contour for one focus token: earlier tokens are observed
/// exactly (infinite SNR, realized by hard conditioning), the focus token
/// sweeps 0 -> gamma_end, later tokens stay at SNR 0.
struct ArPath {
    int focus = 0;  ///< 0-based position
    std::vector<TokenRole> roles;
    SnrPath path;   ///< finite-SNR part; conditioned and silent tokens sit at 0

    /// Hard-conditioning observation induced by x on the conditioned tokens.
    Observation observation(const Sequence& x) const;
};

/// `focus` is the 0-based position of the sweeping token.
ArPath ar_path(int length, int focus, double gamma_end, int n_steps = 1);

struct Trajectory {
    std::vector<double> times;
    std::vector<Matrix> states;
    bool terminal = false;  ///< last entry is the state at the path's end

    const Matrix& final_state() const { return states.back(); }
};

struct SimulationOptions {
    /// Record every `record_stride`-th knot (0: only the first and last).
    std::size_t record_stride = 1;
};

/// Exact simulation of dz_i = x_i dgamma_i + dW(gamma_i) given the data point.
Trajectory simulate_conditional(const Sequence& x, const SnrPath& path, const EmbeddingTable& emb,
                                std::uint64_t seed, const SimulationOptions& options = {});

/// Euler-Maruyama simulation of dz_i = xhat_i(z) dgamma_i + dW(gamma_i) from z = 0.
Trajectory simulate_unconditional(const SnrPath& path, const EmpiricalDistribution& data,
                                  const EmbeddingTable& emb, std::uint64_t seed,
                                  const SimulationOptions& options = {});

/// Same, against an arbitrary posterior model.
Trajectory simulate_unconditional(const SnrPath& path, const PosteriorModel& model, std::uint64_t seed,
                                  const SimulationOptions& options = {});

/// Per-position posterior argmax; ties go to the smallest token id.
Sequence decode(const Matrix& z, const EmpiricalDistribution& data, const EmbeddingTable& emb);

/// Index of the largest entry, first one on ties.
template <typename Derived>
Eigen::Index argmax_first(const Eigen::DenseBase<Derived>& row) {
    Eigen::Index best = 0;
    for (Eigen::Index v = 1; v < row.size(); ++v)
        if (row(v) > row(best)) best = v;
    return best;
}

struct SampleCounts {
    std::map<Sequence, std::size_t> counts;
    std::size_t chains = 0;
};

/// Chain c runs simulate_unconditional with seed derive_seed(seed, chain_stream, c)
/// and is decoded at the terminal state.
SampleCounts sample_batch(std::size_t n_chains, const SnrPath& path, const EmpiricalDistribution& data,
                          const EmbeddingTable& emb, std::uint64_t seed, unsigned threads = 1);

std::uint64_t chain_seed(std::uint64_t master, std::size_t chain);

/// Fraction of chains whose decoded sequence lies in the support of `data`.
double valid_fraction(const SampleCounts& samples, const EmpiricalDistribution& data);

/// Total-variation distance between the decoded-sample histogram and `data`.
double total_variation(const SampleCounts& samples, const EmpiricalDistribution& data);

/// CSV rows (chain, step, t, token, z0..z{d-1}).
void write_trajectory_csv(std::ostream& out, const std::vector<std::pair<std::size_t, Trajectory>>& chains);

} // namespace dsl
