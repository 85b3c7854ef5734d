#pragma once

#include "dsl/corpus.hpp"
#include "dsl/denoiser.hpp"
#include "dsl/dynamics.hpp"
#include "dsl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dsl {

/// Monte-Carlo estimate of E_i(x, gamma) = E_{z ~ p_gamma(z|x)} ||x_i - xhat_i(z)||^2.
struct ErrorFieldSample {
    Vector gamma;
    Vector error;        ///< E_i, per token
    Vector error_se;     ///< standard error of E_i
    double total = 0.0;  ///< sum_i E_i
    double total_se = 0.0;
    std::size_t n_mc = 0;
};

ErrorFieldSample error_field(const Sequence& x, const Vector& gamma, std::size_t n_mc, std::uint64_t seed,
                             const PosteriorModel& model, const EmbeddingTable& emb);
ErrorFieldSample error_field(const Sequence& x, const Vector& gamma, std::size_t n_mc, std::uint64_t seed,
                             const EmpiricalDistribution& data, const EmbeddingTable& emb);

struct NllEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    double integral = 0.0;    ///< 1/2 int_C E . dgamma
    double integral_se = 0.0;
    double truncation = 0.0;  ///< -E[log P(x | z)] at the contour end
    double truncation_se = 0.0;
    std::vector<ErrorFieldSample> field;  ///< one per knot
};

/// Quadrature grids over [0, gamma_max]. The geometric grid is 0 followed by
/// n_points - 1 log-spaced values from gamma_min to gamma_max.
std::vector<double> uniform_grid(double gamma_max, std::size_t n_points);
std::vector<double> geometric_grid(double gamma_max, std::size_t n_points, double gamma_min = 1e-2);

/// 1/2 int_C E . dgamma along an arbitrary per-token path by trapezoidal
/// quadrature on its knots, minus E[log P(x|z)] at the endpoint. Each knot
/// uses independent draws.
NllEstimate nll_contour(const Sequence& x, const SnrPath& path, std::size_t n_mc, std::uint64_t seed,
                        const PosteriorModel& model, const EmbeddingTable& emb);

/// Diagonal contour gamma_i = t sampled at `grid` (must start at 0 and end at gamma_max).
NllEstimate nll_diagonal(const Sequence& x, double gamma_max, const std::vector<double>& grid, std::size_t n_mc,
                         std::uint64_t seed, const PosteriorModel& model, const EmbeddingTable& emb);
NllEstimate nll_diagonal(const Sequence& x, double gamma_max, const std::vector<double>& grid, std::size_t n_mc,
                         std::uint64_t seed, const EmpiricalDistribution& data, const EmbeddingTable& emb);

struct TokenNll {
    double estimate = 0.0;
    double std_error = 0.0;
    double integral = 0.0;
    double truncation = 0.0;
    std::vector<ErrorFieldSample> field;  ///< focus-token sweep, one per grid point
};

struct ArNllEstimate {
    std::vector<TokenNll> tokens;
    double total = 0.0;
    double total_se = 0.0;
};

/// Autoregressive contour: token i sweeps the grid with x_{<i} observed
/// exactly and x_{>i} at SNR 0; per-token terms estimate -log P(x_i | x_{<i}).
ArNllEstimate nll_ar_contour(const Sequence& x, double gamma_max, const std::vector<double>& grid, std::size_t n_mc,
                             std::uint64_t seed, const EmpiricalDistribution& data, const EmbeddingTable& emb);

/// -log P(x); +infinity when x is outside the support.
double exact_nll(const Sequence& x, const EmpiricalDistribution& data);

/// Rows (gamma, token, E, std_error) for every knot of the field.
void write_error_field_csv(std::ostream& out, const std::vector<ErrorFieldSample>& field, const std::string& contour,
                           int focus = -1);

} // namespace dsl
