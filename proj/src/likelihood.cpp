#include "dsl/likelihood.hpp"

#include "dsl/random.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace dsl {

namespace {

constexpr std::uint64_t kFieldStream = 0xf1e1d;
constexpr std::uint64_t kTruncationStream = 0x7a11;
constexpr std::uint64_t kArStream = 0xa7;

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double std_error() const {
        if (n < 2) return 0.0;
        const double m = mean();
        const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
        return std::sqrt(var / static_cast<double>(n));
    }
};

Matrix sample_channel(const Matrix& x, const Vector& gamma, Rng& rng) {
    std::normal_distribution<double> normal;
    Matrix z(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double scale = std::sqrt(gamma(i));
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double eps = normal(rng);
            z(i, j) = gamma(i) == 0.0 ? 0.0 : gamma(i) * x(i, j) + scale * eps;
        }
    }
    return z;
}

void check_gamma(const Vector& gamma, int length) {
    if (gamma.size() != length) throw Error(Errc::dimension, "SNR vector length does not match the sequence");
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
        if (!(gamma(i) >= 0.0) || !std::isfinite(gamma(i)))
            throw Error(Errc::invalid_snr, "gamma_" + std::to_string(i) + " must be finite and >= 0");
}

template <typename DenoiseFn>
ErrorFieldSample estimate_field(const Matrix& x, const Vector& gamma, std::size_t n_mc, Rng& rng,
                                DenoiseFn&& denoise_fn) {
    if (n_mc < 1) throw Error(Errc::invalid_config, "n_mc must be >= 1");
    const Eigen::Index length = x.rows();
    std::vector<Moments> per_token(static_cast<std::size_t>(length));
    Moments total;
    for (std::size_t s = 0; s < n_mc; ++s) {
        const Matrix z = sample_channel(x, gamma, rng);
        const Matrix xhat = denoise_fn(z);
        double sum = 0.0;
        for (Eigen::Index i = 0; i < length; ++i) {
            const double e = (x.row(i) - xhat.row(i)).squaredNorm();
            per_token[static_cast<std::size_t>(i)].add(e);
            sum += e;
        }
        total.add(sum);
    }
    ErrorFieldSample out;
    out.gamma = gamma;
    out.error.resize(length);
    out.error_se.resize(length);
    for (Eigen::Index i = 0; i < length; ++i) {
        out.error(i) = per_token[static_cast<std::size_t>(i)].mean();
        out.error_se(i) = per_token[static_cast<std::size_t>(i)].std_error();
    }
    out.total = total.mean();
    out.total_se = total.std_error();
    out.n_mc = n_mc;
    return out;
}

void check_grid(const std::vector<double>& grid, double gamma_max) {
    if (grid.size() < 2) throw Error(Errc::invalid_quadrature, "grid needs at least two points");
    if (grid.front() != 0.0) throw Error(Errc::invalid_quadrature, "grid must start at 0");
    for (std::size_t j = 1; j < grid.size(); ++j)
        if (!(grid[j] > grid[j - 1])) throw Error(Errc::invalid_quadrature, "grid must be strictly increasing");
    if (std::abs(grid.back() - gamma_max) > 1e-12 * std::max(1.0, gamma_max))
        throw Error(Errc::invalid_quadrature, "grid must end at gamma_max");
}

} // namespace

ErrorFieldSample error_field(const Sequence& x, const Vector& gamma, std::size_t n_mc, std::uint64_t seed,
                             const PosteriorModel& model, const EmbeddingTable& emb) {
    check_gamma(gamma, static_cast<int>(x.size()));
    Rng rng = make_rng(seed, kFieldStream);
    return estimate_field(emb.encode(x), gamma, n_mc, rng, [&](const Matrix& z) { return model.denoise(z); });
}

ErrorFieldSample error_field(const Sequence& x, const Vector& gamma, std::size_t n_mc, std::uint64_t seed,
                             const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    return error_field(x, gamma, n_mc, seed, ExactPosterior(data, emb), emb);
}

std::vector<double> uniform_grid(double gamma_max, std::size_t n_points) {
    if (n_points < 2 || !(gamma_max > 0.0)) throw Error(Errc::invalid_quadrature, "need >= 2 points and gamma_max > 0");
    std::vector<double> grid(n_points);
    for (std::size_t j = 0; j < n_points; ++j)
        grid[j] = j + 1 == n_points ? gamma_max : gamma_max * static_cast<double>(j) / static_cast<double>(n_points - 1);
    return grid;
}

std::vector<double> geometric_grid(double gamma_max, std::size_t n_points, double gamma_min) {
    if (n_points < 3 || !(gamma_max > gamma_min) || !(gamma_min > 0.0))
        throw Error(Errc::invalid_quadrature, "need >= 3 points and 0 < gamma_min < gamma_max");
    std::vector<double> grid(n_points);
    grid[0] = 0.0;
    const double ratio = std::log(gamma_max / gamma_min) / static_cast<double>(n_points - 2);
    for (std::size_t j = 1; j < n_points; ++j)
        grid[j] = j + 1 == n_points ? gamma_max : gamma_min * std::exp(ratio * static_cast<double>(j - 1));
    return grid;
}

NllEstimate nll_contour(const Sequence& x, const SnrPath& path, std::size_t n_mc, std::uint64_t seed,
                        const PosteriorModel& model, const EmbeddingTable& emb) {
    if (path.length() != static_cast<int>(x.size()))
        throw Error(Errc::dimension, "path length does not match the sequence");
    const Matrix embedded = emb.encode(x);
    NllEstimate out;
    out.field.reserve(path.knot_count());
    for (std::size_t j = 0; j < path.knot_count(); ++j) {
        Rng rng = make_rng(seed, kFieldStream, j);
        out.field.push_back(
            estimate_field(embedded, path.knot(j), n_mc, rng, [&](const Matrix& z) { return model.denoise(z); }));
    }

    // Trapezoid per token: 1/2 sum_j sum_i (E_i(j) + E_i(j+1))/2 * dgamma_i(j).
    // Knot j carries weight c_ij = (dgamma_i(j-1) + dgamma_i(j)) / 4 on E_i(j).
    double integral = 0.0;
    double variance = 0.0;
    const int length = path.length();
    for (std::size_t j = 0; j < path.knot_count(); ++j) {
        Vector weight = Vector::Zero(length);
        if (j > 0) weight += path.knot(j) - path.knot(j - 1);
        if (j + 1 < path.knot_count()) weight += path.knot(j + 1) - path.knot(j);
        weight *= 0.25;
        const auto& f = out.field[j];
        integral += weight.dot(f.error);
        // Tokens share z draws, so only a uniform weight lets us use the
        // total's standard error directly; otherwise bound with the per-token
        // errors combined as fully correlated.
        if ((weight.array() == weight(0)).all()) {
            variance += weight(0) * weight(0) * f.total_se * f.total_se;
        } else {
            const double bound = weight.cwiseAbs().dot(f.error_se);
            variance += bound * bound;
        }
    }

    const Vector gamma_end = path.knot(path.knot_count() - 1);
    Moments log_post;
    Rng rng = make_rng(seed, kTruncationStream);
    for (std::size_t s = 0; s < n_mc; ++s) {
        const Matrix z = sample_channel(embedded, gamma_end, rng);
        log_post.add(-model.log_prob(z, x));
    }
    out.integral = integral;
    out.integral_se = std::sqrt(variance);
    out.truncation = log_post.mean();
    out.truncation_se = log_post.std_error();
    out.estimate = out.integral + out.truncation;
    out.std_error = std::hypot(out.integral_se, out.truncation_se);
    return out;
}

NllEstimate nll_diagonal(const Sequence& x, double gamma_max, const std::vector<double>& grid, std::size_t n_mc,
                         std::uint64_t seed, const PosteriorModel& model, const EmbeddingTable& emb) {
    if (!(gamma_max > 0.0)) throw Error(Errc::invalid_quadrature, "gamma_max must be positive");
    check_grid(grid, gamma_max);
    const auto length = static_cast<Eigen::Index>(x.size());
    Matrix gammas(static_cast<Eigen::Index>(grid.size()), length);
    for (std::size_t j = 0; j < grid.size(); ++j) gammas.row(static_cast<Eigen::Index>(j)).setConstant(grid[j]);
    return nll_contour(x, SnrPath(grid, gammas), n_mc, seed, model, emb);
}

NllEstimate nll_diagonal(const Sequence& x, double gamma_max, const std::vector<double>& grid, std::size_t n_mc,
                         std::uint64_t seed, const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    return nll_diagonal(x, gamma_max, grid, n_mc, seed, ExactPosterior(data, emb), emb);
}

ArNllEstimate nll_ar_contour(const Sequence& x, double gamma_max, const std::vector<double>& grid, std::size_t n_mc,
                             std::uint64_t seed, const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    if (!(gamma_max > 0.0)) throw Error(Errc::invalid_quadrature, "gamma_max must be positive");
    check_grid(grid, gamma_max);
    if (n_mc < 1) throw Error(Errc::invalid_config, "n_mc must be >= 1");
    const int length = static_cast<int>(x.size());
    if (length != data.length()) throw Error(Errc::dimension, "sequence length does not match the data");
    const Matrix embedded = emb.encode(x);

    ArNllEstimate out;
    double variance = 0.0;
    for (int focus = 0; focus < length; ++focus) {
        const ArPath contour = ar_path(length, focus, gamma_max);
        const EmpiricalDistribution conditional = data.condition(contour.observation(x));
        TokenNll token;
        double token_var = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            Vector gamma = Vector::Zero(length);
            gamma(focus) = grid[j];
            Rng rng = make_rng(seed, kArStream + static_cast<std::uint64_t>(focus), j);
            auto f = estimate_field(embedded, gamma, n_mc, rng,
                                    [&](const Matrix& z) { return denoise(z, conditional, emb); });
            double weight = 0.0;
            if (j > 0) weight += grid[j] - grid[j - 1];
            if (j + 1 < grid.size()) weight += grid[j + 1] - grid[j];
            weight *= 0.25;
            token.integral += weight * f.error(focus);
            token_var += weight * weight * f.error_se(focus) * f.error_se(focus);
            token.field.push_back(std::move(f));
        }

        Vector gamma_end = Vector::Zero(length);
        gamma_end(focus) = gamma_max;
        Moments log_post;
        Rng rng = make_rng(seed, kTruncationStream + 1 + static_cast<std::uint64_t>(focus));
        for (std::size_t s = 0; s < n_mc; ++s) {
            const Matrix z = sample_channel(embedded, gamma_end, rng);
            const auto marginals = token_marginals(z, conditional, emb);
            log_post.add(-std::log(marginals.probs(focus, x[static_cast<std::size_t>(focus)])));
        }
        token.truncation = log_post.mean();
        token_var += log_post.std_error() * log_post.std_error();
        token.estimate = token.integral + token.truncation;
        token.std_error = std::sqrt(token_var);
        out.total += token.estimate;
        variance += token_var;
        out.tokens.push_back(std::move(token));
    }
    out.total_se = std::sqrt(variance);
    return out;
}

double exact_nll(const Sequence& x, const EmpiricalDistribution& data) {
    const auto n = data.find(x);
    if (!n) return std::numeric_limits<double>::infinity();
    return -data.log_weights()(static_cast<Eigen::Index>(*n));
}

void write_error_field_csv(std::ostream& out, const std::vector<ErrorFieldSample>& field, const std::string& contour,
                           int focus) {
    std::ostringstream line;
    line.precision(12);
    for (const auto& f : field) {
        for (Eigen::Index i = 0; i < f.error.size(); ++i) {
            if (focus >= 0 && i != focus) continue;
            line.str("");
            line << contour << ',' << f.gamma(i) << ',' << i << ',' << f.error(i) << ',' << f.error_se(i);
            out << line.str() << '\n';
        }
    }
}

} // namespace dsl
