#pragma once

// Reference computations written independently of the library: plain loops,
// long double accumulation, no shared helpers. Tests compare against these.

#include "dsl/corpus.hpp"
#include "dsl/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using dsl::EmbeddingTable;
using dsl::EmpiricalDistribution;
using dsl::Matrix;
using dsl::Sequence;

/// Posterior weights of each dataset sequence from the Gaussian channel
/// density N(z_i; gamma_i x_i, gamma_i I), normalized.
inline std::vector<long double> channel_weights(const Matrix& z, const std::vector<double>& gamma,
                                                const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    std::vector<long double> logw(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        long double acc = std::log(static_cast<long double>(data.weights()(static_cast<Eigen::Index>(n))));
        for (int i = 0; i < data.length(); ++i) {
            const auto v = data.sequence(n)[static_cast<std::size_t>(i)];
            for (int j = 0; j < emb.dim(); ++j) {
                const long double diff = z(i, j) - gamma[static_cast<std::size_t>(i)] * emb.with_mask()(v, j);
                acc -= diff * diff / (2.0L * gamma[static_cast<std::size_t>(i)]);
            }
        }
        logw[n] = acc;
    }
    const long double top = *std::max_element(logw.begin(), logw.end());
    long double total = 0.0L;
    for (auto& w : logw) total += (w = std::exp(w - top));
    for (auto& w : logw) w /= total;
    return logw;
}

/// Posterior weights from the exponential tilt P(x) exp(sum_i z_i . x_i).
inline std::vector<long double> tilt_weights(const Matrix& z, const EmpiricalDistribution& data,
                                             const EmbeddingTable& emb) {
    std::vector<long double> logw(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        long double acc = std::log(static_cast<long double>(data.weights()(static_cast<Eigen::Index>(n))));
        for (int i = 0; i < data.length(); ++i)
            for (int j = 0; j < emb.dim(); ++j)
                acc += z(i, j) * emb.with_mask()(data.sequence(n)[static_cast<std::size_t>(i)], j);
        logw[n] = acc;
    }
    const long double top = *std::max_element(logw.begin(), logw.end());
    long double total = 0.0L;
    for (auto& w : logw) total += (w = std::exp(w - top));
    for (auto& w : logw) w /= total;
    return logw;
}

inline Matrix marginals(const std::vector<long double>& w, const EmpiricalDistribution& data) {
    Matrix p = Matrix::Zero(data.length(), data.vocab_size());
    for (std::size_t n = 0; n < data.size(); ++n)
        for (int i = 0; i < data.length(); ++i) p(i, data.sequence(n)[static_cast<std::size_t>(i)]) += static_cast<double>(w[n]);
    return p;
}

inline Matrix mean(const std::vector<long double>& w, const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    Matrix m = Matrix::Zero(data.length(), emb.dim());
    for (std::size_t n = 0; n < data.size(); ++n)
        for (int i = 0; i < data.length(); ++i)
            for (int j = 0; j < emb.dim(); ++j)
                m(i, j) += static_cast<double>(w[n]) * emb.with_mask()(data.sequence(n)[static_cast<std::size_t>(i)], j);
    return m;
}

/// log sum_x P(x) exp(z . x) by direct summation.
inline long double energy(const Matrix& z, const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    long double total = 0.0L;
    for (std::size_t n = 0; n < data.size(); ++n) {
        long double dot = 0.0L;
        for (int i = 0; i < data.length(); ++i)
            for (int j = 0; j < emb.dim(); ++j) dot += z(i, j) * emb.with_mask()(data.sequence(n)[static_cast<std::size_t>(i)], j);
        total += data.weights()(static_cast<Eigen::Index>(n)) * std::exp(dot);
    }
    return std::log(total);
}

/// -log P(x_i | x_<i) by prefix counting.
inline double conditional_nll(const Sequence& x, std::size_t i, const EmpiricalDistribution& data) {
    auto prefix_mass = [&](std::size_t len) {
        double m = 0.0;
        for (std::size_t n = 0; n < data.size(); ++n)
            if (std::equal(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(len), data.sequence(n).begin()))
                m += data.weights()(static_cast<Eigen::Index>(n));
        return m;
    };
    return -std::log(prefix_mass(i + 1) / prefix_mass(i));
}

/// Smallest number of top entries reaching `mass`, boundary ties included.
inline int nucleus(std::vector<double> p, double mass) {
    std::sort(p.rbegin(), p.rend());
    double acc = 0.0;
    int n = 0;
    for (double v : p) {
        acc += v;
        ++n;
        if (acc >= mass) break;
    }
    const double edge = p[static_cast<std::size_t>(n - 1)];
    int tied = 0;
    for (std::size_t j = static_cast<std::size_t>(n); j < p.size(); ++j)
        if (p[j] == edge) ++tied;
    return n + tied;
}

/// ECE with equal-width bins, computed per bin by filtering.
inline double ece(const std::vector<std::pair<double, bool>>& scored, int bins) {
    double total = 0.0;
    for (int b = 0; b < bins; ++b) {
        double conf = 0.0, acc = 0.0, count = 0.0;
        for (const auto& [c, ok] : scored) {
            int idx = static_cast<int>(std::floor(c * bins));
            if (idx == bins) idx = bins - 1;
            if (idx != b) continue;
            conf += c;
            acc += ok;
            count += 1.0;
        }
        if (count > 0) total += count / static_cast<double>(scored.size()) * std::abs(conf / count - acc / count);
    }
    return total;
}

/// sup_x |F_a(x) - F_b(x)| evaluated at every sample point.
inline double ks(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    auto cdf = [](const std::vector<double>& s, double x) {
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) /
               static_cast<double>(s.size());
    };
    for (const auto* s : {&a, &b})
        for (double x : *s) d = std::max(d, std::abs(cdf(a, x) - cdf(b, x)));
    return d;
}

inline std::vector<int> recount(const std::vector<Sequence>& drafts) {
    std::vector<int> r(drafts.front().size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t k = 1; k < drafts.size(); ++k) r[i] += drafts[k][i] != drafts[k - 1][i];
    return r;
}

/// Single-token Bayes posterior under a uniform prior.
inline std::vector<double> single_token(const dsl::RowVector& z, const EmbeddingTable& emb) {
    std::vector<long double> w(static_cast<std::size_t>(emb.vocab_size()));
    long double top = -INFINITY;
    for (int v = 0; v < emb.vocab_size(); ++v) {
        long double dot = 0.0L;
        for (int j = 0; j < emb.dim(); ++j) dot += z(j) * emb.with_mask()(v, j);
        w[static_cast<std::size_t>(v)] = dot;
        top = std::max(top, dot);
    }
    long double total = 0.0L;
    for (auto& x : w) total += (x = std::exp(x - top));
    std::vector<double> out;
    for (auto x : w) out.push_back(static_cast<double>(x / total));
    return out;
}

} // namespace oracle
