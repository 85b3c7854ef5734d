#include "dsl/denoiser.hpp"
#include "dsl/random.hpp"

#include "../oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace dsl;

namespace {

struct Toy {
    EmpiricalDistribution data;
    EmbeddingTable emb;
};

Toy cyclic(int K) { return {cyclic_dataset(K), make_circle_embeddings(K)}; }

Matrix random_state(const Toy& t, double scale, Rng& rng) {
    return scale * standard_normal(t.data.length(), t.emb.dim(), rng);
}

} // namespace

TEST(Denoiser, ZeroStateGivesPriorMean) {
    const auto t = cyclic(5);
    const auto post = token_marginals(Matrix::Zero(5, 2), t.data, t.emb);
    EXPECT_NEAR((post.probs.array() - 0.2).abs().maxCoeff(), 0.0, 1e-15);
    EXPECT_NEAR(denoise(Matrix::Zero(5, 2), t.data, t.emb).norm(), 0.0, 1e-14);
}

TEST(Denoiser, MatchesTiltOracle) {
    const auto t = cyclic(7);
    Rng rng(11);
    for (int r = 0; r < 20; ++r) {
        const Matrix z = random_state(t, 3.0, rng);
        const auto w = oracle::tilt_weights(z, t.data, t.emb);
        EXPECT_LT((denoise(z, t.data, t.emb) - oracle::mean(w, t.data, t.emb)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((token_marginals(z, t.data, t.emb).probs - oracle::marginals(w, t.data)).cwiseAbs().maxCoeff(),
                  1e-12);
    }
}

TEST(Denoiser, SnrInvariantAgainstChannelOracle) {
    const auto t = cyclic(5);
    Rng rng(5);
    for (int r = 0; r < 30; ++r) {
        const Sequence& x = t.data.sequence(static_cast<std::size_t>(r % 5));
        Vector gamma(5);
        std::vector<double> g(5);
        for (int i = 0; i < 5; ++i) g[i] = gamma(i) = std::exp(4.0 * uniform01(rng) - 2.0);
        Matrix z = t.emb.encode(x);
        const Matrix eps = standard_normal(5, 2, rng);
        for (int i = 0; i < 5; ++i) z.row(i) = gamma(i) * z.row(i) + std::sqrt(gamma(i)) * eps.row(i);
        const Matrix a = denoise(z, t.data, t.emb);
        EXPECT_LT((a - denoise_gaussian_oracle(z, gamma, t.data, t.emb)).cwiseAbs().maxCoeff(), 1e-11);
        EXPECT_LT((a - oracle::mean(oracle::channel_weights(z, g, t.data, t.emb), t.data, t.emb)).cwiseAbs().maxCoeff(),
                  1e-11);
    }
}

TEST(Denoiser, OracleRejectsNonPositiveSnr) {
    const auto t = cyclic(5);
    Vector gamma = Vector::Ones(5);
    gamma(2) = 0.0;
    try {
        denoise_gaussian_oracle(Matrix::Zero(5, 2), gamma, t.data, t.emb);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_snr);
    }
}

TEST(Denoiser, DimensionMismatchThrows) {
    const auto t = cyclic(5);
    EXPECT_THROW(denoise(Matrix::Zero(4, 2), t.data, t.emb), Error);
    EXPECT_THROW(denoise(Matrix::Zero(5, 3), t.data, t.emb), Error);
}

TEST(Denoiser, LargeAlignedStateIsOneHot) {
    const auto t = cyclic(5);
    const Matrix z = 50.0 * t.emb.encode(t.data.sequence(2));
    const auto post = token_marginals(z, t.data, t.emb);
    for (int i = 0; i < 5; ++i) EXPECT_GE(post.probs(i, t.data.sequence(2)[i]), 1.0 - 1e-10);
}

TEST(Denoiser, NormalizedAndFiniteForLargeStates) {
    const auto t = cyclic(7);
    Rng rng(3);
    for (int r = 0; r < 50; ++r) {
        const Matrix z = random_state(t, 100.0 * uniform01(rng), rng).cwiseMax(-100.0).cwiseMin(100.0);
        const auto post = token_marginals(z, t.data, t.emb);
        ASSERT_TRUE(post.probs.allFinite());
        for (int i = 0; i < 7; ++i) EXPECT_NEAR(post.probs.row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(post.probs.minCoeff(), 0.0);
        const auto seq = tilted_posterior(z, t.data, t.emb);
        EXPECT_NEAR(seq.probabilities().sum(), 1.0, 1e-12);
    }
}

TEST(Denoiser, SinglePrecisionAgreesWithDouble) {
    const auto t = cyclic(5);
    const auto embf = t.emb.cast<float>();
    Rng rng(8);
    const Matrix z = random_state(t, 2.0, rng);
    const MatrixX<float> zf = z.cast<float>();
    const MatrixX<float> af = denoise(zf, t.data, embf);
    EXPECT_LT((af.cast<double>() - denoise(z, t.data, t.emb)).cwiseAbs().maxCoeff(), 1e-5);
}

// The Jacobian of the denoiser is the posterior covariance of the stacked
// embeddings. A single unit-norm token bounds its spectral norm by 1; a
// sequence of L unit tokens has squared norm L, which is the general bound.
TEST(Denoiser, SingleTokenDriftIsOneLipschitz) {
    const EmpiricalDistribution one({{0}, {1}, {2}, {3}, {4}, {5}, {6}}, 7);
    const auto emb = make_circle_embeddings(7);
    Rng rng(21);
    for (int r = 0; r < 300; ++r) {
        const Matrix z1 = std::exp(3.0 * uniform01(rng)) * standard_normal(1, 2, rng);
        const Matrix z2 = z1 + std::exp(-3.0 + 4.0 * uniform01(rng)) * standard_normal(1, 2, rng);
        EXPECT_LE((denoise(z1, one, emb) - denoise(z2, one, emb)).norm(), (z1 - z2).norm() + 1e-9);
    }
}

TEST(Denoiser, SequenceDriftIsLengthLipschitz) {
    const auto t = cyclic(7);
    Rng rng(22);
    for (int r = 0; r < 300; ++r) {
        const Matrix z1 = random_state(t, std::exp(3.0 * uniform01(rng)), rng);
        const Matrix z2 = z1 + std::exp(-3.0 + 4.0 * uniform01(rng)) * standard_normal(7, 2, rng);
        EXPECT_LE((denoise(z1, t.data, t.emb) - denoise(z2, t.data, t.emb)).norm(), 7.0 * (z1 - z2).norm() + 1e-9);
    }
}

TEST(Denoiser, CyclicCovarianceAtOriginExceedsOne) {
    // Cov(X) at z = 0 on the K = 5 cyclic toy has top eigenvalue K / 2.
    const auto t = cyclic(5);
    Matrix cov = Matrix::Zero(10, 10);
    for (std::size_t n = 0; n < 5; ++n) {
        Matrix x = t.emb.encode(t.data.sequence(n));
        const Eigen::Map<const Vector> flat(x.data(), 10);
        cov += 0.2 * flat * flat.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    EXPECT_NEAR(eig.eigenvalues().maxCoeff(), 2.5, 1e-12);
    // and the finite-difference slope along its top eigenvector matches
    const Vector u = eig.eigenvectors().col(9);
    Matrix dz(5, 2);
    for (int i = 0; i < 5; ++i) dz.row(i) << u(2 * i), u(2 * i + 1);
    const double h = 1e-5;
    const Matrix d = denoise(Matrix(h * dz), t.data, t.emb) - denoise(Matrix(-h * dz), t.data, t.emb);
    EXPECT_NEAR(d.norm() / (2 * h), 2.5, 1e-6);
}

TEST(Denoiser, EnergyMatchesOracleAndGradientIsDenoiser) {
    const auto t = cyclic(5);
    Rng rng(4);
    for (int r = 0; r < 10; ++r) {
        Matrix z = random_state(t, 2.0, rng);
        EXPECT_NEAR(hopfield_energy(z, t.data, t.emb), static_cast<double>(oracle::energy(z, t.data, t.emb)), 1e-12);
        const Matrix g = denoise(z, t.data, t.emb);
        const double h = 1e-5;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 2; ++j) {
                const double saved = z(i, j);
                z(i, j) = saved + h;
                const double up = hopfield_energy(z, t.data, t.emb);
                z(i, j) = saved - h;
                const double dn = hopfield_energy(z, t.data, t.emb);
                z(i, j) = saved;
                EXPECT_NEAR((up - dn) / (2 * h), g(i, j), 1e-7);
            }
    }
}

TEST(Denoiser, ConditionalDenoiseFixesObservedTokens) {
    const auto t = cyclic(5);
    const Observation obs{std::nullopt, 2, std::nullopt, std::nullopt, std::nullopt};
    const Matrix m = conditional_denoise(Matrix::Zero(5, 2), obs, t.data, t.emb);
    const Sequence expected = t.data.condition(obs).sequence(0);
    EXPECT_LT((m - t.emb.encode(expected)).norm(), 1e-14);
}

TEST(Denoiser, ExactPosteriorModelAgrees) {
    const auto t = cyclic(5);
    const ExactPosterior model(t.data, t.emb);
    Rng rng(2);
    const Matrix z = random_state(t, 1.5, rng);
    EXPECT_LT((model.denoise(z) - denoise(z, t.data, t.emb)).norm(), 1e-14);
    const auto w = oracle::tilt_weights(z, t.data, t.emb);
    for (std::size_t n = 0; n < 5; ++n) EXPECT_NEAR(model.log_prob(z, t.data.sequence(n)), std::log((double)w[n]), 1e-12);
    EXPECT_EQ(model.log_prob(z, {0, 0, 0, 0, 0}), -INFINITY);
    const Matrix p = oracle::marginals(w, t.data);
    EXPECT_NEAR(model.log_token_prob(z, 3, 1), std::log(p(3, 1)), 1e-12);
}
