#include "dsl/corruption.hpp"
#include "dsl/random.hpp"
#include "dsl/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace dsl;

TEST(Corruption, ConfigValidationNamesKey) {
    CorruptionConfig c;
    c.k = 0.5;
    try {
        c.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("k:"), std::string::npos);
    }
    c = {};
    c.c = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.gamma_min = 60;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_NO_THROW(CorruptionConfig{}.validate());
}

TEST(Corruption, ParsesModes) {
    EXPECT_EQ(parse_roar_mode("atomic"), RoarMode::atomic);
    EXPECT_EQ(parse_roar_mode("smoothed"), RoarMode::smoothed);
    EXPECT_THROW(parse_roar_mode("fuzzy"), Error);
}

TEST(Corruption, RoarSetIsSortedAndSeeded) {
    const auto a = sample_roar_set(1000, 10, 3);
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_EQ(a, sample_roar_set(1000, 10, 3));
    EXPECT_NEAR(a.size() / 1000.0, 0.1, 0.05);
    EXPECT_EQ(sample_roar_set(50, 1, 3).size(), 50u);
}

TEST(Corruption, SmoothedEndpointsStayInRanges) {
    CorruptionConfig c;
    Rng rng(1);
    const auto s = sample_gammas(20000, c, rng);
    int low = 0, high = 0;
    std::vector<double> ln;
    for (int i = 0; i < 20000; ++i) {
        const double g = s.gamma(i);
        if (!s.roar[i]) {
            EXPECT_GT(g, 0.0);
            ln.push_back(g);
            continue;
        }
        if (s.high[i]) {
            ++high;
            EXPECT_GE(g, 45.0);
            EXPECT_LE(g, 50.0);
        } else {
            ++low;
            EXPECT_GE(g, 0.0);
            EXPECT_LE(g, 0.5);
        }
    }
    EXPECT_GT(low, 0);
    EXPECT_GT(high, 0);
    EXPECT_NEAR(median(ln), std::exp(1.65), 0.05 * std::exp(1.65));
}

TEST(Corruption, AtomicEndpointsAreExact) {
    CorruptionConfig c;
    c.mode = RoarMode::atomic;
    Rng rng(2);
    const auto s = sample_gammas(5000, c, rng);
    std::set<double> ends;
    for (int i = 0; i < 5000; ++i)
        if (s.roar[i]) ends.insert(s.gamma(i));
    EXPECT_EQ(ends, (std::set<double>{0.0, 50.0}));
}

TEST(Corruption, ClipBoundsLognormal) {
    CorruptionConfig c;
    c.clip_lognormal = true;
    c.sigma = 3.0;
    Rng rng(3);
    const auto s = sample_gammas(5000, c, rng);
    for (int i = 0; i < 5000; ++i)
        if (!s.roar[i]) {
            EXPECT_GE(s.gamma(i), c.gamma_min);
            EXPECT_LE(s.gamma(i), c.gamma_max);
        }
}

TEST(Corruption, CorruptHasChannelStatistics) {
    const auto emb = make_circle_embeddings(4);
    const Sequence x{0, 1, 4, 3};  // position 2 is the mask
    Vector g(4);
    g << 0.0, 9.0, 9.0, 1.0;
    Rng rng(5);
    Matrix sum = Matrix::Zero(4, 2);
    const int n = 5000;
    for (int r = 0; r < n; ++r) {
        const Matrix z = corrupt(x, g, emb, rng);
        EXPECT_EQ(z.row(0).norm(), 0.0);
        sum += z;
    }
    sum /= n;
    EXPECT_NEAR(sum(1, 1), 9.0 * emb.row(1)(1), 5 * 3.0 / std::sqrt(n));
    EXPECT_NEAR(sum.row(2).norm(), 0.0, 7 * 3.0 / std::sqrt(n));
    Vector neg = g;
    neg(1) = -1.0;
    EXPECT_THROW(corrupt(x, neg, emb, rng), Error);
}
