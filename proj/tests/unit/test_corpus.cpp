#include "dsl/corpus.hpp"
#include "dsl/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace dsl;

TEST(Embeddings, CircleRowsAreUnitAndMaskIsZero) {
    const auto emb = make_circle_embeddings(5);
    EXPECT_EQ(emb.vocab_size(), 5);
    EXPECT_EQ(emb.mask_id(), 5);
    EXPECT_EQ(emb.dim(), 2);
    for (int v = 0; v < 5; ++v) {
        EXPECT_NEAR(emb.row(v).norm(), 1.0, 1e-15);
        EXPECT_NEAR(emb.row(v)(0), std::cos(2 * M_PI * v / 5), 1e-15);
    }
    EXPECT_EQ(emb.row(5).norm(), 0.0);
}

TEST(Embeddings, RejectsDegenerateTables) {
    Matrix rows(2, 2);
    rows << 1, 0, 0, 2;
    EXPECT_THROW(EmbeddingTable{rows}, Error);
    rows << 1, 0, 1, 0;
    EXPECT_THROW(EmbeddingTable{rows}, Error);
    Matrix one(1, 2);
    one << 1, 0;
    try {
        EmbeddingTable t{one};
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_vocab);
    }
}

TEST(Embeddings, SphereTableIsSeededAndValid) {
    const auto a = make_sphere_embeddings(20, 6, 3);
    const auto b = make_sphere_embeddings(20, 6, 3);
    const auto c = make_sphere_embeddings(20, 6, 4);
    EXPECT_EQ(a.with_mask(), b.with_mask());
    EXPECT_NE(a.with_mask(), c.with_mask());
    for (int v = 0; v < 20; ++v) EXPECT_NEAR(a.row(v).norm(), 1.0, 1e-12);
}

TEST(Embeddings, EncodeMapsMaskToZero) {
    const auto emb = make_circle_embeddings(4);
    const Matrix x = emb.encode({0, 4, 2});
    EXPECT_EQ(x.rows(), 3);
    EXPECT_EQ(x.row(1).norm(), 0.0);
    EXPECT_EQ(x.row(2), emb.row(2));
    EXPECT_THROW(emb.encode({5}), Error);
}

TEST(Dataset, CyclicShiftsAreUniform) {
    const auto data = cyclic_dataset(5);
    ASSERT_EQ(data.size(), 5u);
    EXPECT_EQ(data.length(), 5);
    for (std::size_t s = 0; s < 5; ++s) {
        EXPECT_NEAR(data.weights()(static_cast<Eigen::Index>(s)), 0.2, 1e-15);
        for (int i = 0; i < 5; ++i) EXPECT_EQ(data.token(s, i), (i - static_cast<int>(s) + 5) % 5);
    }
    EXPECT_EQ(data.sequence(0), (Sequence{0, 1, 2, 3, 4}));
}

TEST(Dataset, DuplicatesMergeAndWeightsNormalize) {
    const EmpiricalDistribution data({{0, 1}, {1, 0}, {0, 1}}, {1.0, 2.0, 1.0}, 2);
    ASSERT_EQ(data.size(), 2u);
    EXPECT_NEAR(data.weights()(0), 0.5, 1e-15);
    EXPECT_NEAR(data.weights()(1), 0.5, 1e-15);
    EXPECT_TRUE(data.find({1, 0}).has_value());
    EXPECT_FALSE(data.find({1, 1}).has_value());
}

TEST(Dataset, RejectsBadInput) {
    EXPECT_THROW(EmpiricalDistribution({{0, 1}, {0}}, 2), Error);
    EXPECT_THROW(EmpiricalDistribution({{0, 2}}, 2), Error);
    EXPECT_THROW(EmpiricalDistribution({{0, 1}}, {-1.0}, 2), Error);
    EXPECT_THROW(EmpiricalDistribution({}, 2), Error);
}

TEST(Dataset, ConditionRestrictsSupport) {
    const auto data = cyclic_dataset(5);
    const auto cond = data.condition({std::nullopt, 3, std::nullopt, std::nullopt, std::nullopt});
    ASSERT_EQ(cond.size(), 1u);
    EXPECT_EQ(cond.sequence(0)[1], 3);
    EXPECT_THROW(data.condition({0, 0, std::nullopt, std::nullopt, std::nullopt}), Error);
}

TEST(Dataset, ReadsPlainAndWeightedCorpora) {
    std::istringstream plain("0 1 2\n2 1 0\n\n0 1 2\n");
    const auto a = read_corpus(plain, false);
    EXPECT_EQ(a.size(), 2u);
    EXPECT_EQ(a.vocab_size(), 3);
    EXPECT_NEAR(a.weights()(0), 2.0 / 3.0, 1e-15);

    std::istringstream weighted("3 0 1\n1 1 0\n");
    const auto b = read_corpus(weighted, true, 4);
    EXPECT_EQ(b.vocab_size(), 4);
    EXPECT_NEAR(b.weights()(0), 0.75, 1e-15);
}

TEST(Dataset, EmbeddingCsvHasMaskRow) {
    std::ostringstream out;
    write_embedding_csv(out, make_circle_embeddings(3));
    const std::string s = out.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "token,e0,e1");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
}
