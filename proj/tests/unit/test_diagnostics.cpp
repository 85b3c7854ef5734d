#include "dsl/diagnostics.hpp"

#include "../oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace dsl;

TEST(StepDiagnostics, UniformPosterior) {
    const TokenPosterior p{Matrix::Constant(4, 10, 0.1)};
    const Sequence s(4, 0);
    const auto d = step_diagnostics(p, s, s, {}, 0.9);
    EXPECT_NEAR(d.u, 0.9, 1e-15);
    EXPECT_NEAR(d.H, std::log(10.0), 1e-12);
    EXPECT_EQ(d.delta, 0.0);
    EXPECT_EQ(d.r, 0.0);
    EXPECT_EQ(d.k, 10.0);  // every tied entry joins the nucleus
}

TEST(StepDiagnostics, NucleusCumulativeRule) {
    RowVector p(3);
    p << 0.5, 0.3, 0.2;
    EXPECT_EQ(nucleus_size(p, 0.9), 3);
    EXPECT_EQ(nucleus_size(p, 0.8), 2);
    RowVector tie(4);
    tie << 0.4, 0.2, 0.2, 0.2;
    EXPECT_EQ(nucleus_size(tie, 0.5), 4);
    EXPECT_EQ(nucleus_size(tie, 0.4), 1);
}

TEST(StepDiagnostics, NucleusMatchesOracle) {
    Rng rng(3);
    for (int r = 0; r < 200; ++r) {
        RowVector p(6);
        for (int v = 0; v < 6; ++v) p(v) = std::floor(10 * uniform01(rng)) + 1;  // ties likely
        p /= p.sum();
        const double mass = 0.3 + 0.69 * uniform01(rng);
        EXPECT_EQ(nucleus_size(p, mass), oracle::nucleus(std::vector<double>(p.data(), p.data() + 6), mass));
    }
}

TEST(StepDiagnostics, ChangeAndRemaskRates) {
    const TokenPosterior p{Matrix::Constant(4, 2, 0.5)};
    const auto d = step_diagnostics(p, {0, 1, 2, 2}, {0, 0, 2, 1}, {3}, 0.9);
    EXPECT_EQ(d.delta, 0.5);
    EXPECT_EQ(d.r, 0.25);
}

TEST(RewriteCounts, Transitions) {
    EXPECT_EQ(rewrite_counts(std::vector<Sequence>{{0, 1}, {0, 1}, {0, 1}}).mean, 0.0);
    const auto rc = rewrite_counts(std::vector<Sequence>{{0, 1}, {9, 1}, {0, 1}});
    EXPECT_EQ(rc.counts, (std::vector<int>{2, 0}));
    EXPECT_EQ(rc.mean, 1.0);
    try {
        rewrite_counts(std::vector<Sequence>{{0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::trace_too_short);
    }
}

TEST(RewriteCounts, TraceMatchesRecount) {
    const auto data = cyclic_dataset(7);
    const auto emb = make_circle_embeddings(7);
    RefinementConfig c;
    c.budget = 64;
    c.schedule.eta_cap = 0.05;
    c.gamma_vis = 2.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto tr = run_refinement(Sequence(7, 7), c, s, data, emb);
        EXPECT_EQ(rewrite_counts(tr).counts, oracle::recount(tr.drafts()));
    }
}

TEST(OverRefinement, FlagsHighRemaskWithoutChange) {
    std::vector<StepDiagnostics> steps(10);
    steps[9].r = 0.1;
    steps[9].delta = 0.0;
    steps[4].r = 0.1;
    steps[4].delta = 0.2;
    EXPECT_EQ(over_refinement_flags(steps), (std::vector<int>{9}));
    EXPECT_TRUE(over_refinement_flags(std::vector<StepDiagnostics>(5)).empty());
    EXPECT_THROW(over_refinement_flags(steps, 0.0, 0.01), Error);
    EXPECT_THROW(over_refinement_flags(steps, 0.1, 1.0), Error);
}

TEST(OverRefinement, SharpeningOnRevealRuns) {
    const auto data = cyclic_dataset(7);
    const auto emb = make_circle_embeddings(7);
    RefinementConfig c;
    c.budget = 7;
    c.schedule.strategy = RemaskStrategy::none;
    const auto d = trace_diagnostics(run_refinement(Sequence(7, 7), c, 0, data, emb));
    EXPECT_GE(d.front().k, 3.5);
    EXPECT_LE(d.back().k, 2.0);
    EXPECT_LE(d.back().u, d.front().u);
}

TEST(Calibration, TrivialCases) {
    std::vector<ScoredToken> perfect;
    for (int i = 0; i < 10; ++i) perfect.push_back({0.7, i < 7});
    for (int i = 0; i < 4; ++i) perfect.push_back({0.25, i < 1});
    EXPECT_NEAR(calibration_report(perfect).ece, 0.0, 1e-15);
    const auto wrong = calibration_report({{1.0, false}, {1.0, false}}, 15);
    EXPECT_EQ(wrong.ece, 1.0);
    EXPECT_EQ(wrong.bins.back().count, 2u);
    try {
        calibration_report({});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_report);
    }
    EXPECT_THROW(calibration_report({{0.5, true}}, 1), Error);
}

TEST(Calibration, MatchesOracleAndCountsSum) {
    Rng rng(7);
    std::vector<ScoredToken> s;
    std::vector<std::pair<double, bool>> o;
    for (int i = 0; i < 3000; ++i) {
        const double c = uniform01(rng);
        const bool ok = uniform01(rng) < c * c;
        s.push_back({c, ok});
        o.emplace_back(c, ok);
    }
    const auto rep = calibration_report(s, 15);
    EXPECT_NEAR(rep.ece, oracle::ece(o, 15), 1e-12);
    std::size_t total = 0;
    for (const auto& b : rep.bins) total += b.count;
    EXPECT_EQ(total, 3000u);
}

TEST(Calibration, TeacherForcingIsThreadInvariantAndTemperingHurts) {
    const auto data = cyclic_dataset(5);
    const auto emb = make_circle_embeddings(5);
    TeacherForcingOptions opts;
    opts.gamma = 1.0;
    opts.n_sequences = 2000;
    const auto a = teacher_forcing_scores(data, emb, exact_provider(data, emb), opts, 3);
    opts.threads = 3;
    const auto b = teacher_forcing_scores(data, emb, exact_provider(data, emb), opts, 3);
    ASSERT_EQ(a.size(), 10000u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].confidence, b[i].confidence);
        EXPECT_EQ(a[i].correct, b[i].correct);
    }
    const auto t = teacher_forcing_scores(data, emb, tempered(exact_provider(data, emb), 2.0), opts, 3);
    EXPECT_GT(calibration_report(t).ece, calibration_report(a).ece);
}

TEST(Diagnostics, CsvHeaders) {
    std::ostringstream d, r;
    write_diagnostics_csv(d, {StepDiagnostics{}});
    EXPECT_EQ(d.str().substr(0, d.str().find('\n')), "t,u,H,k,r,delta");
    write_reliability_csv(r, calibration_report({{0.5, true}}, 15));
    const std::string table = r.str();
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 16);
}

TEST(OverRefinement, LargerRemaskCapFlagsMoreSteps) {
    const auto data = cyclic_dataset(7);
    const auto emb = make_circle_embeddings(7);
    RefinementConfig c;
    c.budget = 128;
    auto flagged = [&](double eta) {
        c.schedule.eta_cap = eta;
        std::size_t n = 0;
        for (std::uint64_t seed = 0; seed < 200; ++seed)
            n += over_refinement_flags(run_refinement(Sequence(7, 7), c, seed, data, emb)).size();
        return n;
    };
    const auto low = flagged(0.002), high = flagged(0.010);
    EXPECT_GT(low, 0u);
    EXPECT_GT(high, low);
}
