#include "../cli_support.hpp"

#include <gtest/gtest.h>

using namespace cli_support;

namespace {

// Small configurations so every subcommand finishes quickly.
const std::vector<std::pair<std::string, std::string>> kRuns{
    {"generate", "generate --chains 300 --steps 200 --trajectories 2 --record_stride 40"},
    {"nll", "nll --n_mc 100 --grid_points 16"},
    {"refine", "refine --T 64 --eta_cap 0.05 --sweep 8"},
    {"fig5", "refine --preset fig5 --sweep 8"},
    {"corrupt", "corrupt-stats --tokens 5000"},
    {"train", "train-converter --n_train 300 --iterations 50 --n_eval 100"},
    {"calibration", "calibration --n_sequences 200 --n_train 200 --iterations 30 --snr 5,100"},
};

} // namespace

TEST(Cli, SubcommandsAreByteReproducibleAcrossThreadCounts) {
    const auto dir = scratch("determinism");
    for (const auto& [name, args] : kRuns) {
        const auto a = dir / (name + "-a"), b = dir / (name + "-b");
        ASSERT_EQ(run(args + " --seed 17 --out " + a.string()), 0) << name;
        ASSERT_EQ(run(args + " --seed 17 --threads 3 --out " + b.string()), 0) << name;
        const auto fa = read_dir(a), fb = read_dir(b);
        EXPECT_EQ(fa, fb) << name;
        EXPECT_TRUE(fa.count("config.txt")) << name;
        EXPECT_TRUE(fa.count("VERSION")) << name;
    }
    const auto trace = dir / "refine-a" / "trace.jsonl";
    ASSERT_EQ(run("diagnose --seed 0 --input " + trace.string() + " --out " + (dir / "diag-a").string()), 0);
    ASSERT_EQ(run("diagnose --seed 0 --threads 2 --input " + trace.string() + " --out " + (dir / "diag-b").string()), 0);
    EXPECT_EQ(read_dir(dir / "diag-a"), read_dir(dir / "diag-b"));
    EXPECT_EQ(slurp(dir / "diag-a" / "diagnostics.csv"), slurp(dir / "refine-a" / "diagnostics.csv"));
}

TEST(Cli, SeedChangesOutput) {
    const auto dir = scratch("seed");
    ASSERT_EQ(run("corrupt-stats --tokens 2000 --seed 1 --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run("corrupt-stats --tokens 2000 --seed 2 --out " + (dir / "b").string()), 0);
    EXPECT_NE(slurp(dir / "a" / "summary.csv"), slurp(dir / "b" / "summary.csv"));
}

TEST(Cli, UsageErrorsExitWithOne) {
    const auto dir = scratch("usage");
    const std::string out = " --out " + (dir / "x").string();
    EXPECT_EQ(run("generate" + out), 1);  // missing seed
    EXPECT_EQ(run("generate --seed 1 --chains 0" + out), 1);
    EXPECT_EQ(run("nll --seed 1 --contour spiral" + out), 1);
    EXPECT_EQ(run("refine --seed 1 --preset fig9" + out), 1);
    EXPECT_EQ(run("refine --seed 1 --strategy greedy" + out), 1);
    EXPECT_EQ(run("corrupt-stats --seed 1 --k 0.5" + out), 1);
    EXPECT_EQ(run("corrupt-stats --seed 1 --no_such_key 3" + out), 1);
    EXPECT_EQ(run("frobnicate --seed 1" + out), 1);
    {
        std::ofstream cfg(dir / "bad.cfg");
        cfg << "tokens = 10\nwidth = 3\n";
    }
    EXPECT_EQ(run("corrupt-stats --seed 1 --config " + (dir / "bad.cfg").string() + out), 1);
    EXPECT_FALSE(fs::exists(dir / "x"));
    EXPECT_FALSE(fs::exists(dir / "x.partial"));
}

TEST(Cli, RuntimeErrorsExitWithTwo) {
    const auto dir = scratch("runtime");
    {
        std::ofstream bad(dir / "bad.jsonl");
        bad << "{not json\n";
    }
    EXPECT_EQ(run("diagnose --seed 0 --input " + (dir / "bad.jsonl").string() + " --out " + (dir / "o").string()), 2);
    EXPECT_EQ(run("diagnose --seed 0 --input " + (dir / "missing.jsonl").string() + " --out " + (dir / "o").string()),
              2);
    EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, ConfigFileIsAppliedAndEchoed) {
    const auto dir = scratch("config");
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "# corruption run\ntokens = 3000\nmode = atomic\n";
    }
    ASSERT_EQ(run("corrupt-stats --seed 4 --k 5 --config " + (dir / "run.cfg").string() + " --out " +
                  (dir / "o").string()),
              0);
    const auto echoed = slurp(dir / "o" / "config.txt");
    EXPECT_NE(echoed.find("seed=4\n"), std::string::npos);
    EXPECT_NE(echoed.find("mode=atomic\n"), std::string::npos);
    EXPECT_NE(echoed.find("k=5\n"), std::string::npos);
    EXPECT_EQ(slurp(dir / "o" / "config.input.txt"), slurp(dir / "run.cfg"));
    EXPECT_EQ(lookup(slurp(dir / "o" / "summary.csv"), "tokens"), "3000");
    EXPECT_EQ(lookup(slurp(dir / "o" / "summary.csv"), "distinct_endpoint_values"), "2");
}

TEST(Cli, ExistingOutputNeedsForce) {
    const auto dir = scratch("force");
    const std::string out = " --out " + (dir / "o").string();
    ASSERT_EQ(run("corrupt-stats --tokens 100 --seed 1" + out), 0);
    EXPECT_EQ(run("corrupt-stats --tokens 100 --seed 2" + out), 1);
    EXPECT_EQ(run("corrupt-stats --tokens 100 --seed 2 --force" + out), 0);
    EXPECT_NE(slurp(dir / "o" / "config.txt").find("seed=2"), std::string::npos);
}

TEST(Cli, Fig5PresetAndLongBudget) {
    const auto dir = scratch("refine");
    ASSERT_EQ(run("refine --preset fig5 --seed 0 --out " + (dir / "fig5").string()), 0);
    const auto summary = slurp(dir / "fig5" / "summary.csv");
    EXPECT_EQ(lookup(summary, "final_draft"), "ABCDEFG");
    EXPECT_EQ(lookup(summary, "success"), "true");
    ASSERT_EQ(run("refine --T 128 --seed 0 --out " + (dir / "long").string()), 0);
    EXPECT_EQ(lookup(slurp(dir / "long" / "summary.csv"), "final_t"), "0.0078125");
}

TEST(Cli, NllArBreakdownHasOneRowPerToken) {
    const auto dir = scratch("nll");
    ASSERT_EQ(run("nll --contour ar --sequences 0 --n_mc 50 --grid_points 8 --seed 0 --out " + (dir / "o").string()), 0);
    const auto rows = slurp(dir / "o" / "ar_tokens.csv");
    EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 1 + 5);
    EXPECT_FALSE(fs::exists(dir / "o" / "agreement.csv"));
}
