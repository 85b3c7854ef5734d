#include "commands.hpp"

#include "dsl/converter.hpp"
#include "dsl/corpus.hpp"
#include "dsl/corruption.hpp"
#include "dsl/diagnostics.hpp"
#include "dsl/dynamics.hpp"
#include "dsl/likelihood.hpp"
#include "dsl/parallel.hpp"
#include "dsl/random.hpp"
#include "dsl/refine.hpp"
#include "dsl/stats.hpp"
#include "dsl/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dsl::cli {

namespace {

constexpr std::uint64_t kNllStream = 0x11;
constexpr std::uint64_t kSweepStream = 0x5eed;
constexpr std::uint64_t kCorruptStream = 0xc0e;
constexpr std::uint64_t kTrainStream = 0x7a;
constexpr std::uint64_t kEvalStream = 0xe1;
constexpr std::uint64_t kCalibStream = 0xca1;

std::string num(double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

std::string seq_text(const Sequence& seq, int vocab_size) { return format_draft(seq, vocab_size); }

// ---- shared key groups ----------------------------------------------------

std::vector<Key> dataset_keys(const std::string& vocab) {
    return {
        {"dataset", "cyclic", "cyclic | corpus"},
        {"vocab", vocab, "vocabulary size K of the cyclic dataset (L = K)"},
        {"corpus", "", "corpus file: one whitespace-separated sequence per line"},
        {"weighted", "false", "corpus lines start with a weight"},
        {"embedding", "circle", "circle (d = 2) | sphere"},
        {"dim", "8", "embedding dimension for sphere embeddings"},
        {"embedding_seed", "1", "seed of the sphere embedding table"},
    };
}

std::vector<Key> corruption_keys(const std::string& mode) {
    return {
        {"k", "10", "ROAR rate is 1/k"},
        {"mu", "1.65", "lognormal location of log SNR"},
        {"sigma", "0.9", "lognormal scale of log SNR"},
        {"gamma_min", "0.5", "smoothed low endpoint range [0, gamma_min]"},
        {"gamma_max", "50", "clean-token SNR"},
        {"c", "0.9", "smoothed high endpoint range [c gamma_max, gamma_max]"},
        {"mode", mode, "smoothed | atomic endpoints"},
        {"clip", "false", "clip lognormal draws to [gamma_min, gamma_max]"},
    };
}

std::vector<Key> concat(std::vector<Key> a, const std::vector<Key>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

struct Workspace {
    EmpiricalDistribution data;
    EmbeddingTable emb;
};

Workspace workspace(const Params& p) {
    Workspace w;
    const auto& kind = p.str("dataset");
    if (kind == "cyclic") {
        const auto K = p.integer("vocab");
        if (K < 2) throw UsageError("vocab: must be >= 2");
        w.data = cyclic_dataset(static_cast<int>(K));
    } else if (kind == "corpus") {
        if (p.str("corpus").empty()) throw UsageError("corpus: required when dataset = corpus");
        w.data = load_corpus(p.str("corpus"), p.flag("weighted"));
    } else {
        throw UsageError("dataset: unknown value '" + kind + "' (cyclic | corpus)");
    }
    const auto& e = p.str("embedding");
    if (e == "circle") {
        w.emb = make_circle_embeddings(w.data.vocab_size());
    } else if (e == "sphere") {
        const auto d = p.integer("dim");
        if (d < 2) throw UsageError("dim: must be >= 2");
        w.emb = make_sphere_embeddings(w.data.vocab_size(), static_cast<int>(d), p.count("embedding_seed"));
    } else {
        throw UsageError("embedding: unknown value '" + e + "' (circle | sphere)");
    }
    return w;
}

CorruptionConfig corruption_config(const Params& p) {
    CorruptionConfig c;
    c.k = p.real("k");
    c.mu = p.real("mu");
    c.sigma = p.real("sigma");
    c.gamma_min = p.real("gamma_min");
    c.gamma_max = p.real("gamma_max");
    c.c = p.real("c");
    c.mode = parse_roar_mode(p.str("mode"));
    c.clip_lognormal = p.flag("clip");
    c.validate();
    return c;
}

// ---- generate -------------------------------------------------------------

std::vector<Key> generate_schema() {
    return concat(dataset_keys("5"), {
        {"chains", "20000", "number of unconditional chains"},
        {"gamma_end", "50", "terminal SNR of the diagonal path"},
        {"steps", "1000", "Euler-Maruyama steps"},
        {"trajectories", "0", "dump the first n chains' trajectories"},
        {"record_stride", "50", "trajectory recording stride"},
    });
}

void run_generate(const Params& p, const Context& ctx) {
    const auto w = workspace(p);
    const auto chains = p.count("chains");
    if (chains == 0) throw UsageError("chains: must be >= 1");
    const auto steps = p.integer("steps");
    if (steps < 1) throw UsageError("steps: must be >= 1");
    const SnrPath path = diagonal_path(w.data.length(), p.real("gamma_end"), static_cast<int>(steps));
    const SampleCounts sc = sample_batch(chains, path, w.data, w.emb, ctx.seed, ctx.threads);
    const int K = w.data.vocab_size();

    ctx.out->write("samples.csv", [&](std::ostream& o) {
        o << "sequence,count,empirical,exact\n";
        for (std::size_t n = 0; n < w.data.size(); ++n) {
            const auto it = sc.counts.find(w.data.sequence(n));
            const std::size_t c = it == sc.counts.end() ? 0 : it->second;
            o << seq_text(w.data.sequence(n), K) << ',' << c << ',' << num(double(c) / double(chains)) << ','
              << num(w.data.weights()(static_cast<Eigen::Index>(n))) << '\n';
        }
        for (const auto& [seq, c] : sc.counts)
            if (!w.data.find(seq))
                o << seq_text(seq, K) << ',' << c << ',' << num(double(c) / double(chains)) << ",0\n";
    });
    ctx.out->write("summary.csv", [&](std::ostream& o) {
        o << "chains,valid_fraction,tv\n"
          << chains << ',' << num(valid_fraction(sc, w.data)) << ',' << num(total_variation(sc, w.data)) << '\n';
    });
    const auto n_traj = std::min(p.count("trajectories"), chains);
    if (n_traj > 0) {
        SimulationOptions opts;
        opts.record_stride = p.count("record_stride");
        std::vector<std::pair<std::size_t, Trajectory>> traj(n_traj);
        parallel_for(n_traj, ctx.threads, [&](std::size_t c) {
            traj[c] = {c, simulate_unconditional(path, w.data, w.emb, chain_seed(ctx.seed, c), opts)};
        });
        ctx.out->write("trajectories.csv", [&](std::ostream& o) { write_trajectory_csv(o, traj); });
    }
}

// ---- nll ----------------------------------------------------------------------

std::vector<Key> nll_schema() {
    return concat(dataset_keys("5"), {
        {"contour", "both", "diagonal | ar | both"},
        {"gamma_max", "50", "end of the SNR contour"},
        {"grid", "geometric", "geometric | uniform quadrature grid"},
        {"grid_points", "64", "grid size including gamma = 0"},
        {"grid_min", "0.01", "first positive point of the geometric grid"},
        {"n_mc", "2000", "Monte-Carlo draws per grid point"},
        {"sequences", "all", "all | comma-separated dataset indices"},
    });
}

void run_nll(const Params& p, const Context& ctx) {
    const auto w = workspace(p);
    const auto& contour = p.str("contour");
    if (contour != "diagonal" && contour != "ar" && contour != "both")
        throw UsageError("contour: unknown value '" + contour + "' (diagonal | ar | both)");
    const bool diag = contour != "ar", ar = contour != "diagonal";
    const double gmax = p.real("gamma_max");
    const auto points = p.count("grid_points");
    std::vector<double> grid;
    if (p.str("grid") == "geometric")
        grid = geometric_grid(gmax, points, p.real("grid_min"));
    else if (p.str("grid") == "uniform")
        grid = uniform_grid(gmax, points);
    else
        throw UsageError("grid: unknown value '" + p.str("grid") + "' (geometric | uniform)");
    const auto n_mc = p.count("n_mc");
    if (n_mc < 2) throw UsageError("n_mc: must be >= 2");

    std::vector<std::size_t> idx;
    if (p.str("sequences") == "all") {
        idx.resize(w.data.size());
        std::iota(idx.begin(), idx.end(), 0);
    } else {
        for (double v : p.reals("sequences")) {
            if (v < 0 || v != std::floor(v) || v >= static_cast<double>(w.data.size()))
                throw UsageError("sequences: index " + num(v) + " out of range");
            idx.push_back(static_cast<std::size_t>(v));
        }
    }

    std::vector<NllEstimate> dres(idx.size());
    std::vector<ArNllEstimate> ares(idx.size());
    parallel_for(idx.size(), ctx.threads, [&](std::size_t j) {
        const Sequence& x = w.data.sequence(idx[j]);
        if (diag) dres[j] = nll_diagonal(x, gmax, grid, n_mc, derive_seed(ctx.seed, kNllStream, 2 * j), w.data, w.emb);
        if (ar) ares[j] = nll_ar_contour(x, gmax, grid, n_mc, derive_seed(ctx.seed, kNllStream, 2 * j + 1), w.data, w.emb);
    });

    const int K = w.data.vocab_size();
    ctx.out->write("nll.csv", [&](std::ostream& o) {
        o << "sequence,contour,estimate,std_error,integral,truncation,exact\n";
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const Sequence& x = w.data.sequence(idx[j]);
            const double exact = exact_nll(x, w.data);
            if (diag)
                o << seq_text(x, K) << ",diagonal," << num(dres[j].estimate) << ',' << num(dres[j].std_error) << ','
                  << num(dres[j].integral) << ',' << num(dres[j].truncation) << ',' << num(exact) << '\n';
            if (ar) {
                double integral = 0.0, trunc = 0.0;
                for (const auto& t : ares[j].tokens) {
                    integral += t.integral;
                    trunc += t.truncation;
                }
                o << seq_text(x, K) << ",ar," << num(ares[j].total) << ',' << num(ares[j].total_se) << ','
                  << num(integral) << ',' << num(trunc) << ',' << num(exact) << '\n';
            }
        }
    });
    if (ar)
        ctx.out->write("ar_tokens.csv", [&](std::ostream& o) {
            o << "sequence,token,estimate,std_error,exact\n";
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const Sequence& x = w.data.sequence(idx[j]);
                double prev = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    // -log P(x_i | x_<i) = -log P(x_<=i) + log P(x_<i)
                    double mass = 0.0;
                    for (std::size_t n = 0; n < w.data.size(); ++n) {
                        bool match = true;
                        for (std::size_t m = 0; m <= i && match; ++m) match = w.data.token(n, int(m)) == x[m];
                        if (match) mass += w.data.weights()(static_cast<Eigen::Index>(n));
                    }
                    const double nll_prefix = -std::log(mass);
                    o << seq_text(x, K) << ',' << i << ',' << num(ares[j].tokens[i].estimate) << ','
                      << num(ares[j].tokens[i].std_error) << ',' << num(nll_prefix - prev) << '\n';
                    prev = nll_prefix;
                }
            }
        });
    if (diag && ar)
        ctx.out->write("agreement.csv", [&](std::ostream& o) {
            o << "sequence,diagonal,ar,difference,sigma,within_2sigma\n";
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const double d = dres[j].estimate - ares[j].total;
                const double s = std::hypot(dres[j].std_error, ares[j].total_se);
                o << seq_text(w.data.sequence(idx[j]), K) << ',' << num(dres[j].estimate) << ','
                  << num(ares[j].total) << ',' << num(d) << ',' << num(s) << ','
                  << (std::abs(d) <= 2.0 * s ? "true" : "false") << '\n';
            }
        });
    ctx.out->write("error_field.csv", [&](std::ostream& o) {
        o << "sequence,contour,gamma,token,E,se\n";
        for (std::size_t j = 0; j < idx.size(); ++j) {
            std::ostringstream body;
            if (diag) write_error_field_csv(body, dres[j].field, "diagonal");
            if (ar)
                for (std::size_t i = 0; i < ares[j].tokens.size(); ++i)
                    write_error_field_csv(body, ares[j].tokens[i].field, "ar", static_cast<int>(i));
            std::istringstream lines(body.str());
            std::string line;
            while (std::getline(lines, line)) o << idx[j] << ',' << line << '\n';
        }
    });
}

// ---- refine ---------------------------------------------------------------

std::vector<Key> refine_schema() {
    return concat(dataset_keys("7"), {
        {"preset", "", "named scenario: fig5"},
        {"draft", "", "initial draft, '_' for mask (default: fully masked)"},
        {"truth", "", "target sequence for the success flag"},
        {"strategy", "cap-loop", "cap-loop | confidence | none"},
        {"T", "128", "step budget"},
        {"eta_cap", "auto", "remask intensity; auto looks up the budget table"},
        {"t_on", "0.55", "loop window start"},
        {"t_off", "0.05", "loop window end"},
        {"alpha_loop", "0.9", "noise level held inside the loop window"},
        {"alpha_start", "0.01", "alpha(1)"},
        {"alpha_end", "0.99", "alpha(1/T)"},
        {"refresh_unmasked", "true", "resample remasked positions in the same step"},
        {"confidence_threshold", "0.5", "confidence strategy threshold"},
        {"max_remask", "2", "confidence strategy per-step cap"},
        {"gamma_vis", "10", "SNR assigned to visible tokens"},
        {"top_p", "0.9", "nucleus mass for sampling and k_t"},
        {"sweep", "0", "additional seeded runs for a success-rate summary"},
        {"r_floor", "0.05", "churn flag: minimum remask ratio"},
        {"delta_ceiling", "0.01", "churn flag: maximum change rate"},
    });
}

void preset_refine(Params& p) {
    const auto& name = p.str("preset");
    if (name.empty()) return;
    if (name != "fig5") throw UsageError("preset: unknown value '" + name + "' (fig5)");
    const Fig5Preset f;
    p.set_default("dataset", "cyclic");
    p.set_default("vocab", std::to_string(f.vocab_size));
    p.set_default("embedding", "circle");
    p.set_default("draft", f.initial);
    p.set_default("truth", f.truth);
    p.set_default("strategy", to_string(f.config.schedule.strategy));
    p.set_default("T", std::to_string(f.config.budget));
    p.set_default("gamma_vis", num(f.config.gamma_vis));
    p.set_default("top_p", num(f.config.top_p));
}

Sequence parse_sequence(const std::string& text, int K) {
    if (K <= 26 && text.find(' ') == std::string::npos) return parse_draft(text, K);
    Sequence out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        if (tok == "_") {
            out.push_back(K);
            continue;
        }
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size() || v < 0 || v >= K) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("draft: invalid token '" + tok + "'");
        }
    }
    return out;
}

RefinementConfig refinement_config(const Params& p) {
    RefinementConfig c;
    const auto T = p.integer("T");
    if (T < 1) throw UsageError("T: must be >= 1");
    c.budget = static_cast<int>(T);
    auto& s = c.schedule;
    s.strategy = parse_strategy(p.str("strategy"));
    s.eta_cap = p.str("eta_cap") == "auto" ? eta_cap_for_budget(c.budget) : p.real("eta_cap");
    s.t_on = p.real("t_on");
    s.t_off = p.real("t_off");
    s.alpha_loop = p.real("alpha_loop");
    s.alpha_start = p.real("alpha_start");
    s.alpha_end = p.real("alpha_end");
    s.refresh_unmasked = p.flag("refresh_unmasked");
    s.confidence_threshold = p.real("confidence_threshold");
    s.max_remask_per_step = static_cast<int>(p.count("max_remask"));
    s.validate();
    c.gamma_vis = p.real("gamma_vis");
    c.top_p = p.real("top_p");
    if (!(c.gamma_vis > 0.0)) throw UsageError("gamma_vis: must be > 0");
    if (!(c.top_p > 0.0 && c.top_p <= 1.0)) throw UsageError("top_p: must lie in (0, 1]");
    return c;
}

void run_refine(const Params& p, const Context& ctx) {
    const auto w = workspace(p);
    const int K = w.data.vocab_size(), L = w.data.length();
    const RefinementConfig cfg = refinement_config(p);
    const Sequence initial = p.str("draft").empty() ? Sequence(L, K) : parse_sequence(p.str("draft"), K);
    if (static_cast<int>(initial.size()) != L)
        throw UsageError("draft: length " + std::to_string(initial.size()) + " != sequence length " + std::to_string(L));
    std::optional<Sequence> truth;
    if (!p.str("truth").empty()) {
        truth = parse_sequence(p.str("truth"), K);
        if (static_cast<int>(truth->size()) != L || std::count(truth->begin(), truth->end(), K))
            throw UsageError("truth: must be a full sequence of length " + std::to_string(L));
    }
    const double r_floor = p.real("r_floor"), delta_ceiling = p.real("delta_ceiling");

    const RefinementTrace trace = run_refinement(initial, cfg, ctx.seed, w.data, w.emb);
    const auto diags = trace_diagnostics(trace);
    const auto flags = over_refinement_flags(diags, r_floor, delta_ceiling);

    ctx.out->write("trace.jsonl", [&](std::ostream& o) { write_trace_jsonl(o, trace); });
    ctx.out->write("diagnostics.csv", [&](std::ostream& o) { write_diagnostics_csv(o, diags); });
    std::optional<RewriteCounts> rc;
    if (trace.steps.size() >= 2) {
        rc = rewrite_counts(trace);
        ctx.out->write("rewrites.csv", [&](std::ostream& o) {
            o << "position,rewrites\n";
            for (std::size_t i = 0; i < rc->counts.size(); ++i) o << i << ',' << rc->counts[i] << '\n';
        });
    }
    std::size_t remask_events = 0;
    for (const auto& s : trace.steps) remask_events += s.remasked.size();
    ctx.out->write("summary.csv", [&](std::ostream& o) {
        o << "key,value\n";
        o << "initial_draft," << seq_text(initial, K) << '\n';
        o << "final_draft," << seq_text(trace.final_draft(), K) << '\n';
        o << "final_t," << num(trace.steps.back().t) << '\n';
        o << "eta_cap," << num(cfg.schedule.eta_cap) << '\n';
        o << "remask_events," << remask_events << '\n';
        o << "mean_rewrites," << (rc ? num(rc->mean) : std::string("nan")) << '\n';
        o << "flagged_steps," << flags.size() << '\n';
        if (truth) {
            const int first = trace.first_match(*truth);
            o << "truth," << seq_text(*truth, K) << '\n';
            o << "success," << (trace.final_draft() == *truth ? "true" : "false") << '\n';
            o << "first_match_step," << first << '\n';
        }
    });

    const auto sweep = p.count("sweep");
    if (sweep > 0) {
        struct Run {
            bool success = false;
            int first = -1;
            double rewrites = 0.0;
            std::size_t remasks = 0;
        };
        std::vector<Run> runs(sweep);
        parallel_for(sweep, ctx.threads, [&](std::size_t s) {
            const auto tr = run_refinement(initial, cfg, derive_seed(ctx.seed, kSweepStream, s), w.data, w.emb);
            Run& r = runs[s];
            if (truth) {
                r.success = tr.final_draft() == *truth;
                r.first = tr.first_match(*truth);
            }
            if (tr.steps.size() >= 2) r.rewrites = rewrite_counts(tr).mean;
            for (const auto& st : tr.steps) r.remasks += st.remasked.size();
        });
        ctx.out->write("sweep.csv", [&](std::ostream& o) {
            o << "run,success,first_match_step,mean_rewrites,remask_events\n";
            for (std::size_t s = 0; s < sweep; ++s)
                o << s << ',' << (runs[s].success ? "true" : "false") << ',' << runs[s].first << ','
                  << num(runs[s].rewrites) << ',' << runs[s].remasks << '\n';
        });
        ctx.out->write("sweep_summary.csv", [&](std::ostream& o) {
            std::size_t ok = 0;
            double rw = 0.0;
            for (const auto& r : runs) {
                ok += r.success;
                rw += r.rewrites;
            }
            o << "runs,successes,success_rate,mean_rewrites\n"
              << sweep << ',' << ok << ',' << num(double(ok) / double(sweep)) << ',' << num(rw / double(sweep)) << '\n';
        });
    }
}

// ---- corrupt-stats --------------------------------------------------------

std::vector<Key> corrupt_schema() {
    return concat({{"tokens", "100000", "total number of sampled token SNRs"},
                   {"length", "100", "tokens per sampled sequence"},
                   {"bins", "20", "histogram bins over log SNR of non-endpoint tokens"}},
                  corruption_keys("smoothed"));
}

void run_corrupt_stats(const Params& p, const Context& ctx) {
    const CorruptionConfig cfg = corruption_config(p);
    const auto tokens = p.count("tokens"), length = p.count("length"), bins = p.count("bins");
    if (tokens == 0) throw UsageError("tokens: must be >= 1");
    if (length == 0) throw UsageError("length: must be >= 1");
    if (bins < 1) throw UsageError("bins: must be >= 1");
    const std::size_t n_seq = (tokens + length - 1) / length;
    std::vector<GammaSample> draws(n_seq);
    parallel_for(n_seq, ctx.threads, [&](std::size_t n) {
        Rng rng = make_rng(ctx.seed, kCorruptStream, n);
        draws[n] = sample_gammas(static_cast<int>(length), cfg, rng);
    });

    std::size_t total = 0, roar = 0, low = 0, high = 0;
    double low_min = INFINITY, low_max = -INFINITY, high_min = INFINITY, high_max = -INFINITY;
    std::vector<double> lognormal, endpoint_values;
    for (const auto& d : draws)
        for (Eigen::Index i = 0; i < d.gamma.size() && total < tokens; ++i, ++total) {
            const double g = d.gamma(i);
            if (!d.roar[i]) {
                lognormal.push_back(g);
                continue;
            }
            ++roar;
            endpoint_values.push_back(g);
            if (d.high[i]) {
                ++high;
                high_min = std::min(high_min, g);
                high_max = std::max(high_max, g);
            } else {
                ++low;
                low_min = std::min(low_min, g);
                low_max = std::max(low_max, g);
            }
        }
    std::sort(endpoint_values.begin(), endpoint_values.end());
    endpoint_values.erase(std::unique(endpoint_values.begin(), endpoint_values.end()), endpoint_values.end());
    const double pr = 1.0 / cfg.k;
    ctx.out->write("summary.csv", [&](std::ostream& o) {
        o << "key,value\n";
        o << "tokens," << total << '\n';
        o << "mode," << to_string(cfg.mode) << '\n';
        o << "roar_fraction," << num(double(roar) / double(total)) << '\n';
        o << "expected_roar_fraction," << num(pr) << '\n';
        o << "roar_fraction_se," << num(std::sqrt(pr * (1.0 - pr) / double(total))) << '\n';
        o << "lognormal_count," << lognormal.size() << '\n';
        o << "lognormal_median," << (lognormal.empty() ? std::string("nan") : num(median(lognormal))) << '\n';
        o << "expected_lognormal_median," << num(std::exp(cfg.mu)) << '\n';
        o << "low_count," << low << "\nlow_min," << num(low_min) << "\nlow_max," << num(low_max) << '\n';
        o << "high_count," << high << "\nhigh_min," << num(high_min) << "\nhigh_max," << num(high_max) << '\n';
        o << "distinct_endpoint_values," << endpoint_values.size() << '\n';
    });
    ctx.out->write("histogram.csv", [&](std::ostream& o) {
        o << "bin,log_gamma_lo,log_gamma_hi,count\n";
        if (lognormal.empty()) return;
        double lo = INFINITY, hi = -INFINITY;
        for (double g : lognormal) {
            lo = std::min(lo, std::log(g));
            hi = std::max(hi, std::log(g));
        }
        const double width = hi > lo ? (hi - lo) / double(bins) : 1.0;
        std::vector<std::size_t> counts(bins, 0);
        for (double g : lognormal)
            ++counts[std::min<std::size_t>(bins - 1, static_cast<std::size_t>((std::log(g) - lo) / width))];
        for (std::size_t b = 0; b < bins; ++b)
            o << b << ',' << num(lo + width * double(b)) << ',' << num(lo + width * double(b + 1)) << ',' << counts[b] << '\n';
    });
}

// ---- train-converter ------------------------------------------------------

std::vector<Key> train_schema() {
    return concat({{"vocab", "5", "vocabulary size K"},
                   {"embedding", "circle", "circle | sphere"},
                   {"dim", "8", "embedding dimension for sphere embeddings"},
                   {"embedding_seed", "1", "seed of the sphere embedding table"},
                   {"n_train", "4000", "training draws"},
                   {"learning_rate", "0.5", "initial gradient step"},
                   {"iterations", "1000", "gradient iterations"},
                   {"mask_bias", "3", "initial mask logit bias"},
                   {"eval_gammas", "0,1,5,20,50", "evaluation SNRs"},
                   {"n_eval", "2000", "evaluation draws per SNR"}},
                  corruption_keys("smoothed"));
}

EmbeddingTable single_token_embeddings(const Params& p) {
    const auto K = p.integer("vocab");
    if (K < 2) throw UsageError("vocab: must be >= 2");
    const auto& e = p.str("embedding");
    if (e == "circle") return make_circle_embeddings(static_cast<int>(K));
    if (e == "sphere") {
        const auto d = p.integer("dim");
        if (d < 2) throw UsageError("dim: must be >= 2");
        return make_sphere_embeddings(static_cast<int>(K), static_cast<int>(d), p.count("embedding_seed"));
    }
    throw UsageError("embedding: unknown value '" + e + "' (circle | sphere)");
}

TrainResult train_from(const Params& p, const EmbeddingTable& emb, const CorruptionConfig& cfg, std::uint64_t seed) {
    const auto n_train = p.count("n_train");
    if (n_train == 0) throw UsageError("n_train: must be >= 1");
    TrainOptions opts;
    opts.learning_rate = p.real("learning_rate");
    opts.iterations = p.count("iterations");
    if (!(opts.learning_rate > 0.0)) throw UsageError("learning_rate: must be > 0");
    const auto draws = sample_converter_draws(n_train, emb.vocab_size(), cfg, seed);
    return train_converter(draws, emb, ConverterParams::mask_favoring(emb.vocab_size(), p.real("mask_bias")), opts);
}

void run_train_converter(const Params& p, const Context& ctx) {
    const EmbeddingTable emb = single_token_embeddings(p);
    const CorruptionConfig cfg = corruption_config(p);
    const auto gammas = p.reals("eval_gammas");
    const auto n_eval = p.count("n_eval");
    if (n_eval == 0) throw UsageError("n_eval: must be >= 1");
    for (double g : gammas)
        if (g < 0.0) throw UsageError("eval_gammas: SNRs must be >= 0");
    const TrainResult res = train_from(p, emb, cfg, derive_seed(ctx.seed, kTrainStream));
    const ConverterParams init = ConverterParams::mask_favoring(emb.vocab_size(), p.real("mask_bias"));

    ctx.out->write("params.txt", [&](std::ostream& o) { write_params(o, res.params); });
    ctx.out->write("loss.csv", [&](std::ostream& o) {
        o << "iteration,loss,learning_rate\n";
        for (std::size_t i = 0; i < res.loss_trace.size(); ++i)
            o << i << ',' << num(res.loss_trace[i]) << ','
              << (i == 0 ? std::string("") : num(res.learning_rate[i - 1])) << '\n';
    });
    std::vector<ConverterEval> ev_init(gammas.size()), ev_trained(gammas.size());
    parallel_for(gammas.size(), ctx.threads, [&](std::size_t j) {
        const auto s = derive_seed(ctx.seed, kEvalStream, j);
        ev_init[j] = evaluate_converter(init, emb, gammas[j], n_eval, s);
        ev_trained[j] = evaluate_converter(res.params, emb, gammas[j], n_eval, s);
    });
    ctx.out->write("eval.csv", [&](std::ostream& o) {
        o << "params,gamma,kl,true_mass,mask_mass,entropy,mask_argmax\n";
        for (const auto* set : {&ev_init, &ev_trained})
            for (const auto& e : *set)
                o << (set == &ev_init ? "init" : "trained") << ',' << num(e.gamma) << ',' << num(e.kl) << ','
                  << num(e.true_mass) << ',' << num(e.mask_mass) << ',' << num(e.entropy) << ','
                  << num(e.mask_argmax) << '\n';
    });
}

// ---- calibration ----------------------------------------------------------

std::vector<Key> calibration_schema() {
    auto keys = concat(dataset_keys("5"), {
        {"snr", "20,50,100", "teacher-forcing SNRs"},
        {"bins", "15", "reliability bins"},
        {"n_sequences", "20000", "corrupted sequences per SNR"},
        {"temper", "2", "exponent of the mis-tempered posterior"},
        {"n_train", "4000", "converter training draws per corruption mode"},
        {"learning_rate", "0.5", "converter initial gradient step"},
        {"iterations", "1000", "converter gradient iterations"},
        {"mask_bias", "3", "converter initial mask logit bias"},
    });
    for (auto& k : corruption_keys("smoothed"))
        if (k.name != "mode") keys.push_back(k);
    return keys;
}

void run_calibration(const Params& p, const Context& ctx) {
    const auto w = workspace(p);
    const auto snrs = p.reals("snr");
    const auto bins = p.integer("bins");
    if (bins < 2) throw UsageError("bins: must be >= 2");
    const auto n_seq = p.count("n_sequences");
    if (n_seq == 0) throw UsageError("n_sequences: must be >= 1");
    for (double g : snrs)
        if (!(g > 0.0)) throw UsageError("snr: values must be > 0");
    const double temper = p.real("temper");
    if (!(temper > 0.0)) throw UsageError("temper: must be > 0");

    struct Provider {
        std::string name;
        ProbabilityProvider fn;
    };
    std::vector<Provider> providers{{"exact", exact_provider(w.data, w.emb)},
                                    {"tempered", tempered(exact_provider(w.data, w.emb), temper)}};
    std::vector<std::pair<std::string, ConverterParams>> trained;
    for (RoarMode mode : {RoarMode::atomic, RoarMode::smoothed}) {
        CorruptionConfig cfg;
        cfg.k = p.real("k");
        cfg.mu = p.real("mu");
        cfg.sigma = p.real("sigma");
        cfg.gamma_min = p.real("gamma_min");
        cfg.gamma_max = p.real("gamma_max");
        cfg.c = p.real("c");
        cfg.clip_lognormal = p.flag("clip");
        cfg.mode = mode;
        cfg.validate();
        const auto res = train_from(p, w.emb, cfg, derive_seed(ctx.seed, kTrainStream, static_cast<std::uint64_t>(mode)));
        const std::string name = std::string("converter-") + to_string(mode);
        trained.emplace_back(name, res.params);
        providers.push_back({name, [emb = &w.emb, params = res.params](const Matrix& z) {
                                 Matrix out(z.rows(), emb->vocab_size());
                                 for (Eigen::Index i = 0; i < z.rows(); ++i)
                                     out.row(i) = convert_tokens_only(z.row(i), *emb, params).transpose();
                                 return out;
                             }});
    }
    for (const auto& [name, params] : trained)
        ctx.out->write("params_" + name + ".txt", [&](std::ostream& o) { write_params(o, params); });

    std::ostringstream ece;
    ece << "provider,snr,ece,tokens\n";
    for (std::size_t s = 0; s < snrs.size(); ++s) {
        TeacherForcingOptions opts;
        opts.gamma = snrs[s];
        opts.n_sequences = n_seq;
        opts.threads = static_cast<int>(ctx.threads);
        const auto seed = derive_seed(ctx.seed, kCalibStream, s);
        for (const auto& prov : providers) {
            const auto rep = calibration_report(teacher_forcing_scores(w.data, w.emb, prov.fn, opts, seed), int(bins));
            ece << prov.name << ',' << num(snrs[s]) << ',' << num(rep.ece) << ',' << rep.total << '\n';
            ctx.out->write("reliability_" + prov.name + "_snr" + num(snrs[s]) + ".csv",
                           [&](std::ostream& o) { write_reliability_csv(o, rep); });
        }
    }
    ctx.out->write("ece.csv", [&](std::ostream& o) { o << ece.str(); });
}

// ---- diagnose ---------------------------------------------------------------

std::vector<Key> diagnose_schema() {
    return {{"input", "", "trace JSONL written by refine"},
            {"r_floor", "0.05", "churn flag: minimum remask ratio"},
            {"delta_ceiling", "0.01", "churn flag: maximum change rate"}};
}

void run_diagnose(const Params& p, const Context& ctx) {
    if (p.str("input").empty()) throw UsageError("input: trace path is required");
    std::ifstream in(p.str("input"));
    if (!in) throw std::runtime_error("cannot open " + p.str("input"));
    const RefinementTrace trace = read_trace_jsonl(in);
    const auto diags = trace_diagnostics(trace);
    const auto flags = over_refinement_flags(diags, p.real("r_floor"), p.real("delta_ceiling"));
    ctx.out->write("diagnostics.csv", [&](std::ostream& o) { write_diagnostics_csv(o, diags); });
    ctx.out->write("flags.csv", [&](std::ostream& o) {
        o << "step,t,r,delta\n";
        for (int k : flags) o << k << ',' << num(diags[k].t) << ',' << num(diags[k].r) << ',' << num(diags[k].delta) << '\n';
    });
    if (trace.steps.size() >= 2) {
        const auto rc = rewrite_counts(trace);
        ctx.out->write("rewrites.csv", [&](std::ostream& o) {
            o << "position,rewrites\n";
            for (std::size_t i = 0; i < rc.counts.size(); ++i) o << i << ',' << rc.counts[i] << '\n';
            o << "mean," << num(rc.mean) << '\n';
        });
    }
}

} // namespace

const std::vector<Command>& commands() {
    static const std::vector<Command> all{
        {"generate", "sample the unconditional SDE and compare to the data distribution", generate_schema, nullptr,
         run_generate},
        {"nll", "path-integral likelihood along the diagonal and autoregressive contours", nll_schema, nullptr, run_nll},
        {"refine", "masked refinement decoding with remasking", refine_schema, preset_refine, run_refine},
        {"corrupt-stats", "statistics of the mixed token-wise SNR sampler", corrupt_schema, nullptr, run_corrupt_stats},
        {"train-converter", "fit the softmax converter on single-token denoising", train_schema, nullptr,
         run_train_converter},
        {"calibration", "teacher-forcing reliability and ECE", calibration_schema, nullptr, run_calibration},
        {"diagnose", "step diagnostics, rewrite counts and churn flags of a saved trace", diagnose_schema, nullptr,
         run_diagnose},
    };
    return all;
}

} // namespace dsl::cli
