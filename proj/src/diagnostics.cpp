#include "dsl/diagnostics.hpp"

#include "dsl/corruption.hpp"
#include "dsl/error.hpp"
#include "dsl/parallel.hpp"
#include "dsl/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace dsl {

namespace {

constexpr std::uint64_t kTeacherStream = 0x7eac;

void check_threshold(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw Error(Errc::invalid_config, std::string(name) + ": must lie in (0, 1)");
}

} // namespace

int nucleus_size(const Eigen::Ref<const RowVector>& probs, double p) {
    std::vector<double> sorted(probs.data(), probs.data() + probs.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double mass = 0.0;
    std::size_t n = 0;
    while (n < sorted.size()) {
        mass += sorted[n++];
        if (mass >= p) break;
    }
    while (n < sorted.size() && sorted[n] == sorted[n - 1]) ++n;
    return static_cast<int>(n);
}

StepDiagnostics step_diagnostics(const TokenPosterior& posterior, const Sequence& prev, const Sequence& next,
                                 const std::vector<int>& remask_set, double p) {
    const auto L = posterior.length();
    if (L == 0 || static_cast<Eigen::Index>(prev.size()) != L || static_cast<Eigen::Index>(next.size()) != L)
        throw Error(Errc::dimension, "posterior and drafts disagree on length");
    StepDiagnostics d;
    for (Eigen::Index i = 0; i < L; ++i) {
        const auto row = posterior.probs.row(i);
        d.u += 1.0 - row.maxCoeff();
        double h = 0.0;
        for (Eigen::Index v = 0; v < row.size(); ++v)
            if (row(v) > 0.0) h -= row(v) * std::log(row(v));
        d.H += h;
        d.k += nucleus_size(row, p);
        if (prev[i] != next[i]) d.delta += 1.0;
    }
    const double n = static_cast<double>(L);
    d.u /= n;
    d.H /= n;
    d.k /= n;
    d.delta /= n;
    d.r = static_cast<double>(remask_set.size()) / n;
    return d;
}

std::vector<StepDiagnostics> trace_diagnostics(const RefinementTrace& trace) {
    std::vector<StepDiagnostics> out;
    out.reserve(trace.steps.size());
    for (const auto& s : trace.steps) {
        auto d = step_diagnostics(TokenPosterior{s.posterior}, s.before, s.after, s.remasked, trace.top_p);
        d.t = s.t;
        out.push_back(d);
    }
    return out;
}

RewriteCounts rewrite_counts(const std::vector<Sequence>& drafts) {
    if (drafts.size() < 2) throw Error(Errc::trace_too_short, "rewrite counts need at least two drafts");
    RewriteCounts rc;
    rc.counts.assign(drafts.front().size(), 0);
    for (std::size_t k = 1; k < drafts.size(); ++k) {
        if (drafts[k].size() != rc.counts.size()) throw Error(Errc::dimension, "drafts differ in length");
        for (std::size_t i = 0; i < rc.counts.size(); ++i)
            if (drafts[k][i] != drafts[k - 1][i]) ++rc.counts[i];
    }
    if (!rc.counts.empty())
        rc.mean = std::accumulate(rc.counts.begin(), rc.counts.end(), 0.0) / static_cast<double>(rc.counts.size());
    return rc;
}

RewriteCounts rewrite_counts(const RefinementTrace& trace) { return rewrite_counts(trace.drafts()); }

std::vector<int> over_refinement_flags(const std::vector<StepDiagnostics>& steps, double r_floor,
                                       double delta_ceiling) {
    check_threshold(r_floor, "r_floor");
    check_threshold(delta_ceiling, "delta_ceiling");
    std::vector<int> flagged;
    for (std::size_t k = 0; k < steps.size(); ++k)
        if (steps[k].r >= r_floor && steps[k].delta <= delta_ceiling) flagged.push_back(static_cast<int>(k));
    return flagged;
}

std::vector<int> over_refinement_flags(const RefinementTrace& trace, double r_floor, double delta_ceiling) {
    return over_refinement_flags(trace_diagnostics(trace), r_floor, delta_ceiling);
}

CalibrationReport calibration_report(const std::vector<ScoredToken>& scored, int n_bins) {
    if (scored.empty()) throw Error(Errc::empty_report, "no scored tokens");
    if (n_bins < 2) throw Error(Errc::invalid_config, "bins: must be >= 2");
    CalibrationReport rep;
    rep.bins.resize(static_cast<std::size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b) {
        rep.bins[b].lo = static_cast<double>(b) / n_bins;
        rep.bins[b].hi = static_cast<double>(b + 1) / n_bins;
    }
    for (const auto& s : scored) {
        if (!(s.confidence >= 0.0 && s.confidence <= 1.0))
            throw Error(Errc::invalid_config, "confidence outside [0, 1]");
        const int b = std::min(n_bins - 1, static_cast<int>(s.confidence * n_bins));
        auto& bin = rep.bins[b];
        bin.confidence += s.confidence;
        bin.accuracy += s.correct ? 1.0 : 0.0;
        ++bin.count;
    }
    rep.total = scored.size();
    for (auto& bin : rep.bins) {
        if (bin.count == 0) continue;
        bin.confidence /= static_cast<double>(bin.count);
        bin.accuracy /= static_cast<double>(bin.count);
        rep.ece += static_cast<double>(bin.count) / static_cast<double>(rep.total) *
                   std::abs(bin.confidence - bin.accuracy);
    }
    return rep;
}

ProbabilityProvider exact_provider(const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    return [&data, &emb](const Matrix& z) { return token_marginals(z, data, emb).probs; };
}

ProbabilityProvider tempered(ProbabilityProvider base, double power) {
    return [base = std::move(base), power](const Matrix& z) {
        Matrix p = base(z).array().pow(power).matrix();
        for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
        return p;
    };
}

std::vector<ScoredToken> teacher_forcing_scores(const EmpiricalDistribution& data, const EmbeddingTable& emb,
                                                const ProbabilityProvider& provider,
                                                const TeacherForcingOptions& options, std::uint64_t seed) {
    if (!(options.gamma > 0.0)) throw Error(Errc::invalid_snr, "teacher forcing SNR must be > 0");
    const int L = data.length();
    const Vector gamma = Vector::Constant(L, options.gamma);
    std::vector<double> cdf(data.size());
    std::partial_sum(data.weights().data(), data.weights().data() + data.size(), cdf.begin());
    std::vector<ScoredToken> scored(options.n_sequences * static_cast<std::size_t>(L));
    parallel_for(options.n_sequences, static_cast<unsigned>(std::max(1, options.threads)), [&](std::size_t n) {
        Rng rng = make_rng(seed, kTeacherStream, n);
        const double u = uniform01(rng) * cdf.back();
        const auto idx = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), data.size() - 1);
        const Sequence& x = data.sequence(idx);
        const Matrix z = corrupt(x, gamma, emb, rng);
        const Matrix probs = provider(z);
        for (int i = 0; i < L; ++i) {
            Eigen::Index best;
            const double conf = probs.row(i).maxCoeff(&best);
            scored[n * L + i] = {std::clamp(conf, 0.0, 1.0), best == x[i]};
        }
    });
    return scored;
}

void write_diagnostics_csv(std::ostream& out, const std::vector<StepDiagnostics>& steps) {
    const auto old = out.precision(10);
    out << "t,u,H,k,r,delta\n";
    for (const auto& d : steps) out << d.t << ',' << d.u << ',' << d.H << ',' << d.k << ',' << d.r << ',' << d.delta << '\n';
    out.precision(old);
}

void write_reliability_csv(std::ostream& out, const CalibrationReport& report) {
    const auto old = out.precision(10);
    out << "bin,conf,acc,count\n";
    for (std::size_t b = 0; b < report.bins.size(); ++b) {
        const auto& bin = report.bins[b];
        out << b << ',' << bin.confidence << ',' << bin.accuracy << ',' << bin.count << '\n';
    }
    out.precision(old);
}

} // namespace dsl
