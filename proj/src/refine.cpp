#include "dsl/refine.hpp"

#include "dsl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dsl {

namespace {

constexpr std::uint64_t kRefineStream = 0x4ef1;

int round_count(double x) { return static_cast<int>(std::floor(x + 0.5)); }

std::vector<int> nucleus_order(const Eigen::Ref<const RowVector>& probs, double top_p) {
    std::vector<int> order(static_cast<std::size_t>(probs.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs(a) > probs(b); });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        mass += probs(order[keep]);
        ++keep;
        if (mass >= top_p) break;
    }
    // boundary ties stay in the nucleus
    while (keep < order.size() && probs(order[keep]) == probs(order[keep - 1])) ++keep;
    order.resize(keep);
    return order;
}

} // namespace

RemaskStrategy parse_strategy(const std::string& name) {
    if (name == "none") return RemaskStrategy::none;
    if (name == "confidence") return RemaskStrategy::confidence;
    if (name == "cap-loop" || name == "cap_loop") return RemaskStrategy::cap_loop;
    throw Error(Errc::invalid_config, "strategy: unknown value '" + name + "' (none | confidence | cap-loop)");
}

const char* to_string(RemaskStrategy strategy) noexcept {
    switch (strategy) {
    case RemaskStrategy::none: return "none";
    case RemaskStrategy::confidence: return "confidence";
    case RemaskStrategy::cap_loop: return "cap-loop";
    }
    return "?";
}

void RemaskSchedule::validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::invalid_config, what); };
    if (!(eta_cap > 0.0) || !std::isfinite(eta_cap)) fail("eta_cap: must be > 0");
    if (!(t_off >= 0.0 && t_off < t_on && t_on <= 1.0)) fail("t_on/t_off: need 0 <= t_off < t_on <= 1");
    if (!(alpha_loop > 0.0 && alpha_loop < 1.0)) fail("alpha_loop: must lie in (0, 1)");
    if (!(alpha_start > 0.0 && alpha_start < 1.0)) fail("alpha_start: must lie in (0, 1)");
    if (!(alpha_end > 0.0 && alpha_end < 1.0)) fail("alpha_end: must lie in (0, 1)");
    if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0))
        fail("confidence_threshold: must lie in (0, 1]");
    if (max_remask_per_step < 0) fail("max_remask: must be >= 0");
}

double RemaskSchedule::alpha(double t, int budget) const {
    if (in_loop(t)) return alpha_loop;
    if (budget <= 1) return alpha_start;
    const double t_last = 1.0 / budget;
    const double s = std::clamp((1.0 - t) / (1.0 - t_last), 0.0, 1.0);
    return std::exp((1.0 - s) * std::log(alpha_start) + s * std::log(alpha_end));
}

double RemaskSchedule::mask_ratio(double t, double r0) const {
    t = std::clamp(t, 0.0, 1.0);
    if (strategy != RemaskStrategy::cap_loop) return r0 * t;
    const double held = std::min(r0, 1.0 - alpha_loop);
    if (t >= t_on) {
        if (t_on >= 1.0) return held;
        return held + (r0 - held) * (t - t_on) / (1.0 - t_on);
    }
    if (t >= t_off) return held;
    return t_off > 0.0 ? held * t / t_off : 0.0;
}

double remask_probability(double t, double r_t, const RemaskSchedule& schedule) {
    if (!schedule.in_loop(t)) return 0.0;
    if (!(r_t >= 0.0) || r_t > 1.0) throw Error(Errc::invalid_config, "mask ratio must lie in [0, 1]");
    if (r_t >= 1.0) throw Error(Errc::undefined_ratio, "remask probability undefined at mask ratio 1");
    const double a = schedule.alpha_loop;
    const double eta = schedule.eta_cap * a / (1.0 - a);
    return std::min(1.0, eta / (1.0 - r_t));
}

EtaCapTable::EtaCapTable() : values_{{128, 0.010}, {256, 0.008}, {512, 0.007}, {1024, 0.002}} {}

EtaCapTable::EtaCapTable(std::map<int, double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(Errc::invalid_config, "eta_cap table is empty");
    for (const auto& [budget, eta] : values_)
        if (budget < 1 || !(eta > 0.0))
            throw Error(Errc::invalid_config, "eta_cap." + std::to_string(budget) + ": must be > 0");
}

double EtaCapTable::operator()(int budget) const {
    if (budget < 1) throw Error(Errc::invalid_budget, "step budget must be >= 1, got " + std::to_string(budget));
    auto hi = values_.lower_bound(budget);
    if (hi == values_.end()) return std::prev(hi)->second;
    if (hi->first == budget || hi == values_.begin()) return hi->second;
    auto lo = std::prev(hi);
    const double s = (std::log(budget) - std::log(lo->first)) / (std::log(hi->first) - std::log(lo->first));
    return std::exp((1.0 - s) * std::log(lo->second) + s * std::log(hi->second));
}

double eta_cap_for_budget(int budget) { return EtaCapTable()(budget); }

TokenPosterior posterior_for_draft(const Sequence& draft, double gamma_vis, const EmpiricalDistribution& data,
                                   const EmbeddingTable& emb) {
    if (!(gamma_vis > 0.0)) throw Error(Errc::invalid_snr, "gamma_vis must be > 0");
    const Matrix z = gamma_vis * emb.encode(draft);  // the mask row is zero
    return token_marginals(z, data, emb);
}

Token sample_top_p(const Eigen::Ref<const RowVector>& probs, double top_p, Rng& rng) {
    const auto nucleus = nucleus_order(probs, top_p);
    double mass = 0.0;
    for (int v : nucleus) mass += probs(v);
    double u = uniform01(rng) * mass;
    for (int v : nucleus) {
        u -= probs(v);
        if (u < 0.0) return v;
    }
    return nucleus.back();
}

std::vector<Sequence> RefinementTrace::drafts() const {
    std::vector<Sequence> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.after);
    return out;
}

int RefinementTrace::first_match(const Sequence& target) const {
    for (const auto& s : steps)
        if (s.after == target) return s.step;
    return -1;
}

RefinementTrace run_refinement(const Sequence& initial, const RefinementConfig& config, std::uint64_t seed,
                               const EmpiricalDistribution& data, const EmbeddingTable& emb) {
    const auto& sched = config.schedule;
    sched.validate();
    const int T = config.budget;
    if (T < 1) throw Error(Errc::invalid_budget, "step budget must be >= 1, got " + std::to_string(T));
    if (!(config.top_p > 0.0 && config.top_p <= 1.0)) throw Error(Errc::invalid_config, "top_p: must lie in (0, 1]");
    if (!(config.gamma_vis > 0.0)) throw Error(Errc::invalid_config, "gamma_vis: must be > 0");
    const int L = data.length();
    const Token mask = emb.mask_id();
    if (static_cast<int>(initial.size()) != L)
        throw Error(Errc::dimension, "draft length " + std::to_string(initial.size()) + " != " + std::to_string(L));
    for (Token v : initial)
        if (v < 0 || v > mask) throw Error(Errc::invalid_config, "draft token out of range: " + std::to_string(v));

    Rng rng = make_rng(seed, kRefineStream);
    RefinementTrace trace;
    trace.vocab_size = emb.vocab_size();
    trace.budget = T;
    trace.top_p = config.top_p;
    trace.initial = initial;

    const auto masked_count = [&](const Sequence& d) {
        return static_cast<int>(std::count(d.begin(), d.end(), mask));
    };
    const double r0 = static_cast<double>(masked_count(initial)) / L;

    Sequence draft = initial;
    for (int k = 0; k < T; ++k) {
        StepRecord rec;
        rec.step = k;
        rec.t = 1.0 - static_cast<double>(k) / T;
        rec.before = draft;
        rec.mask_ratio = static_cast<double>(masked_count(draft)) / L;
        rec.alpha = sched.alpha(rec.t, T);

        const TokenPosterior post = posterior_for_draft(draft, config.gamma_vis, data, emb);
        rec.posterior = post.probs;
        rec.max_prob = post.probs.rowwise().maxCoeff();
        rec.confidence = Vector::Constant(L, std::numeric_limits<double>::quiet_NaN());
        std::vector<int> visible;
        for (int i = 0; i < L; ++i)
            if (draft[i] != mask) {
                visible.push_back(i);
                rec.confidence(i) = post.probs(i, draft[i]);
            }

        switch (sched.strategy) {
        case RemaskStrategy::none: break;
        case RemaskStrategy::cap_loop:
            if (sched.in_loop(rec.t) && !visible.empty()) {
                rec.q = remask_probability(rec.t, rec.mask_ratio, sched);
                for (int i : visible)
                    if (uniform01(rng) < rec.q) rec.remasked.push_back(i);
            }
            break;
        case RemaskStrategy::confidence: {
            std::vector<int> low;
            for (int i : visible)
                if (rec.confidence(i) < sched.confidence_threshold) low.push_back(i);
            std::stable_sort(low.begin(), low.end(),
                             [&](int a, int b) { return rec.confidence(a) < rec.confidence(b); });
            if (static_cast<int>(low.size()) > sched.max_remask_per_step) low.resize(sched.max_remask_per_step);
            std::sort(low.begin(), low.end());
            rec.remasked = std::move(low);
            break;
        }
        }

        for (int i : rec.remasked) draft[i] = mask;
        const TokenPosterior current =
            rec.remasked.empty() ? post : posterior_for_draft(draft, config.gamma_vis, data, emb);

        if (sched.refresh_unmasked)
            for (int i : rec.remasked) {
                draft[i] = sample_top_p(current.probs.row(i), config.top_p, rng);
                rec.revealed.push_back(i);
            }

        // positions remasked this step wait for the next one unless refreshed
        std::vector<int> candidates;
        for (int i = 0; i < L; ++i)
            if (draft[i] == mask && !std::binary_search(rec.remasked.begin(), rec.remasked.end(), i))
                candidates.push_back(i);
        const double t_next = 1.0 - static_cast<double>(k + 1) / T;
        const int target = k + 1 == T ? 0 : round_count(sched.mask_ratio(t_next, r0) * L);
        const int excess = masked_count(draft) - target;
        const int n_reveal = std::clamp(excess, 0, static_cast<int>(candidates.size()));
        for (int j = 0; j < n_reveal; ++j) {
            std::uniform_int_distribution<int> pick(j, static_cast<int>(candidates.size()) - 1);
            std::swap(candidates[j], candidates[pick(rng)]);
        }
        candidates.resize(n_reveal);
        std::sort(candidates.begin(), candidates.end());
        for (int i : candidates) {
            draft[i] = sample_top_p(current.probs.row(i), config.top_p, rng);
            rec.revealed.push_back(i);
        }
        std::sort(rec.revealed.begin(), rec.revealed.end());

        rec.after = draft;
        trace.steps.push_back(std::move(rec));
    }
    return trace;
}

Sequence parse_draft(const std::string& text, int vocab_size) {
    if (vocab_size < 1 || vocab_size > 26)
        throw Error(Errc::invalid_config, "letter drafts need a vocabulary of 1..26 tokens");
    Sequence out;
    out.reserve(text.size());
    for (char c : text) {
        if (c == '_') {
            out.push_back(vocab_size);
        } else if (c >= 'A' && c < 'A' + vocab_size) {
            out.push_back(c - 'A');
        } else {
            throw Error(Errc::invalid_config, std::string("draft: invalid character '") + c + "'");
        }
    }
    return out;
}

std::string format_draft(const Sequence& draft, int vocab_size) {
    std::string out;
    if (vocab_size <= 26) {
        for (Token v : draft) out.push_back(v == vocab_size ? '_' : static_cast<char>('A' + v));
        return out;
    }
    for (std::size_t i = 0; i < draft.size(); ++i) {
        if (i) out.push_back(' ');
        out += draft[i] == vocab_size ? "_" : std::to_string(draft[i]);
    }
    return out;
}

Fig5Preset::Fig5Preset() {
    config.budget = 10;
    config.gamma_vis = 10.0;
    config.top_p = 0.9;
    config.schedule.strategy = RemaskStrategy::confidence;
}

} // namespace dsl
