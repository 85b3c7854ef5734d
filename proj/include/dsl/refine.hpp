#pragma once

// Discrete masked-refinement samplers over the exact posterior: MDLM-style
// reveal, ReMDM capped remasking inside a loop window, and
// confidence-driven remasking.

#include "dsl/corpus.hpp"
#include "dsl/denoiser.hpp"
#include "dsl/random.hpp"
#include "dsl/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dsl {

enum class RemaskStrategy { none, confidence, cap_loop };

RemaskStrategy parse_strategy(const std::string& name);
const char* to_string(RemaskStrategy strategy) noexcept;

struct RemaskSchedule {
    RemaskStrategy strategy = RemaskStrategy::cap_loop;
    double eta_cap = 0.01;
    double t_on = 0.55;
    double t_off = 0.05;
    double alpha_loop = 0.9;
    bool refresh_unmasked = true;
    /// alpha(1) and alpha(1/T) of the log-linear noise schedule.
    double alpha_start = 0.01;
    double alpha_end = 0.99;
    /// Confidence strategy: remask visible positions whose posterior mass
    /// on their current token is below the threshold, lowest first.
    double confidence_threshold = 0.5;
    int max_remask_per_step = 2;

    void validate() const;

    /// Remasking window t_off <= t < t_on.
    bool in_loop(double t) const noexcept { return t >= t_off && t < t_on; }

    /// Noise schedule alpha(t): alpha_loop inside the window, log-linear in t
    /// from alpha(1) = alpha_start to alpha(1/T) = alpha_end elsewhere.
    double alpha(double t, int budget) const;

    /// Target masked fraction at time t for a run that starts with
    /// `initial_ratio` of its positions masked. Linear in t, except that
    /// cap-loop holds r at min(initial_ratio, 1 - alpha_loop) across the
    /// window and anneals to 0 after it.
    double mask_ratio(double t, double initial_ratio) const;
};

/// q(t) = min(1, eta(t) / (1 - r_t)), eta(t) = eta_cap alpha / (1 - alpha),
/// with alpha held at alpha_loop; zero outside the loop window. Throws
/// undefined_ratio when r_t = 1 inside the window.
double remask_probability(double t, double r_t, const RemaskSchedule& schedule);

/// eta_cap per step budget; log-linear in log T between listed budgets,
/// clamped outside. Throws invalid_budget for T < 1.
class EtaCapTable {
public:
    EtaCapTable();  ///< 128: 0.010, 256: 0.008, 512: 0.007, 1024: 0.002
    explicit EtaCapTable(std::map<int, double> values);

    double operator()(int budget) const;
    const std::map<int, double>& values() const noexcept { return values_; }

private:
    std::map<int, double> values_;
};

double eta_cap_for_budget(int budget);

/// z_i = gamma_vis enc(draft_i) for visible positions, z_i = 0 for masked ones.
TokenPosterior posterior_for_draft(const Sequence& draft, double gamma_vis, const EmpiricalDistribution& data,
                                   const EmbeddingTable& emb);

struct StepRecord {
    int step = 0;
    double t = 0.0;
    double mask_ratio = 0.0;  ///< realized |M_k| / L before the step
    double alpha = 0.0;
    double q = 0.0;
    Sequence before;
    Sequence after;
    std::vector<int> remasked;
    std::vector<int> revealed;  ///< includes refreshed remasked positions
    Matrix posterior;           ///< L x K, computed from `before`
    Vector max_prob;
    Vector confidence;          ///< posterior mass on the visible token, NaN if masked
};

struct RefinementTrace {
    int vocab_size = 0;
    int budget = 0;
    double top_p = 0.9;
    Sequence initial;
    std::vector<StepRecord> steps;

    Token mask_id() const noexcept { return vocab_size; }
    const Sequence& final_draft() const { return steps.empty() ? initial : steps.back().after; }
    /// x^(0), ..., x^(T-1): the draft after every step
    std::vector<Sequence> drafts() const;
    /// first step after which the draft equals `target`, or -1
    int first_match(const Sequence& target) const;
};

struct RefinementConfig {
    int budget = 10;  ///< T
    RemaskSchedule schedule;
    double gamma_vis = 10.0;
    double top_p = 0.9;
};

/// Steps k = 0..T-1 at t_k = 1 - k/T. Each step computes the posterior of
/// the current draft, remasks visible positions per the strategy, then
/// reveals masked positions so that the masked count follows the mask-ratio
/// schedule at t_{k+1}. Tokens are drawn from top-p truncated marginals of
/// the posterior recomputed after remasking.
RefinementTrace run_refinement(const Sequence& initial, const RefinementConfig& config, std::uint64_t seed,
                               const EmpiricalDistribution& data, const EmbeddingTable& emb);

/// Sample from the top-p nucleus (boundary ties included) of `probs`, renormalized.
Token sample_top_p(const Eigen::Ref<const RowVector>& probs, double top_p, Rng& rng);

/// Draft strings: 'A'.. for tokens, '_' for mask (vocabularies up to 26).
Sequence parse_draft(const std::string& text, int vocab_size);
std::string format_draft(const Sequence& draft, int vocab_size);

/// The cyclic inpainting toy: truth ABCDEFG, draft __CDBFF, confidence
/// remasking, T = 10, gamma_vis = 10, top-p 0.9.
struct Fig5Preset {
    int vocab_size = 7;
    std::string truth = "ABCDEFG";
    std::string initial = "__CDBFF";
    std::uint64_t seed = 0;
    RefinementConfig config;

    Fig5Preset();
};

} // namespace dsl
