#pragma once

// Decoding diagnostics (uncertainty, entropy, nucleus size, remask ratio,
// change rate), rewrite counts, and reliability / ECE calibration metrics.

#include "dsl/corpus.hpp"
#include "dsl/denoiser.hpp"
#include "dsl/refine.hpp"
#include "dsl/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace dsl {

struct StepDiagnostics {
    double t = 0.0;
    double u = 0.0;      ///< mean 1 - max_v p_i(v)
    double H = 0.0;      ///< mean entropy, nats
    double k = 0.0;      ///< mean top-p nucleus size
    double r = 0.0;      ///< |remask set| / L
    double delta = 0.0;  ///< fraction of positions that changed
};

/// Size of the smallest set with cumulative mass >= p; probabilities tied
/// with the boundary one are all included.
int nucleus_size(const Eigen::Ref<const RowVector>& probs, double p);

StepDiagnostics step_diagnostics(const TokenPosterior& posterior, const Sequence& prev, const Sequence& next,
                                 const std::vector<int>& remask_set, double p);

/// One record per refinement step, with t taken from the step.
std::vector<StepDiagnostics> trace_diagnostics(const RefinementTrace& trace);

struct RewriteCounts {
    std::vector<int> counts;  ///< R_i
    double mean = 0.0;
};

/// R_i = sum_{k>=1} 1[x_i^(k) != x_i^(k-1)] over the stored drafts, mask
/// counted as a symbol. Throws trace_too_short with fewer than two drafts.
RewriteCounts rewrite_counts(const std::vector<Sequence>& drafts);
RewriteCounts rewrite_counts(const RefinementTrace& trace);

/// Steps (by index into `steps`) with r >= r_floor and delta <= delta_ceiling.
std::vector<int> over_refinement_flags(const std::vector<StepDiagnostics>& steps, double r_floor = 0.05,
                                       double delta_ceiling = 0.01);
std::vector<int> over_refinement_flags(const RefinementTrace& trace, double r_floor = 0.05,
                                       double delta_ceiling = 0.01);

struct ScoredToken {
    double confidence = 0.0;
    bool correct = false;
};

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    double confidence = 0.0;  ///< mean confidence, 0 for empty bins
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
    std::size_t total = 0;
};

/// Equal-width bins on [0, 1]; confidence 1 falls in the last bin.
CalibrationReport calibration_report(const std::vector<ScoredToken>& scored, int n_bins = 15);

/// Maps an L x d noisy state to L x K token probabilities.
using ProbabilityProvider = std::function<Matrix(const Matrix& z)>;

ProbabilityProvider exact_provider(const EmpiricalDistribution& data, const EmbeddingTable& emb);

/// Raise every row to `power` and renormalize.
ProbabilityProvider tempered(ProbabilityProvider base, double power);

struct TeacherForcingOptions {
    double gamma = 5.0;
    std::size_t n_sequences = 20000;
    int threads = 1;
};

/// Draw x ~ P, corrupt at a fixed SNR, score the arg-max token of the
/// provider against the truth at every position. Draw n uses its own
/// sub-seed, so the scored set is the same for any provider and thread count.
std::vector<ScoredToken> teacher_forcing_scores(const EmpiricalDistribution& data, const EmbeddingTable& emb,
                                                const ProbabilityProvider& provider,
                                                const TeacherForcingOptions& options, std::uint64_t seed);

void write_diagnostics_csv(std::ostream& out, const std::vector<StepDiagnostics>& steps);
void write_reliability_csv(std::ostream& out, const CalibrationReport& report);

} // namespace dsl
