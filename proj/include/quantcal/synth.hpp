#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quantcal/calibrate.hpp"
#include "quantcal/judgments.hpp"
#include "quantcal/strata.hpp"
#include "quantcal/toxmodel.hpp"

namespace quantcal {

enum class SynthGroup { pol, nonpol };

struct SynthCommunity {
    std::string name;
    std::int64_t comment_count = 0;
    double true_prevalence = 0.0;
    SynthGroup group = SynthGroup::nonpol;
};

// Score distribution over the 10 classifier-output deciles, conditional on
// the comment's true label.
struct ScoreModel {
    std::array<double, kNumStrata> given_political{};
    std::array<double, kNumStrata> given_nonpolitical{};
};

struct GlmmTruth {
    std::array<double, kGlmmFixed> beta{};
    double sigma_alpha = 0.0;
    std::int64_t replies_per_cell = 500;
};

struct SynthSpec {
    std::uint64_t seed = 1;
    std::vector<SynthCommunity> communities;
    ScoreModel score_pol;     // communities in the pol group
    ScoreModel score_nonpol;  // communities in the nonpol group
    double rater_accuracy = 0.9;
    std::optional<GlmmTruth> glmm_truth;
};

struct SynthComment {
    std::string id;
    std::string community;
    bool political = false;  // ground-truth label
    double score = 0.0;      // injected classifier output
};

struct TruthLedger {
    std::map<std::string, double> community_prevalence;  // realized label fraction
    double cumulative_prevalence = 0.0;
    std::int64_t total_comments = 0;
};

struct SynthCorpus {
    std::vector<SynthComment> comments;
    TruthLedger truth;
};

SynthCorpus generate(const SynthSpec& spec);

// Three independent per-rater Bernoulli draws with the given accuracy
// around the true label.
std::vector<RatingRecord> simulate_ratings(const std::vector<SynthComment>& sample,
                                           double rater_accuracy,
                                           std::uint64_t seed);

// Random-intercept binomial cells drawn from known parameters, for
// exercising the mixed-model fitter against ground truth.
std::pair<std::vector<CellCounts>, std::map<std::string, int>>
generate_glmm_cells(const GlmmTruth& truth, int communities, std::uint64_t seed);

struct EstimationRun {
    Calibrator cal_pol;
    Calibrator cal_nonpol;
    std::vector<SubredditEstimate> estimates;
    CumulativeEstimate cumulative;
    double naive_estimate = 0.0;  // classify-and-count at score > 0.5
};

struct EstimationConfig {
    std::int64_t budget_pol = 2000;
    std::int64_t budget_nonpol = 8000;
    std::int64_t floor = 50;
    double calibrator_threshold = 0.0;
    AggregationStrategy aggregation = AggregationStrategy::majority;
    std::uint64_t seed = 1;
    bool perfect_raters = false;  // use true labels instead of rater draws
    double rater_accuracy = 0.9;
};

// Full corrected classify-and-count pipeline on a synthetic corpus: pooled
// group profiles, Neyman allocation, simulated human ratings, calibrators,
// per-community estimates and the cumulative estimate.
EstimationRun run_estimation(const SynthCorpus& corpus, const SynthSpec& spec,
                             const EstimationConfig& cfg);

struct PipelineReport {
    double truth = 0.0;
    double corrected = 0.0;
    double naive = 0.0;
    double corrected_error = 0.0;
    double naive_error = 0.0;
    double stderr_corrected = 0.0;
    bool ci_covers_truth = false;  // truth within corrected +- 1.96 s
};

PipelineReport evaluate_pipeline(const SynthCorpus& corpus, const SynthSpec& spec,
                                 const EstimationConfig& cfg);

// Plain JSON spec file round-trip.
SynthSpec parse_synth_spec(std::istream& in);
void write_truth_ledger(std::ostream& out, const TruthLedger& truth);

}  // namespace quantcal
