#pragma once

#include "callgate/dataset.hpp"
#include "callgate/diagnosis.hpp"
#include "callgate/discovery.hpp"
#include "callgate/sae.hpp"
#include "callgate/surrogate.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace callgate {

// Margin-calibrated steering plan for one feature budget r. The steering
// vector realizes the closed-form margin shift delta_r = -beta0_r / beta_r as
// a gap-weighted combination of decoder directions:
//   v_r = alpha r delta_r sum_C w_j d_j + (1-alpha) r (-delta_r) sum_N w_j d_j.
// A fit with beta_r <= 0 yields a skipped plan with no vector.
struct SteeringPlan {
    int r = 0;
    double alpha = 0.8;
    double delta_r = 0.0;
    double beta_r = 0.0;
    double beta0_r = 0.0;
    std::vector<int> call_ids;
    std::vector<int> nocall_ids;
    std::vector<double> call_weights;   // sum to 1
    std::vector<double> nocall_weights; // sum to 1
    Eigen::VectorXf vector;             // empty when skipped
    bool skipped = false;
    bool uniform_weights_fallback = false; // all attribution gaps were zero
};

enum class InterventionMethod : std::uint8_t { Init = 0, Suppress = 1, Promote = 2, Amcs = 3 };

const char* to_string(InterventionMethod m);

struct AccuracyMetrics {
    double tc_acc = 0.0;  // % of call-required contexts decided CALL
    double nc_acc = 0.0;  // % of no-call-required contexts decided NO_CALL
    double overall = 0.0; // example-weighted % correct
};

struct InterventionResult {
    InterventionMethod method = InterventionMethod::Init;
    std::vector<int> budgets;                // evaluated r values, in order
    std::vector<AccuracyMetrics> per_budget; // aligned with budgets
    std::vector<int> skipped_budgets;        // r values excluded (skipped plans)
    AccuracyMetrics mean;                    // over evaluated budgets
};

// Per-feature activation gap between call-decision and no-call-decision
// records of the calibration data. Rejects TEST-tagged records.
Eigen::VectorXd attribution_gaps(const ActivationDataset& cal_dataset, const SaeModel& sae,
                                 const std::vector<int>& feature_ids);

// w_j = |gap_j| / sum |gap_k|; all-zero gaps fall back to uniform weights.
std::vector<double> gap_weights(const Eigen::VectorXd& gaps, bool* uniform_fallback = nullptr);

// Offline calibration for budget r: restricted margin fit, closed-form shift,
// gap-weighted steering vector. Rejects TEST-tagged records.
SteeringPlan calibrate(const ActivationDataset& cal_dataset, const SaeModel& sae,
                       const FeatureSet& call_set, const FeatureSet& nocall_set, int r,
                       double alpha);

// h + v_r. Throws on skipped plans and dimension mismatch.
Eigen::VectorXf apply_plan(const Eigen::VectorXf& h, const SteeringPlan& plan);

// Scales the listed features' activations by factor in residual space:
// h' = h + sum_j (factor - 1) z_j d_j. Inactive features are unaffected.
Eigen::VectorXf feature_scale(const Eigen::VectorXf& h, const SaeModel& sae,
                              const std::vector<int>& feature_ids, double factor);

struct ShiftStats {
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

// Realized margin shift over the plan's restricted basis:
// margin(encode(h + v_r)) - margin(encode(h)) per sample.
ShiftStats realized_margin_shift(const SaeModel& sae, const ActivationDataset& samples,
                                 const SteeringPlan& plan);

struct EvaluationSpec {
    InterventionMethod method = InterventionMethod::Init;
    std::vector<int> budgets;         // for Suppress / Promote / AMCS
    std::vector<SteeringPlan> plans;  // AMCS only, one per budget
    const SaeModel* sae = nullptr;    // Suppress / Promote feature scaling
    FeatureSet call_set;              // Suppress
    FeatureSet nocall_set;            // Promote
    double suppress_factor = 0.5;
    double promote_factor = 1.5;
    std::uint64_t seed = 0;           // decision resampling seed, shared across methods
};

// Applies the intervention to the TEST-tagged records (or all records when no
// split tags are assigned), re-derives decisions through the planted decision
// process, and scores them against the required decisions.
InterventionResult evaluate(const ActivationDataset& dataset, const GroundTruth& gt,
                            const SurrogateConfig& config, const EvaluationSpec& spec);

} // namespace callgate
