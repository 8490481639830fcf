#pragma once

#include "callgate/dataset.hpp"
#include "callgate/discovery.hpp"
#include "callgate/sae.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace callgate {

// Fitted logistic decision model P(call | m) = sigma(beta * m + beta0).
// The neutral boundary m_star = -beta0 / beta is meaningful only for beta > 0.
struct MarginModel {
    double beta = 0.0;
    double beta0 = 0.0;
    double m_star = 0.0;
    double margin_mean = 0.0;
    double margin_std = 0.0;
    std::vector<int> call_ids;
    std::vector<int> nocall_ids;
    int n_fit = 0;
    bool converged = false;
    bool valid = false; // beta > 0
};

struct MarginComponents {
    double a_call = 0.0;
    double a_nocall = 0.0;
    double m = 0.0;
};

struct GeometryRecord {
    double a_call = 0.0;
    double a_nocall = 0.0;
    double m = 0.0;
    Behavior decision = Behavior::ToolCall;
    Correctness correctness = Correctness::Unknown;
};

struct GeometryExport {
    std::vector<GeometryRecord> records;
    // sigma(beta * (m_std * margin_std) + beta0) sampled on the standardized
    // margin grid [-4, 4] step 0.1.
    std::vector<std::pair<double, double>> curve;
    MarginModel model;
};

struct FailureContrast {
    std::vector<int> feature_ids;
    Eigen::VectorXd mean_false_call;  // per-feature mean z on wrongly emitted calls
    Eigen::VectorXd mean_true_nocall; // per-feature mean z on correct no-calls
    Eigen::VectorXd difference;       // false_call minus true_nocall
    std::size_t n_false_call = 0;
    std::size_t n_true_nocall = 0;
};

// Norm-weighted signed activation margin: per-side means of ||d_j|| z_j.
// Reduces to the plain mean-activation margin when decoder norms are 1.
MarginComponents margin(const Eigen::VectorXd& z, const std::vector<int>& call_ids,
                        const std::vector<int>& nocall_ids, const Eigen::VectorXd& decoder_norms);

// Margins for every record of the dataset over the given basis.
Eigen::VectorXd margins_for(const ActivationDataset& dataset, const SaeModel& sae,
                            const std::vector<int>& call_ids, const std::vector<int>& nocall_ids);

// 1-D unpenalized logistic MLE of (beta, beta0) from margins and binary
// decisions (1 = call). Requires n >= 10 and both classes present.
MarginModel fit_bias_model(const Eigen::VectorXd& margins, const std::vector<std::uint8_t>& decisions,
                           double l2 = 0.0, double tol = 1e-8);

// -beta0 / beta; throws NumericError if the model is invalid (beta <= 0).
double neutral_boundary(const MarginModel& model);

// Per-example activation geometry over the call/no-call decision sets, plus
// the standardized fitted decision curve.
GeometryExport geometry_export(const ActivationDataset& dataset, const SaeModel& sae,
                               const FeatureSet& call_set, const FeatureSet& nocall_set);

// Per-feature mean activations contrasting wrongly emitted calls against
// correct no-calls. Requires correctness labels.
FailureContrast failure_contrast(const ActivationDataset& dataset, const SaeModel& sae,
                                 const std::vector<int>& feature_ids);

} // namespace callgate
