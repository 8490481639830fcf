#pragma once

#include "callgate/dataset.hpp"
#include "callgate/discovery.hpp"
#include "callgate/sae.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace callgate {

struct ProbeModel {
    Eigen::VectorXd w;
    double b = 0.0;
    double l2 = 0.0;
    std::vector<int> feature_ids; // empty for raw-residual probes
    bool raw_input = false;
    bool converged = false;
    int iterations = 0;
    std::vector<double> objective_trace; // accepted objective values, non-increasing
};

// L2-penalized logistic regression by damped Newton iterations; the intercept
// is unpenalized. Converged when the gradient infinity norm drops below tol;
// otherwise returns the best iterate with converged=false. Throws DataError on
// single-class input.
ProbeModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<std::uint8_t>& y, double l2,
                        double tol = 1e-8, int max_iter = 100);

Eigen::VectorXd predict_logit(const ProbeModel& model, const Eigen::MatrixXd& x);
Eigen::VectorXd predict_proba(const ProbeModel& model, const Eigen::MatrixXd& x);

// Rank AUROC of scores against binary labels, ties 0.5.
double auroc(const Eigen::VectorXd& scores, const std::vector<std::uint8_t>& y);

struct ProbeCell {
    double mean_auroc = 0.0;
    double std_auroc = 0.0;
};

struct ProbeCurve {
    std::vector<int> counts;
    std::vector<ProbeCell> discovered; // per count
    std::vector<ProbeCell> random;     // per count, ids resampled per fold
    ProbeCell raw;                     // count-independent upper-bound line
    int folds = 0;
};

// 5-fold (by default) cross-validated probe AUROC for three inputs: top-k
// discovered features, k count-matched random features excluding the
// discovered ids, and the raw residual vector. Features are standardized with
// train-fold statistics. Stratified folds, deterministic given seed.
ProbeCurve cv_curves(const ActivationDataset& dataset, const SaeModel& sae,
                     const FeatureSet& features, const std::vector<int>& counts, int folds,
                     std::uint64_t seed);

} // namespace callgate
