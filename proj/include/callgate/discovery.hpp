#pragma once

#include "callgate/dataset.hpp"
#include "callgate/sae.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace callgate {

enum class Side : std::uint8_t { Call = 0, NoCall = 1 };

const char* to_string(Side s);

struct FeatureScore {
    int feature_id = 0;
    double delta_ce = 0.0; // mean activation gap, target minus reference
    double auroc = 0.5;    // directional AUROC toward the target side
};

struct FeatureSet {
    Side side = Side::Call;
    std::vector<int> ids;             // ranked: AUROC desc, gap desc, id asc
    std::vector<FeatureScore> scores; // aligned with ids
    int cutoff_r = 0;
};

// Per-feature mean activation gap E_target[z_j] - E_reference[z_j].
// labels: 1 = call decision, 0 = no-call decision; target/reference swap for
// the NoCall side. Throws DataError if a class is empty.
Eigen::VectorXd mean_gap(const Eigen::MatrixXd& z, const std::vector<std::uint8_t>& labels,
                         Side target_side);

// Per-feature P(z_j(target) > z_j(reference)), ties 0.5, via the rank statistic.
Eigen::VectorXd directional_auroc(const Eigen::MatrixXd& z, const std::vector<std::uint8_t>& labels,
                                  Side target_side);

// Intersection of the top-R features by gap and by AUROC (both descending,
// ties toward the lower id). May be empty; that is a warning, not an error.
FeatureSet rank_intersection(const Eigen::VectorXd& gaps, const Eigen::VectorXd& aurocs, int R,
                             Side side);

struct DiscoveryResult {
    FeatureSet call_set;
    FeatureSet nocall_set;
    // Call-side scores for every feature (NoCall scores are the exact mirror:
    // gap negated, AUROC complemented).
    Eigen::VectorXd call_gaps;
    Eigen::VectorXd call_aurocs;
};

// Runs both ranking passes over the dataset's call/no-call decision sets.
DiscoveryResult discover(const ActivationDataset& dataset, const SaeModel& sae, int R);

} // namespace callgate
