#include "callgate/discovery.hpp"
#include "callgate/common.hpp"
#include "callgate/stats.hpp"

#include <algorithm>
#include <numeric>

namespace callgate {

namespace {

// Top-R ids under (score desc, id asc).
std::vector<int> top_r(const Eigen::VectorXd& score, int R) {
    std::vector<int> idx(static_cast<std::size_t>(score.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(R));
    return idx;
}

void check_classes(const std::vector<std::uint8_t>& labels) {
    std::size_t pos = 0;
    for (auto y : labels) pos += (y != 0);
    if (pos == 0 || pos == labels.size()) {
        throw DataError("feature scoring: both decision classes must be nonempty");
    }
}

} // namespace

const char* to_string(Side s) {
    return s == Side::Call ? "call" : "no_call";
}

Eigen::VectorXd mean_gap(const Eigen::MatrixXd& z, const std::vector<std::uint8_t>& labels,
                         Side target_side) {
    if (static_cast<std::size_t>(z.rows()) != labels.size()) {
        throw DataError("mean_gap: activations and labels differ in length");
    }
    check_classes(labels);

    Eigen::VectorXd sum_pos = Eigen::VectorXd::Zero(z.cols());
    Eigen::VectorXd sum_neg = Eigen::VectorXd::Zero(z.cols());
    double n_pos = 0, n_neg = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != 0) {
            sum_pos += z.row(i).transpose();
            n_pos += 1;
        } else {
            sum_neg += z.row(i).transpose();
            n_neg += 1;
        }
    }
    Eigen::VectorXd gap = sum_pos / n_pos - sum_neg / n_neg;
    if (target_side == Side::NoCall) gap = -gap;
    return gap;
}

Eigen::VectorXd directional_auroc(const Eigen::MatrixXd& z, const std::vector<std::uint8_t>& labels,
                                  Side target_side) {
    if (static_cast<std::size_t>(z.rows()) != labels.size()) {
        throw DataError("directional_auroc: activations and labels differ in length");
    }
    check_classes(labels);

    const std::size_t n = labels.size();
    std::vector<double> scores(n);
    Eigen::VectorXd out(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = z(static_cast<Eigen::Index>(i), j);
        }
        const double a = rank_auroc(scores, labels);
        out[j] = (target_side == Side::Call) ? a : 1.0 - a;
    }
    return out;
}

FeatureSet rank_intersection(const Eigen::VectorXd& gaps, const Eigen::VectorXd& aurocs, int R,
                             Side side) {
    const int M = static_cast<int>(gaps.size());
    if (aurocs.size() != M) {
        throw DataError("rank_intersection: score vectors differ in length");
    }
    if (R < 1) {
        throw ConfigError("rank_intersection: R must be >= 1, got " + std::to_string(R));
    }
    if (R > M) {
        throw ConfigError("rank_intersection: R=" + std::to_string(R) + " exceeds feature count " +
                          std::to_string(M));
    }

    const auto by_gap = top_r(gaps, R);
    const auto by_auroc = top_r(aurocs, R);
    std::vector<std::uint8_t> in_gap(static_cast<std::size_t>(M), 0);
    for (int id : by_gap) in_gap[static_cast<std::size_t>(id)] = 1;

    FeatureSet out;
    out.side = side;
    out.cutoff_r = R;
    for (int id : by_auroc) {
        if (in_gap[static_cast<std::size_t>(id)]) out.ids.push_back(id);
    }
    std::sort(out.ids.begin(), out.ids.end(), [&](int a, int b) {
        if (aurocs[a] != aurocs[b]) return aurocs[a] > aurocs[b];
        if (gaps[a] != gaps[b]) return gaps[a] > gaps[b];
        return a < b;
    });
    for (int id : out.ids) {
        out.scores.push_back({id, gaps[id], aurocs[id]});
    }
    return out;
}

DiscoveryResult discover(const ActivationDataset& dataset, const SaeModel& sae, int R) {
    const auto call_idx = dataset.call_indices();
    const auto nocall_idx = dataset.nocall_indices();
    if (call_idx.empty() || nocall_idx.empty()) {
        throw DataError("discover: dataset needs nonempty call and no-call decision sets");
    }

    // Only the two decision classes enter the scoring sets.
    ActivationDataset scored;
    scored.d = dataset.d;
    std::vector<std::uint8_t> labels;
    for (std::size_t i : call_idx) {
        scored.records.push_back(dataset.records[i]);
        labels.push_back(1);
    }
    for (std::size_t i : nocall_idx) {
        scored.records.push_back(dataset.records[i]);
        labels.push_back(0);
    }

    const Eigen::MatrixXd z = encode_all(sae, scored);

    DiscoveryResult out;
    out.call_gaps = mean_gap(z, labels, Side::Call);
    out.call_aurocs = directional_auroc(z, labels, Side::Call);
    out.call_set = rank_intersection(out.call_gaps, out.call_aurocs, R, Side::Call);
    // The no-call pass is the exact mirror of the call pass.
    out.nocall_set = rank_intersection(-out.call_gaps,
                                       (1.0 - out.call_aurocs.array()).matrix(), R, Side::NoCall);
    return out;
}

} // namespace callgate
