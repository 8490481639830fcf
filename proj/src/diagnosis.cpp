#include "callgate/diagnosis.hpp"
#include "callgate/common.hpp"
#include "callgate/probe.hpp"
#include "callgate/stats.hpp"

#include <cmath>

namespace callgate {

MarginComponents margin(const Eigen::VectorXd& z, const std::vector<int>& call_ids,
                        const std::vector<int>& nocall_ids, const Eigen::VectorXd& decoder_norms) {
    if (call_ids.empty() || nocall_ids.empty()) {
        throw DataError("margin: both feature sides must be nonempty");
    }
    MarginComponents out;
    for (int j : call_ids) {
        out.a_call += decoder_norms[j] * z[j];
    }
    out.a_call /= static_cast<double>(call_ids.size());
    for (int j : nocall_ids) {
        out.a_nocall += decoder_norms[j] * z[j];
    }
    out.a_nocall /= static_cast<double>(nocall_ids.size());
    out.m = out.a_call - out.a_nocall;
    return out;
}

Eigen::VectorXd margins_for(const ActivationDataset& dataset, const SaeModel& sae,
                            const std::vector<int>& call_ids, const std::vector<int>& nocall_ids) {
    const Eigen::VectorXd norms = decoder_norms(sae);
    const Eigen::MatrixXd z = encode_all(sae, dataset);
    Eigen::VectorXd out(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        out[i] = margin(z.row(i).transpose(), call_ids, nocall_ids, norms).m;
    }
    return out;
}

MarginModel fit_bias_model(const Eigen::VectorXd& margins, const std::vector<std::uint8_t>& decisions,
                           double l2, double tol) {
    if (margins.size() < 10) {
        throw DataError("fit_bias_model: need at least 10 examples, got " +
                        std::to_string(margins.size()));
    }
    Eigen::MatrixXd x(margins.size(), 1);
    x.col(0) = margins;
    const ProbeModel fit = fit_logistic(x, decisions, l2, tol);

    MarginModel out;
    out.beta = fit.w[0];
    out.beta0 = fit.b;
    out.valid = out.beta > 0.0;
    out.m_star = out.valid ? -out.beta0 / out.beta : std::nan("");
    out.margin_mean = margins.mean();
    out.margin_std = std::sqrt((margins.array() - out.margin_mean).square().sum() /
                               static_cast<double>(margins.size()));
    out.n_fit = static_cast<int>(margins.size());
    out.converged = fit.converged;
    return out;
}

double neutral_boundary(const MarginModel& model) {
    if (!(model.beta > 0.0)) {
        throw NumericError("neutral_boundary: model invalid (beta = " + std::to_string(model.beta) +
                           " <= 0)");
    }
    return -model.beta0 / model.beta;
}

GeometryExport geometry_export(const ActivationDataset& dataset, const SaeModel& sae,
                               const FeatureSet& call_set, const FeatureSet& nocall_set) {
    const auto call_idx = dataset.call_indices();
    const auto nocall_idx = dataset.nocall_indices();
    if (call_idx.empty() && nocall_idx.empty()) {
        throw DataError("geometry_export: no call or no-call decision records");
    }

    ActivationDataset scored;
    scored.d = dataset.d;
    std::vector<std::uint8_t> decisions;
    for (std::size_t i : call_idx) {
        scored.records.push_back(dataset.records[i]);
        decisions.push_back(1);
    }
    for (std::size_t i : nocall_idx) {
        scored.records.push_back(dataset.records[i]);
        decisions.push_back(0);
    }

    const Eigen::VectorXd norms = decoder_norms(sae);
    const Eigen::MatrixXd z = encode_all(sae, scored);

    GeometryExport out;
    Eigen::VectorXd margins(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const auto c = margin(z.row(i).transpose(), call_set.ids, nocall_set.ids, norms);
        margins[i] = c.m;
        const auto& rec = scored.records[static_cast<std::size_t>(i)];
        out.records.push_back({c.a_call, c.a_nocall, c.m, rec.behavior, rec.correctness});
    }

    out.model = fit_bias_model(margins, decisions);
    out.model.call_ids = call_set.ids;
    out.model.nocall_ids = nocall_set.ids;

    for (int i = -40; i <= 40; ++i) {
        const double m_std = 0.1 * static_cast<double>(i);
        const double p = sigmoid(out.model.beta * (m_std * out.model.margin_std) + out.model.beta0);
        out.curve.emplace_back(m_std, p);
    }
    return out;
}

FailureContrast failure_contrast(const ActivationDataset& dataset, const SaeModel& sae,
                                 const std::vector<int>& feature_ids) {
    bool any_known = false;
    for (const auto& rec : dataset.records) {
        if (rec.correctness != Correctness::Unknown) {
            any_known = true;
            break;
        }
    }
    if (!any_known) {
        throw DataError("failure_contrast: correctness labels are all unknown");
    }

    ActivationDataset subset;
    subset.d = dataset.d;
    std::vector<std::uint8_t> is_false_call;
    for (const auto& rec : dataset.records) {
        if (rec.correctness == Correctness::FalseCall) {
            subset.records.push_back(rec);
            is_false_call.push_back(1);
        } else if (rec.correctness == Correctness::TrueNocall) {
            subset.records.push_back(rec);
            is_false_call.push_back(0);
        }
    }

    FailureContrast out;
    out.feature_ids = feature_ids;
    for (auto f : is_false_call) {
        if (f) {
            ++out.n_false_call;
        } else {
            ++out.n_true_nocall;
        }
    }
    if (out.n_false_call == 0 || out.n_true_nocall == 0) {
        throw DataError("failure_contrast: need both wrongly emitted calls and correct no-calls");
    }

    const Eigen::MatrixXd z = encode_all(sae, subset);
    const auto k = static_cast<Eigen::Index>(feature_ids.size());
    out.mean_false_call = Eigen::VectorXd::Zero(k);
    out.mean_true_nocall = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        auto& dst = is_false_call[static_cast<std::size_t>(i)] ? out.mean_false_call
                                                               : out.mean_true_nocall;
        for (Eigen::Index c = 0; c < k; ++c) {
            dst[c] += z(i, feature_ids[static_cast<std::size_t>(c)]);
        }
    }
    out.mean_false_call /= static_cast<double>(out.n_false_call);
    out.mean_true_nocall /= static_cast<double>(out.n_true_nocall);
    out.difference = out.mean_false_call - out.mean_true_nocall;
    return out;
}

} // namespace callgate
