#include "callgate/steering.hpp"
#include "callgate/common.hpp"
#include "callgate/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace callgate {

namespace {

void reject_test_records(const ActivationDataset& dataset, const char* where) {
    for (const auto& rec : dataset.records) {
        if (rec.split == SplitTag::Test) {
            throw DataError(std::string(where) +
                            ": calibration data contains TEST-tagged records");
        }
    }
}

std::vector<std::size_t> evaluation_indices(const ActivationDataset& dataset) {
    std::vector<std::size_t> test_idx;
    bool any_tagged = false;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto tag = dataset.records[i].split;
        if (tag != SplitTag::Unassigned) any_tagged = true;
        if (tag == SplitTag::Test) test_idx.push_back(i);
    }
    if (!any_tagged) {
        test_idx.resize(dataset.records.size());
        std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
    }
    return test_idx;
}

AccuracyMetrics score_decisions(const ActivationDataset& resampled, const GroundTruth& gt) {
    std::size_t call_req = 0, call_hit = 0, nocall_req = 0, nocall_hit = 0;
    for (std::size_t i = 0; i < resampled.records.size(); ++i) {
        const bool decided_call = resampled.records[i].behavior == Behavior::ToolCall;
        if (gt.required_call[i]) {
            ++call_req;
            call_hit += decided_call;
        } else {
            ++nocall_req;
            nocall_hit += !decided_call;
        }
    }
    if (call_req == 0 || nocall_req == 0) {
        throw DataError("evaluate: test data must contain both call-required and "
                        "no-call-required contexts");
    }
    AccuracyMetrics m;
    m.tc_acc = 100.0 * static_cast<double>(call_hit) / static_cast<double>(call_req);
    m.nc_acc = 100.0 * static_cast<double>(nocall_hit) / static_cast<double>(nocall_req);
    m.overall = 100.0 * static_cast<double>(call_hit + nocall_hit) /
                static_cast<double>(call_req + nocall_req);
    return m;
}

} // namespace

const char* to_string(InterventionMethod m) {
    switch (m) {
        case InterventionMethod::Init: return "init";
        case InterventionMethod::Suppress: return "suppress";
        case InterventionMethod::Promote: return "promote";
        case InterventionMethod::Amcs: return "amcs";
    }
    return "?";
}

Eigen::VectorXd attribution_gaps(const ActivationDataset& cal_dataset, const SaeModel& sae,
                                 const std::vector<int>& feature_ids) {
    reject_test_records(cal_dataset, "attribution_gaps");
    const auto call_idx = cal_dataset.call_indices();
    const auto nocall_idx = cal_dataset.nocall_indices();
    if (call_idx.empty() || nocall_idx.empty()) {
        throw DataError("attribution_gaps: both decision classes must be present");
    }

    ActivationDataset scored;
    scored.d = cal_dataset.d;
    std::vector<std::uint8_t> labels;
    for (std::size_t i : call_idx) {
        scored.records.push_back(cal_dataset.records[i]);
        labels.push_back(1);
    }
    for (std::size_t i : nocall_idx) {
        scored.records.push_back(cal_dataset.records[i]);
        labels.push_back(0);
    }
    const Eigen::MatrixXd z = encode_all(sae, scored);

    Eigen::VectorXd out(static_cast<Eigen::Index>(feature_ids.size()));
    for (std::size_t c = 0; c < feature_ids.size(); ++c) {
        double sum_call = 0.0, sum_nocall = 0.0;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            (labels[static_cast<std::size_t>(i)] ? sum_call : sum_nocall) +=
                z(i, feature_ids[c]);
        }
        out[static_cast<Eigen::Index>(c)] = sum_call / static_cast<double>(call_idx.size()) -
                                            sum_nocall / static_cast<double>(nocall_idx.size());
    }
    return out;
}

std::vector<double> gap_weights(const Eigen::VectorXd& gaps, bool* uniform_fallback) {
    if (gaps.size() == 0) {
        throw DataError("gap_weights: empty gap vector");
    }
    const double total = gaps.array().abs().sum();
    std::vector<double> w(static_cast<std::size_t>(gaps.size()));
    if (total > 0.0) {
        for (Eigen::Index j = 0; j < gaps.size(); ++j) {
            w[static_cast<std::size_t>(j)] = std::abs(gaps[j]) / total;
        }
        if (uniform_fallback) *uniform_fallback = false;
    } else {
        const double u = 1.0 / static_cast<double>(gaps.size());
        std::fill(w.begin(), w.end(), u);
        if (uniform_fallback) *uniform_fallback = true;
    }
    return w;
}

SteeringPlan calibrate(const ActivationDataset& cal_dataset, const SaeModel& sae,
                       const FeatureSet& call_set, const FeatureSet& nocall_set, int r,
                       double alpha) {
    if (r < 1) {
        throw ConfigError("calibrate: r must be >= 1, got " + std::to_string(r));
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("calibrate: alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (static_cast<int>(call_set.ids.size()) < r || static_cast<int>(nocall_set.ids.size()) < r) {
        throw DataError("calibrate: budget r=" + std::to_string(r) +
                        " exceeds available features (call " + std::to_string(call_set.ids.size()) +
                        ", no_call " + std::to_string(nocall_set.ids.size()) + ")");
    }
    reject_test_records(cal_dataset, "calibrate");

    SteeringPlan plan;
    plan.r = r;
    plan.alpha = alpha;
    plan.call_ids.assign(call_set.ids.begin(), call_set.ids.begin() + r);
    plan.nocall_ids.assign(nocall_set.ids.begin(), nocall_set.ids.begin() + r);

    // Restricted margin fit on the calibration decisions.
    const auto call_idx = cal_dataset.call_indices();
    const auto nocall_idx = cal_dataset.nocall_indices();
    if (call_idx.empty() || nocall_idx.empty()) {
        throw DataError("calibrate: both decision classes must be present");
    }
    ActivationDataset scored;
    scored.d = cal_dataset.d;
    std::vector<std::uint8_t> decisions;
    for (std::size_t i : call_idx) {
        scored.records.push_back(cal_dataset.records[i]);
        decisions.push_back(1);
    }
    for (std::size_t i : nocall_idx) {
        scored.records.push_back(cal_dataset.records[i]);
        decisions.push_back(0);
    }
    const Eigen::VectorXd margins = margins_for(scored, sae, plan.call_ids, plan.nocall_ids);
    const MarginModel fit = fit_bias_model(margins, decisions);
    plan.beta_r = fit.beta;
    plan.beta0_r = fit.beta0;

    if (!(fit.beta > 0.0)) {
        plan.skipped = true;
        return plan;
    }
    plan.delta_r = -plan.beta0_r / plan.beta_r;

    bool uniform_call = false, uniform_nocall = false;
    plan.call_weights = gap_weights(attribution_gaps(cal_dataset, sae, plan.call_ids), &uniform_call);
    plan.nocall_weights =
        gap_weights(attribution_gaps(cal_dataset, sae, plan.nocall_ids), &uniform_nocall);
    plan.uniform_weights_fallback = uniform_call || uniform_nocall;

    const Eigen::MatrixXd w_dec = sae.w_dec.cast<double>();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(sae.d);
    const double rd = static_cast<double>(r);
    for (int k = 0; k < r; ++k) {
        v += alpha * rd * plan.delta_r * plan.call_weights[static_cast<std::size_t>(k)] *
             w_dec.col(plan.call_ids[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < r; ++k) {
        v += (1.0 - alpha) * rd * (-plan.delta_r) * plan.nocall_weights[static_cast<std::size_t>(k)] *
             w_dec.col(plan.nocall_ids[static_cast<std::size_t>(k)]);
    }
    plan.vector = v.cast<float>();
    return plan;
}

Eigen::VectorXf apply_plan(const Eigen::VectorXf& h, const SteeringPlan& plan) {
    if (plan.skipped) {
        throw DataError("apply: plan for r=" + std::to_string(plan.r) +
                        " was skipped (beta_r <= 0)");
    }
    if (h.size() != plan.vector.size()) {
        throw DataError("apply: input width " + std::to_string(h.size()) +
                        " != steering vector width " + std::to_string(plan.vector.size()));
    }
    return h + plan.vector;
}

Eigen::VectorXf feature_scale(const Eigen::VectorXf& h, const SaeModel& sae,
                              const std::vector<int>& feature_ids, double factor) {
    if (factor < 0.0) {
        throw ConfigError("feature_scale: factor must be >= 0, got " + std::to_string(factor));
    }
    const Eigen::VectorXd z = encode(sae, h);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(sae.d);
    const Eigen::MatrixXd w_dec = sae.w_dec.cast<double>();
    for (int j : feature_ids) {
        if (j < 0 || j >= sae.M) {
            throw DataError("feature_scale: feature id " + std::to_string(j) + " out of range");
        }
        if (z[j] != 0.0) {
            delta += (factor - 1.0) * z[j] * w_dec.col(j);
        }
    }
    return h + delta.cast<float>();
}

ShiftStats realized_margin_shift(const SaeModel& sae, const ActivationDataset& samples,
                                 const SteeringPlan& plan) {
    if (plan.skipped) {
        throw DataError("realized_margin_shift: plan for r=" + std::to_string(plan.r) +
                        " was skipped");
    }
    if (samples.records.empty()) {
        throw DataError("realized_margin_shift: no samples");
    }
    const Eigen::VectorXd norms = decoder_norms(sae);
    std::vector<double> shifts;
    shifts.reserve(samples.records.size());
    for (const auto& rec : samples.records) {
        const Eigen::VectorXd z_before = encode(sae, rec.h);
        const Eigen::VectorXd z_after = encode(sae, apply_plan(rec.h, plan));
        const double before = margin(z_before, plan.call_ids, plan.nocall_ids, norms).m;
        const double after = margin(z_after, plan.call_ids, plan.nocall_ids, norms).m;
        shifts.push_back(after - before);
    }
    ShiftStats out;
    out.n = shifts.size();
    out.mean = mean(shifts);
    out.stddev = sample_stddev(shifts);
    out.median = median(shifts);
    return out;
}

InterventionResult evaluate(const ActivationDataset& dataset, const GroundTruth& gt,
                            const SurrogateConfig& config, const EvaluationSpec& spec) {
    if (static_cast<Eigen::Index>(dataset.records.size()) != gt.size()) {
        throw DataError("evaluate: ground truth covers " + std::to_string(gt.size()) +
                        " records but dataset has " + std::to_string(dataset.records.size()));
    }

    const auto idx = evaluation_indices(dataset);
    if (idx.empty()) {
        throw DataError("evaluate: no test records");
    }
    ActivationDataset test;
    test.d = dataset.d;
    test.provenance = dataset.provenance;
    for (std::size_t i : idx) test.records.push_back(dataset.records[i]);
    const GroundTruth gt_test = gt.subset(idx);

    InterventionResult out;
    out.method = spec.method;

    auto run = [&](const ActivationDataset& steered) {
        return score_decisions(resample_decisions(steered, gt_test, config, spec.seed), gt_test);
    };

    if (spec.method == InterventionMethod::Init) {
        out.budgets = {0};
        out.per_budget = {run(test)};
        out.mean = out.per_budget.front();
        return out;
    }

    std::vector<AccuracyMetrics> kept;
    for (std::size_t bi = 0; bi < spec.budgets.size(); ++bi) {
        const int r = spec.budgets[bi];
        ActivationDataset steered = test;
        switch (spec.method) {
            case InterventionMethod::Suppress: {
                if (!spec.sae) {
                    throw DataError("evaluate: suppress requires an SAE");
                }
                if (static_cast<int>(spec.call_set.ids.size()) < r) {
                    throw DataError("evaluate: suppress budget r=" + std::to_string(r) +
                                    " exceeds available call features");
                }
                const std::vector<int> ids(spec.call_set.ids.begin(), spec.call_set.ids.begin() + r);
                for (auto& rec : steered.records) {
                    rec.h = feature_scale(rec.h, *spec.sae, ids, spec.suppress_factor);
                }
                break;
            }
            case InterventionMethod::Promote: {
                if (!spec.sae) {
                    throw DataError("evaluate: promote requires an SAE");
                }
                if (static_cast<int>(spec.nocall_set.ids.size()) < r) {
                    throw DataError("evaluate: promote budget r=" + std::to_string(r) +
                                    " exceeds available no-call features");
                }
                const std::vector<int> ids(spec.nocall_set.ids.begin(),
                                           spec.nocall_set.ids.begin() + r);
                for (auto& rec : steered.records) {
                    rec.h = feature_scale(rec.h, *spec.sae, ids, spec.promote_factor);
                }
                break;
            }
            case InterventionMethod::Amcs: {
                const SteeringPlan* plan = nullptr;
                for (const auto& p : spec.plans) {
                    if (p.r == r) plan = &p;
                }
                if (!plan) {
                    throw DataError("evaluate: no plan for budget r=" + std::to_string(r));
                }
                if (plan->skipped) {
                    out.skipped_budgets.push_back(r);
                    continue;
                }
                for (auto& rec : steered.records) {
                    rec.h = apply_plan(rec.h, *plan);
                }
                break;
            }
            case InterventionMethod::Init:
                break;
        }
        out.budgets.push_back(r);
        out.per_budget.push_back(run(steered));
        kept.push_back(out.per_budget.back());
    }

    if (!kept.empty()) {
        for (const auto& m : kept) {
            out.mean.tc_acc += m.tc_acc;
            out.mean.nc_acc += m.nc_acc;
            out.mean.overall += m.overall;
        }
        out.mean.tc_acc /= static_cast<double>(kept.size());
        out.mean.nc_acc /= static_cast<double>(kept.size());
        out.mean.overall /= static_cast<double>(kept.size());
    }
    return out;
}

} // namespace callgate
