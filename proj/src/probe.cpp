#include "callgate/probe.hpp"
#include "callgate/common.hpp"
#include "callgate/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace callgate {

namespace {

double objective(const Eigen::MatrixXd& x, const std::vector<std::uint8_t>& y,
                 const Eigen::VectorXd& w, double b, double l2) {
    double nll = 0.0;
    const Eigen::VectorXd logits = x * w + Eigen::VectorXd::Constant(x.rows(), b);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double t = logits[i];
        nll += log1p_exp(t) - (y[static_cast<std::size_t>(i)] ? t : 0.0);
    }
    return nll + 0.5 * l2 * w.squaredNorm();
}

struct FoldAssignment {
    std::vector<int> fold_of; // per record
};

// Stratified fold assignment: per class, seeded shuffle then round-robin deal.
FoldAssignment stratified_folds(const std::vector<std::uint8_t>& y, int folds,
                                std::mt19937_64& rng) {
    FoldAssignment out;
    out.fold_of.assign(y.size(), -1);
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if ((y[i] != 0) == (cls == 1)) idx.push_back(i);
        }
        if (static_cast<int>(idx.size()) < folds) {
            throw DataError("cv: class " + std::string(cls ? "call" : "no_call") + " has " +
                            std::to_string(idx.size()) + " records, fewer than " +
                            std::to_string(folds) + " folds");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.fold_of[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
        }
    }
    return out;
}

// Train-fold standardization; zero-variance columns pass through unscaled.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        s.mean = x.colwise().mean();
        s.scale.resize(x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double var =
                (x.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(x.rows());
            const double sd = std::sqrt(var);
            s.scale[j] = sd > 1e-12 ? sd : 1.0;
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
};

double fold_auroc(const Eigen::MatrixXd& x_train, const std::vector<std::uint8_t>& y_train,
                  const Eigen::MatrixXd& x_test, const std::vector<std::uint8_t>& y_test,
                  double l2) {
    const auto std = Standardizer::fit(x_train);
    const ProbeModel model = fit_logistic(std.apply(x_train), y_train, l2);
    const Eigen::VectorXd scores = predict_logit(model, std.apply(x_test));
    return auroc(scores, y_test);
}

} // namespace

ProbeModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<std::uint8_t>& y, double l2,
                        double tol, int max_iter) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (static_cast<std::size_t>(n) != y.size()) {
        throw DataError("fit_logistic: rows and labels differ in length");
    }
    if (n < 2) {
        throw DataError("fit_logistic: need at least 2 rows");
    }
    if (l2 < 0.0) {
        throw ConfigError("fit_logistic: l2 must be >= 0, got " + std::to_string(l2));
    }
    std::size_t n_pos = 0;
    for (auto v : y) n_pos += (v != 0);
    if (n_pos == 0 || n_pos == y.size()) {
        throw DataError("fit_logistic: both classes must be present");
    }

    ProbeModel model;
    model.w = Eigen::VectorXd::Zero(p);
    model.b = 0.0;
    model.l2 = l2;

    double obj = objective(x, y, model.w, model.b, l2);
    model.objective_trace.push_back(obj);

    Eigen::VectorXd grad_w(p);
    Eigen::VectorXd probs(n), residual(n), s(n);
    Eigen::MatrixXd hess(p + 1, p + 1);
    Eigen::VectorXd grad_full(p + 1), step(p + 1);

    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd logits = x * model.w + Eigen::VectorXd::Constant(n, model.b);
        for (Eigen::Index i = 0; i < n; ++i) {
            probs[i] = sigmoid(logits[i]);
            residual[i] = probs[i] - (y[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
            s[i] = std::max(probs[i] * (1.0 - probs[i]), 1e-12);
        }
        grad_w = x.transpose() * residual + l2 * model.w;
        const double grad_b = residual.sum();

        double grad_inf = std::abs(grad_b);
        for (Eigen::Index j = 0; j < p; ++j) grad_inf = std::max(grad_inf, std::abs(grad_w[j]));
        if (grad_inf < tol) {
            model.converged = true;
            break;
        }

        hess.topLeftCorner(p, p) = x.transpose() * s.asDiagonal() * x;
        hess.topLeftCorner(p, p).diagonal().array() += l2;
        hess.topRightCorner(p, 1) = x.transpose() * s;
        hess.bottomLeftCorner(1, p) = hess.topRightCorner(p, 1).transpose();
        hess(p, p) = s.sum();

        grad_full.head(p) = grad_w;
        grad_full[p] = grad_b;

        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        step = -ldlt.solve(grad_full);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            // Ill-conditioned system: retry with a tiny ridge.
            hess.diagonal().array() += 1e-8;
            step = -hess.ldlt().solve(grad_full);
            if (!step.allFinite()) {
                throw NumericError("fit_logistic: Newton system unsolvable at iteration " +
                                   std::to_string(iter));
            }
        }

        // Damping: halve until the penalized objective does not increase.
        double t = 1.0;
        bool accepted = false;
        for (int halvings = 0; halvings < 40; ++halvings) {
            const Eigen::VectorXd w_new = model.w + t * step.head(p);
            const double b_new = model.b + t * step[p];
            const double obj_new = objective(x, y, w_new, b_new, l2);
            if (obj_new <= obj + 1e-14 * std::abs(obj)) {
                model.w = w_new;
                model.b = b_new;
                obj = obj_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        model.iterations = iter + 1;
        if (!accepted) break; // stalled; report best iterate with converged=false
        model.objective_trace.push_back(obj);
    }
    return model;
}

Eigen::VectorXd predict_logit(const ProbeModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.w.size()) {
        throw DataError("predict: input width " + std::to_string(x.cols()) +
                        " != model width " + std::to_string(model.w.size()));
    }
    return x * model.w + Eigen::VectorXd::Constant(x.rows(), model.b);
}

Eigen::VectorXd predict_proba(const ProbeModel& model, const Eigen::MatrixXd& x) {
    Eigen::VectorXd logits = predict_logit(model, x);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits[i] = sigmoid(logits[i]);
    return logits;
}

double auroc(const Eigen::VectorXd& scores, const std::vector<std::uint8_t>& y) {
    std::vector<double> s(scores.data(), scores.data() + scores.size());
    return rank_auroc(s, y);
}

ProbeCurve cv_curves(const ActivationDataset& dataset, const SaeModel& sae,
                     const FeatureSet& features, const std::vector<int>& counts, int folds,
                     std::uint64_t seed) {
    if (folds < 2) {
        throw ConfigError("cv: folds must be >= 2, got " + std::to_string(folds));
    }
    const auto call_idx = dataset.call_indices();
    const auto nocall_idx = dataset.nocall_indices();
    if (call_idx.empty() || nocall_idx.empty()) {
        throw DataError("cv: dataset needs nonempty call and no-call decision sets");
    }

    ActivationDataset scored;
    scored.d = dataset.d;
    std::vector<std::uint8_t> y;
    for (std::size_t i : call_idx) {
        scored.records.push_back(dataset.records[i]);
        y.push_back(1);
    }
    for (std::size_t i : nocall_idx) {
        scored.records.push_back(dataset.records[i]);
        y.push_back(0);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(scored.records.size());

    for (int k : counts) {
        if (k < 1 || k > sae.M) {
            throw ConfigError("cv: count " + std::to_string(k) + " outside [1, M]");
        }
        if (k > static_cast<int>(features.ids.size())) {
            throw DataError("cv: count " + std::to_string(k) + " exceeds the " +
                            std::to_string(features.ids.size()) + " available discovered features");
        }
        if (k > sae.M - static_cast<int>(features.ids.size())) {
            // Random features are drawn from the non-discovered remainder.
            throw DataError("cv: count " + std::to_string(k) +
                            " exceeds the pool of non-discovered features");
        }
    }

    const Eigen::MatrixXd z = encode_all(sae, scored);
    const Eigen::MatrixXd h = to_matrix(scored).cast<double>();

    std::mt19937_64 rng(derive_seed(seed, "probe-folds"));
    const auto assignment = stratified_folds(y, folds, rng);
    std::mt19937_64 feature_rng(derive_seed(seed, "probe-random-features"));

    std::vector<int> pool;
    {
        std::vector<std::uint8_t> is_discovered(static_cast<std::size_t>(sae.M), 0);
        for (int id : features.ids) is_discovered[static_cast<std::size_t>(id)] = 1;
        for (int j = 0; j < sae.M; ++j) {
            if (!is_discovered[static_cast<std::size_t>(j)]) pool.push_back(j);
        }
    }

    ProbeCurve curve;
    curve.counts = counts;
    curve.folds = folds;

    auto split_rows = [&](const Eigen::MatrixXd& src, int fold, const std::vector<int>& cols)
        -> std::array<std::pair<Eigen::MatrixXd, std::vector<std::uint8_t>>, 2> {
        std::vector<Eigen::Index> train_rows, test_rows;
        for (Eigen::Index i = 0; i < n; ++i) {
            (assignment.fold_of[static_cast<std::size_t>(i)] == fold ? test_rows : train_rows)
                .push_back(i);
        }
        auto gather = [&](const std::vector<Eigen::Index>& rows) {
            Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                              cols.empty() ? src.cols() : static_cast<Eigen::Index>(cols.size()));
            std::vector<std::uint8_t> yy(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (cols.empty()) {
                    m.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
                } else {
                    for (std::size_t c = 0; c < cols.size(); ++c) {
                        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                            src(rows[r], cols[c]);
                    }
                }
                yy[r] = y[static_cast<std::size_t>(rows[r])];
            }
            return std::make_pair(std::move(m), std::move(yy));
        };
        return {gather(train_rows), gather(test_rows)};
    };

    // Raw-residual upper bound, once per fold.
    std::vector<double> raw_aurocs;
    for (int f = 0; f < folds; ++f) {
        auto [train, test] = split_rows(h, f, {});
        const double l2 = 1.0 / static_cast<double>(train.first.rows());
        raw_aurocs.push_back(fold_auroc(train.first, train.second, test.first, test.second, l2));
    }
    curve.raw = {mean(raw_aurocs), sample_stddev(raw_aurocs)};

    for (int k : counts) {
        std::vector<int> top_ids(features.ids.begin(), features.ids.begin() + k);
        std::vector<double> disc_aurocs, rand_aurocs;
        for (int f = 0; f < folds; ++f) {
            {
                auto [train, test] = split_rows(z, f, top_ids);
                const double l2 = 1.0 / static_cast<double>(train.first.rows());
                disc_aurocs.push_back(
                    fold_auroc(train.first, train.second, test.first, test.second, l2));
            }
            {
                std::vector<int> sampled = pool;
                std::shuffle(sampled.begin(), sampled.end(), feature_rng);
                sampled.resize(static_cast<std::size_t>(k));
                auto [train, test] = split_rows(z, f, sampled);
                const double l2 = 1.0 / static_cast<double>(train.first.rows());
                rand_aurocs.push_back(
                    fold_auroc(train.first, train.second, test.first, test.second, l2));
            }
        }
        curve.discovered.push_back({mean(disc_aurocs), sample_stddev(disc_aurocs)});
        curve.random.push_back({mean(rand_aurocs), sample_stddev(rand_aurocs)});
    }
    return curve;
}

} // namespace callgate
