#include "callgate/sae_train.hpp"
#include "callgate/common.hpp"
#include "callgate/sae_grad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace callgate {

namespace {

// Epoch-shuffled batch sampler over an in-memory sample matrix.
class BatchSampler {
public:
    BatchSampler(const Eigen::MatrixXd& data, int batch, std::mt19937_64& rng)
        : data_(data), batch_(std::min<Eigen::Index>(batch, data.rows())), rng_(rng),
          order_(static_cast<std::size_t>(data.rows())) {
        std::iota(order_.begin(), order_.end(), 0);
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    Eigen::MatrixXd next() {
        Eigen::MatrixXd out(batch_, data_.cols());
        for (Eigen::Index i = 0; i < batch_; ++i) {
            if (cursor_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                cursor_ = 0;
            }
            out.row(i) = data_.row(static_cast<Eigen::Index>(order_[cursor_++]));
        }
        return out;
    }

private:
    const Eigen::MatrixXd& data_;
    Eigen::Index batch_;
    std::mt19937_64& rng_;
    std::vector<Eigen::Index> order_;
    std::size_t cursor_ = 0;
};

struct AdamState {
    Eigen::MatrixXd m_enc, v_enc, m_dec, v_dec;
    Eigen::VectorXd m_pre, v_pre;
    long t = 0;
};

void adamw_update(Eigen::MatrixXd& w, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                  const Eigen::MatrixXd& g, double lr, const SaeHyper& h, double bc1, double bc2) {
    m = h.adam_beta1 * m + (1.0 - h.adam_beta1) * g;
    v = h.adam_beta2 * v + (1.0 - h.adam_beta2) * g.array().square().matrix();
    w.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + h.adam_eps) +
                       h.weight_decay * w.array());
}

void adamw_update(Eigen::VectorXd& w, Eigen::VectorXd& m, Eigen::VectorXd& v,
                  const Eigen::VectorXd& g, double lr, const SaeHyper& h, double bc1, double bc2) {
    m = h.adam_beta1 * m + (1.0 - h.adam_beta1) * g;
    v = h.adam_beta2 * v + (1.0 - h.adam_beta2) * g.array().square().matrix();
    w.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + h.adam_eps) +
                       h.weight_decay * w.array());
}

void renormalize_columns(Eigen::MatrixXd& w_dec) {
    for (Eigen::Index j = 0; j < w_dec.cols(); ++j) {
        const double norm = w_dec.col(j).norm();
        if (!(norm > 0.0)) {
            throw NumericError("decoder column " + std::to_string(j) +
                               " collapsed to zero norm during training");
        }
        w_dec.col(j) /= norm;
    }
}

} // namespace

void SaeHyper::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("sae.learning_rate must be > 0, got " + std::to_string(learning_rate));
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("sae: adam betas must lie in [0, 1)");
    }
    if (batch_tokens < 1) {
        throw ConfigError("sae.batch_tokens must be >= 1, got " + std::to_string(batch_tokens));
    }
    if (!(warmup_frac >= 0.0 && stable_frac >= 0.0 && decay_frac >= 0.0)) {
        throw ConfigError("sae: schedule fractions must be nonnegative");
    }
    if (std::abs(warmup_frac + stable_frac + decay_frac - 1.0) > 1e-9) {
        throw ConfigError("sae: schedule fractions must sum to 1, got " +
                          std::to_string(warmup_frac + stable_frac + decay_frac));
    }
    if (steps_stage1 < 0 || steps_stage2 < 0) {
        throw ConfigError("sae: step counts must be nonnegative");
    }
    if (dead_window < 1) {
        throw ConfigError("sae.dead_window must be >= 1, got " + std::to_string(dead_window));
    }
}

double lr_schedule(int step, int total_steps, const SaeHyper& hyper) {
    const int warmup = static_cast<int>(std::llround(hyper.warmup_frac * total_steps));
    const int decay = static_cast<int>(std::llround(hyper.decay_frac * total_steps));
    if (warmup > 0 && step < warmup) {
        return static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    if (decay > 0 && step >= total_steps - decay) {
        return static_cast<double>(total_steps - step) / static_cast<double>(decay);
    }
    return 1.0;
}

TrainResult train_sae(const Eigen::MatrixXf& stage1, const Eigen::MatrixXf& stage2, int M, int K,
                      const SaeHyper& hyper, std::uint64_t seed) {
    hyper.validate();
    if (stage1.rows() == 0) {
        throw DataError("train: stage-1 stream is empty");
    }
    const int d = static_cast<int>(stage1.cols());
    if (K < 1 || K > M) {
        throw ConfigError("train: K must satisfy 1 <= K <= M, got K=" + std::to_string(K) +
                          ", M=" + std::to_string(M));
    }
    const bool two_stage = stage2.rows() > 0 && hyper.steps_stage2 > 0;
    if (two_stage && stage2.cols() != d) {
        throw DataError("train: stage-2 width " + std::to_string(stage2.cols()) +
                        " != stage-1 width " + std::to_string(d));
    }
    if (hyper.steps_stage1 < 1) {
        throw ConfigError("train: steps_stage1 must be >= 1");
    }

    const Eigen::MatrixXd data1 = stage1.cast<double>();
    const Eigen::MatrixXd data2 = two_stage ? stage2.cast<double>() : Eigen::MatrixXd();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double init_scale = 1.0 / std::sqrt(static_cast<double>(d));

    Eigen::MatrixXd w_enc(M, d);
    for (int r = 0; r < M; ++r) {
        for (int c = 0; c < d; ++c) w_enc(r, c) = init_scale * gauss(rng);
    }
    Eigen::MatrixXd w_dec(d, M);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < M; ++c) w_dec(r, c) = init_scale * gauss(rng);
    }
    renormalize_columns(w_dec);

    BatchSampler sampler1(data1, hyper.batch_tokens, rng);
    Eigen::MatrixXd first_batch = sampler1.next();
    Eigen::VectorXd b_pre = first_batch.colwise().mean();

    AdamState st;
    st.m_enc = Eigen::MatrixXd::Zero(M, d);
    st.v_enc = Eigen::MatrixXd::Zero(M, d);
    st.m_dec = Eigen::MatrixXd::Zero(d, M);
    st.v_dec = Eigen::MatrixXd::Zero(d, M);
    st.m_pre = Eigen::VectorXd::Zero(d);
    st.v_pre = Eigen::VectorXd::Zero(d);

    const int total_steps = hyper.steps_stage1 + (two_stage ? hyper.steps_stage2 : 0);
    TrainResult result;
    result.trace.loss.reserve(static_cast<std::size_t>(total_steps));
    result.trace.stage_boundary = hyper.steps_stage1;
    std::vector<int> last_active(static_cast<std::size_t>(M), -1);

    BatchSampler sampler2(two_stage ? data2 : data1, hyper.batch_tokens, rng);
    bool reuse_first = true;
    int global_step = 0;

    for (int stage = 0; stage < (two_stage ? 2 : 1); ++stage) {
        const int stage_steps = (stage == 0) ? hyper.steps_stage1 : hyper.steps_stage2;
        BatchSampler& sampler = (stage == 0) ? sampler1 : sampler2;
        for (int s = 0; s < stage_steps; ++s, ++global_step) {
            Eigen::MatrixXd batch;
            if (reuse_first) {
                batch = std::move(first_batch);
                reuse_first = false;
            } else {
                batch = sampler.next();
            }

            auto grads = reconstruction_gradients<double>(w_enc, w_dec, b_pre, batch, K);
            if (!std::isfinite(grads.loss)) {
                throw NumericError("train: non-finite loss at step " + std::to_string(global_step));
            }
            result.trace.loss.push_back(grads.loss);
            for (const auto& sample : grads.active) {
                for (const auto& [j, z] : sample) {
                    last_active[static_cast<std::size_t>(j)] = global_step;
                }
            }

            const double lr = hyper.learning_rate * lr_schedule(s, stage_steps, hyper);
            st.t += 1;
            const double bc1 = 1.0 - std::pow(hyper.adam_beta1, static_cast<double>(st.t));
            const double bc2 = 1.0 - std::pow(hyper.adam_beta2, static_cast<double>(st.t));
            adamw_update(w_enc, st.m_enc, st.v_enc, grads.g_enc, lr, hyper, bc1, bc2);
            adamw_update(w_dec, st.m_dec, st.v_dec, grads.g_dec, lr, hyper, bc1, bc2);
            adamw_update(b_pre, st.m_pre, st.v_pre, grads.g_pre, lr, hyper, bc1, bc2);
            renormalize_columns(w_dec);
        }
    }

    const int window_start = std::max(0, total_steps - hyper.dead_window);
    for (int j = 0; j < M; ++j) {
        if (last_active[static_cast<std::size_t>(j)] < window_start) ++result.dead_features_end;
    }

    result.model.d = d;
    result.model.M = M;
    result.model.K = K;
    result.model.w_enc = w_enc.cast<float>();
    result.model.w_dec = w_dec.cast<float>();
    result.model.b_pre = b_pre.cast<float>();
    // Cast to float32 storage can nudge column norms off unit by ~1e-7.
    renormalize_decoder(result.model);
    return result;
}

} // namespace callgate
