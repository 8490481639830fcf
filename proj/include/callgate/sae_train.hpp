#pragma once

#include "callgate/sae.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace callgate {

struct SaeHyper {
    double learning_rate = 5e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    int batch_tokens = 16384;
    double warmup_frac = 0.10;
    double stable_frac = 0.80;
    double decay_frac = 0.10;
    int steps_stage1 = 0;
    int steps_stage2 = 0;
    int dead_window = 1000; // trailing steps over which end-of-run dead features are counted

    void validate() const; // throws ConfigError
};

struct LossTrace {
    std::vector<double> loss; // one entry per optimizer step, both stages
    int stage_boundary = 0;   // index of the first stage-2 step (== steps_stage1)
};

struct TrainResult {
    SaeModel model;
    LossTrace trace;
    int dead_features_end = 0; // features inactive over the trailing dead_window steps
};

// Warmup-stable-decay multiplier for step s of a stage with total steps.
double lr_schedule(int step, int total_steps, const SaeHyper& hyper);

// Two-stage AdamW training of a TopK SAE on row-major sample matrices.
// stage2 may be empty (single-stage); an empty stage1 is an error. The decoder
// is renormalized to unit columns after every optimizer step. Deterministic
// given the seed. Throws NumericError naming the step if the loss goes
// non-finite.
TrainResult train_sae(const Eigen::MatrixXf& stage1, const Eigen::MatrixXf& stage2, int M, int K,
                      const SaeHyper& hyper, std::uint64_t seed);

} // namespace callgate
