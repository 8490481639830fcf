#pragma once

#include "callgate/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace callgate {

// TopK sparse autoencoder:
//   z = TopK(W_enc (h - b_pre)),  h_hat = W_dec z + b_pre,
// with W_dec columns kept at unit L2 norm. Weights are stored in float32
// (matching the checkpoint format); all arithmetic runs in double.
struct SaeModel {
    int d = 0; // input width
    int M = 0; // dictionary size
    int K = 0; // sparsity

    Eigen::MatrixXf w_enc; // M x d
    Eigen::VectorXf b_pre; // d
    Eigen::MatrixXf w_dec; // d x M, unit-norm columns

    void validate() const; // throws ConfigError on bad dims / K out of range
};

// Keeps the K largest entries by value (ties broken toward the lowest index),
// clamps kept entries at >= 0, zeroes the rest.
Eigen::VectorXd topk_sparsify(const Eigen::VectorXd& pre, int K);

// Indices the sparsifier would keep, in ascending order.
std::vector<int> topk_indices(const Eigen::VectorXd& pre, int K);

Eigen::VectorXd encode(const SaeModel& model, const Eigen::VectorXf& h);
Eigen::VectorXd decode(const SaeModel& model, const Eigen::VectorXd& z);

// Dense n x M code matrix for every record. Desk-scale only; memory is n*M doubles.
Eigen::MatrixXd encode_all(const SaeModel& model, const ActivationDataset& dataset);
Eigen::MatrixXd encode_matrix(const SaeModel& model, const Eigen::MatrixXf& h_rows);

// Scales every decoder column to unit norm; throws NumericError naming the
// index of any zero-norm column.
void renormalize_decoder(SaeModel& model);

Eigen::VectorXd decoder_norms(const SaeModel& model);

struct SaeDiagnostics {
    double recon_mse = 0.0;                 // mean squared reconstruction error per record
    double fraction_variance_explained = 0.0;
    int dead_feature_count = 0;             // features never active (z_j > 0) on the dataset
};

SaeDiagnostics diagnostics(const SaeModel& model, const ActivationDataset& dataset);

// Checkpoint: magic "SAE1", version u16, d/M/K u32, then float32 payloads
// (b_pre, W_enc row-major, W_dec row-major). Bit-exact round trip.
void save_checkpoint(const SaeModel& model, const std::string& path);
SaeModel load_checkpoint(const std::string& path);

} // namespace callgate
