#pragma once

#include "callgate/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace callgate {

// Planted gated-decision process: activations are sparse combinations of
// orthonormal call/no-call atoms, and the emitted decision is sampled from a
// logistic in the latent evidence margin with a known slope and offset. The
// planted offset is what the downstream diagnosis must recover.
struct SurrogateConfig {
    int d = 64;
    int n_call_atoms = 1;
    int n_nocall_atoms = 1;
    int n_records = 40000;
    double beta_true = 2.0;
    double beta0_true = 1.0;
    double noise_sigma = 0.05;
    double evidence_scale = 0.6;
    double correct_threshold = 1.25;
    std::uint64_t seed = 1;

    // Throws ConfigError naming the violated bound.
    void validate() const;
};

struct GroundTruth {
    Eigen::MatrixXd call_atoms;      // d x n_call_atoms, orthonormal columns
    Eigen::MatrixXd nocall_atoms;    // d x n_nocall_atoms
    Eigen::VectorXd call_evidence;   // per-record mean latent evidence, call side
    Eigen::VectorXd nocall_evidence; // per-record mean latent evidence, no-call side
    std::vector<std::uint8_t> required_call; // 1 iff the correct decision is CALL

    Eigen::Index size() const { return call_evidence.size(); }
    double margin(Eigen::Index i) const { return call_evidence[i] - nocall_evidence[i]; }
    GroundTruth subset(const std::vector<std::size_t>& indices) const;
};

// Orthonormal columns from a QR factorization of a seeded Gaussian matrix.
// Requires count <= d.
Eigen::MatrixXd orthonormal_atoms(int d, int count, std::uint64_t seed);

// Deterministic given config.seed. Behavior labels are sampled as CALL with
// probability sigma(beta_true * margin + beta0_true); correctness compares the
// emitted decision against the planted threshold rule.
std::pair<ActivationDataset, GroundTruth> generate(const SurrogateConfig& config);

// sigma(beta_true * margin + beta0_true).
double decision_probability(const SurrogateConfig& config, double margin);

// Re-samples decisions from margins recomputed by projecting the supplied
// (possibly steered) vectors onto the planted atoms. Correctness labels are
// refreshed against the planted required decisions.
ActivationDataset resample_decisions(const ActivationDataset& dataset, const GroundTruth& gt,
                                     const SurrogateConfig& config, std::uint64_t seed);

// Mean projection margin of one vector onto the planted atoms.
double planted_margin(const GroundTruth& gt, const Eigen::VectorXf& h);

// Binary ground-truth sidecar ("GTRU" format), float32 payload.
void write_ground_truth(const GroundTruth& gt, const SurrogateConfig& config,
                        const std::string& path);
std::pair<GroundTruth, SurrogateConfig> read_ground_truth(const std::string& path);

} // namespace callgate
