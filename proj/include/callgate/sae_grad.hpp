#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

namespace callgate {

// Value-TopK selection: indices of the K largest entries, ties broken toward
// the lowest index. Returned ascending. Shared by encode and the trainer so
// the two paths cannot drift apart.
template <typename Scalar>
std::vector<int> topk_select(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v, int K) {
    std::vector<int> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::nth_element(idx.begin(), idx.begin() + (K - 1), idx.end(), [&](int a, int b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(K));
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Gradient kernel for the reconstruction loss
//   L = (1/n) sum_i || h_i - h_hat_i ||^2
// with straight-through selection: the TopK support is treated as constant and
// gradients flow only through kept features with positive pre-activation.
// Templated so the trainer (double) and the finite-difference check share one
// implementation.
template <typename Scalar>
struct SaeBatchGradients {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g_enc; // M x d
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g_dec; // d x M
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g_pre;              // d
    Scalar loss = 0;
    std::vector<std::vector<std::pair<int, Scalar>>> active;     // per sample: (feature, z)
};

template <typename Scalar>
SaeBatchGradients<Scalar> reconstruction_gradients(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& w_enc, // M x d
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& w_dec, // d x M
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b_pre,              // d
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& batch, // n x d
    int K) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    const Eigen::Index n = batch.rows();
    const Eigen::Index d = batch.cols();
    const Eigen::Index M = w_enc.rows();
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);

    SaeBatchGradients<Scalar> out;
    out.g_enc = Mat::Zero(M, d);
    out.g_dec = Mat::Zero(d, M);
    out.g_pre = Vec::Zero(d);
    out.active.resize(static_cast<std::size_t>(n));

    Mat centered = batch.rowwise() - b_pre.transpose(); // n x d
    Mat pre = centered * w_enc.transpose();             // n x M

    Scalar loss = 0;
    Vec pre_row(M);
    Vec err(d);

    for (Eigen::Index i = 0; i < n; ++i) {
        pre_row = pre.row(i).transpose();
        auto& act = out.active[static_cast<std::size_t>(i)];
        act.clear();
        for (int j : topk_select(pre_row, K)) {
            if (pre_row[j] > Scalar(0)) act.emplace_back(j, pre_row[j]);
        }

        // err = h_hat - h = sum_j z_j d_j - (h - b_pre)
        err = -centered.row(i).transpose();
        for (const auto& [j, z] : act) {
            err += z * w_dec.col(j);
        }
        loss += err.squaredNorm();

        // dL/dz_j = 2 e . d_j on the kept, positive support.
        for (const auto& [j, z] : act) {
            const Scalar dldz = Scalar(2) * inv_n * w_dec.col(j).dot(err);
            out.g_dec.col(j) += (Scalar(2) * inv_n * z) * err;
            out.g_enc.row(j) += dldz * centered.row(i);
            out.g_pre -= dldz * w_enc.row(j).transpose();
        }
        out.g_pre += Scalar(2) * inv_n * err;
    }

    out.loss = loss * inv_n;
    return out;
}

} // namespace callgate
