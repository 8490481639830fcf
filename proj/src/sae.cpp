#include "callgate/sae.hpp"
#include "callgate/common.hpp"
#include "callgate/sae_grad.hpp"

#include <cstring>
#include <fstream>

namespace callgate {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'E', '1'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw DataError(std::string("checkpoint truncated while reading ") + what);
    }
    return v;
}

} // namespace

void SaeModel::validate() const {
    if (d <= 0 || M <= 0) {
        throw ConfigError("sae: dimensions must be positive (d=" + std::to_string(d) +
                          ", M=" + std::to_string(M) + ")");
    }
    if (K < 1 || K > M) {
        throw ConfigError("sae: K must satisfy 1 <= K <= M, got K=" + std::to_string(K) +
                          ", M=" + std::to_string(M));
    }
    if (w_enc.rows() != M || w_enc.cols() != d || w_dec.rows() != d || w_dec.cols() != M ||
        b_pre.size() != d) {
        throw ConfigError("sae: weight shapes do not match declared dimensions");
    }
}

std::vector<int> topk_indices(const Eigen::VectorXd& pre, int K) {
    if (K < 1 || K > pre.size()) {
        throw ConfigError("topk: K must satisfy 1 <= K <= M, got K=" + std::to_string(K) +
                          ", M=" + std::to_string(pre.size()));
    }
    return topk_select<double>(pre, K);
}

Eigen::VectorXd topk_sparsify(const Eigen::VectorXd& pre, int K) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(pre.size());
    for (int j : topk_indices(pre, K)) {
        z[j] = std::max(pre[j], 0.0);
    }
    return z;
}

Eigen::VectorXd encode(const SaeModel& model, const Eigen::VectorXf& h) {
    if (h.size() != model.d) {
        throw DataError("encode: input width " + std::to_string(h.size()) + " != model width " +
                        std::to_string(model.d));
    }
    const Eigen::VectorXd centered = h.cast<double>() - model.b_pre.cast<double>();
    const Eigen::VectorXd pre = model.w_enc.cast<double>() * centered;
    return topk_sparsify(pre, model.K);
}

Eigen::VectorXd decode(const SaeModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.M) {
        throw DataError("decode: code width " + std::to_string(z.size()) + " != dictionary size " +
                        std::to_string(model.M));
    }
    return model.w_dec.cast<double>() * z + model.b_pre.cast<double>();
}

Eigen::MatrixXd encode_matrix(const SaeModel& model, const Eigen::MatrixXf& h_rows) {
    if (h_rows.cols() != model.d) {
        throw DataError("encode: input width " + std::to_string(h_rows.cols()) +
                        " != model width " + std::to_string(model.d));
    }
    const Eigen::MatrixXd w_enc = model.w_enc.cast<double>();
    const Eigen::VectorXd b_pre = model.b_pre.cast<double>();
    const Eigen::Index n = h_rows.rows();

    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, model.M);
    constexpr Eigen::Index kBlock = 2048;
    Eigen::VectorXd pre_row(model.M);
    for (Eigen::Index start = 0; start < n; start += kBlock) {
        const Eigen::Index rows = std::min(kBlock, n - start);
        Eigen::MatrixXd centered =
            h_rows.middleRows(start, rows).cast<double>().rowwise() - b_pre.transpose();
        Eigen::MatrixXd pre = centered * w_enc.transpose(); // rows x M
        for (Eigen::Index i = 0; i < rows; ++i) {
            pre_row = pre.row(i).transpose();
            for (int j : topk_select<double>(pre_row, model.K)) {
                if (pre_row[j] > 0.0) z(start + i, j) = pre_row[j];
            }
        }
    }
    return z;
}

Eigen::MatrixXd encode_all(const SaeModel& model, const ActivationDataset& dataset) {
    return encode_matrix(model, to_matrix(dataset));
}

void renormalize_decoder(SaeModel& model) {
    for (int j = 0; j < model.M; ++j) {
        const double norm = model.w_dec.col(j).cast<double>().norm();
        if (!(norm > 0.0)) {
            throw NumericError("decoder column " + std::to_string(j) + " has zero norm");
        }
        model.w_dec.col(j) = (model.w_dec.col(j).cast<double>() / norm).cast<float>();
    }
}

Eigen::VectorXd decoder_norms(const SaeModel& model) {
    Eigen::VectorXd norms(model.M);
    for (int j = 0; j < model.M; ++j) {
        norms[j] = model.w_dec.col(j).cast<double>().norm();
    }
    return norms;
}

SaeDiagnostics diagnostics(const SaeModel& model, const ActivationDataset& dataset) {
    if (dataset.records.empty()) {
        throw DataError("diagnostics: dataset is empty");
    }
    const Eigen::MatrixXf h = to_matrix(dataset);
    const Eigen::MatrixXd z = encode_matrix(model, h);
    const Eigen::MatrixXd w_dec = model.w_dec.cast<double>();
    const Eigen::VectorXd b_pre = model.b_pre.cast<double>();

    const Eigen::MatrixXd hd = h.cast<double>();
    const Eigen::RowVectorXd mean_h = hd.colwise().mean();

    double sq_err = 0.0;
    double sq_var = 0.0;
    std::vector<std::uint8_t> ever_active(static_cast<std::size_t>(model.M), 0);
    for (Eigen::Index i = 0; i < hd.rows(); ++i) {
        Eigen::VectorXd recon = b_pre;
        for (int j = 0; j < model.M; ++j) {
            const double zj = z(i, j);
            if (zj > 0.0) {
                recon += zj * w_dec.col(j);
                ever_active[static_cast<std::size_t>(j)] = 1;
            }
        }
        sq_err += (hd.row(i).transpose() - recon).squaredNorm();
        sq_var += (hd.row(i) - mean_h).squaredNorm();
    }

    SaeDiagnostics out;
    out.recon_mse = sq_err / static_cast<double>(hd.rows());
    if (sq_var > 1e-300) {
        out.fraction_variance_explained = 1.0 - sq_err / sq_var;
    } else {
        out.fraction_variance_explained = (sq_err <= 1e-12) ? 1.0 : 0.0;
    }
    for (auto a : ever_active) {
        if (!a) ++out.dead_feature_count;
    }
    return out;
}

void save_checkpoint(const SaeModel& model, const std::string& path) {
    model.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open checkpoint for writing: " + path);
    }
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint32_t>(model.d));
    write_pod(os, static_cast<std::uint32_t>(model.M));
    write_pod(os, static_cast<std::uint32_t>(model.K));
    os.write(reinterpret_cast<const char*>(model.b_pre.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(model.d)));
    // Row-major payloads.
    for (int r = 0; r < model.M; ++r) {
        for (int c = 0; c < model.d; ++c) {
            write_pod(os, model.w_enc(r, c));
        }
    }
    for (int r = 0; r < model.d; ++r) {
        for (int c = 0; c < model.M; ++c) {
            write_pod(os, model.w_dec(r, c));
        }
    }
    if (!os) {
        throw DataError("I/O failure while writing checkpoint: " + path);
    }
}

SaeModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open checkpoint: " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const auto version = read_pod<std::uint16_t>(is, "version");
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    SaeModel model;
    model.d = static_cast<int>(read_pod<std::uint32_t>(is, "d"));
    model.M = static_cast<int>(read_pod<std::uint32_t>(is, "M"));
    model.K = static_cast<int>(read_pod<std::uint32_t>(is, "K"));
    if (model.d <= 0 || model.M <= 0 || model.K < 1 || model.K > model.M) {
        throw DataError("checkpoint declares invalid dimensions (d=" + std::to_string(model.d) +
                        ", M=" + std::to_string(model.M) + ", K=" + std::to_string(model.K) + ")");
    }
    model.b_pre.resize(model.d);
    is.read(reinterpret_cast<char*>(model.b_pre.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(model.d)));
    model.w_enc.resize(model.M, model.d);
    for (int r = 0; r < model.M; ++r) {
        for (int c = 0; c < model.d; ++c) {
            model.w_enc(r, c) = read_pod<float>(is, "encoder weights");
        }
    }
    model.w_dec.resize(model.d, model.M);
    for (int r = 0; r < model.d; ++r) {
        for (int c = 0; c < model.M; ++c) {
            model.w_dec(r, c) = read_pod<float>(is, "decoder weights");
        }
    }
    if (!is) {
        throw DataError("checkpoint truncated: " + path);
    }
    return model;
}

} // namespace callgate
