#include "callgate/surrogate.hpp"
#include "callgate/common.hpp"

#include <Eigen/Dense>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace callgate {

namespace {

constexpr char kMagic[4] = {'G', 'T', 'R', 'U'};
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
        throw DataError(std::string("ground-truth file truncated while reading ") + what);
    }
    return v;
}

// Nonnegative evidence: normal(loc, scale) resampled until >= 0.
double truncated_normal(std::mt19937_64& rng, std::normal_distribution<double>& dist) {
    for (;;) {
        const double x = dist(rng);
        if (x >= 0.0) return x;
    }
}

void write_matrix_f32(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const float v = static_cast<float>(m(r, c));
            write_pod(os, v);
        }
    }
}

Eigen::MatrixXd read_matrix_f32(std::istream& is, Eigen::Index rows, Eigen::Index cols,
                                const char* what) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            m(r, c) = static_cast<double>(read_pod<float>(is, what));
        }
    }
    return m;
}

} // namespace

void SurrogateConfig::validate() const {
    if (d < 1) throw ConfigError("surrogate.d must be >= 1, got " + std::to_string(d));
    if (n_call_atoms < 1) {
        throw ConfigError("surrogate.n_call_atoms must be >= 1, got " + std::to_string(n_call_atoms));
    }
    if (n_nocall_atoms < 1) {
        throw ConfigError("surrogate.n_nocall_atoms must be >= 1, got " +
                          std::to_string(n_nocall_atoms));
    }
    if (d < n_call_atoms + n_nocall_atoms) {
        throw ConfigError("surrogate.d must be >= n_call_atoms + n_nocall_atoms (" +
                          std::to_string(d) + " < " + std::to_string(n_call_atoms + n_nocall_atoms) + ")");
    }
    if (n_records < 1) {
        throw ConfigError("surrogate.n_records must be >= 1, got " + std::to_string(n_records));
    }
    if (!(beta_true > 0.0)) {
        throw ConfigError("surrogate.beta_true must be > 0, got " + std::to_string(beta_true));
    }
    if (noise_sigma < 0.0) {
        throw ConfigError("surrogate.noise_sigma must be >= 0, got " + std::to_string(noise_sigma));
    }
    if (!(evidence_scale > 0.0)) {
        throw ConfigError("surrogate.evidence_scale must be > 0, got " +
                          std::to_string(evidence_scale));
    }
}

GroundTruth GroundTruth::subset(const std::vector<std::size_t>& indices) const {
    GroundTruth out;
    out.call_atoms = call_atoms;
    out.nocall_atoms = nocall_atoms;
    out.call_evidence.resize(static_cast<Eigen::Index>(indices.size()));
    out.nocall_evidence.resize(static_cast<Eigen::Index>(indices.size()));
    out.required_call.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(indices[k]);
        out.call_evidence[static_cast<Eigen::Index>(k)] = call_evidence[i];
        out.nocall_evidence[static_cast<Eigen::Index>(k)] = nocall_evidence[i];
        out.required_call[k] = required_call[indices[k]];
    }
    return out;
}

Eigen::MatrixXd orthonormal_atoms(int d, int count, std::uint64_t seed) {
    if (count > d) {
        throw ConfigError("orthonormal_atoms: count " + std::to_string(count) +
                          " exceeds dimension " + std::to_string(d));
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd g(d, count);
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            g(r, c) = gauss(rng);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, count);
    return q;
}

std::pair<ActivationDataset, GroundTruth> generate(const SurrogateConfig& config) {
    config.validate();

    GroundTruth gt;
    const Eigen::MatrixXd atoms =
        orthonormal_atoms(config.d, config.n_call_atoms + config.n_nocall_atoms,
                          derive_seed(config.seed, "atoms"));
    gt.call_atoms = atoms.leftCols(config.n_call_atoms);
    gt.nocall_atoms = atoms.rightCols(config.n_nocall_atoms);
    gt.call_evidence.resize(config.n_records);
    gt.nocall_evidence.resize(config.n_records);
    gt.required_call.resize(static_cast<std::size_t>(config.n_records));

    ActivationDataset ds;
    ds.d = config.d;
    ds.provenance = Provenance::Surrogate;
    ds.records.resize(static_cast<std::size_t>(config.n_records));

    std::mt19937_64 rng(derive_seed(config.seed, "records"));
    std::normal_distribution<double> evidence(config.evidence_scale, config.evidence_scale);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::VectorXd call_coef(config.n_call_atoms);
    Eigen::VectorXd nocall_coef(config.n_nocall_atoms);
    char id_buf[24];

    for (int i = 0; i < config.n_records; ++i) {
        for (int k = 0; k < config.n_call_atoms; ++k) {
            call_coef[k] = truncated_normal(rng, evidence);
        }
        for (int k = 0; k < config.n_nocall_atoms; ++k) {
            nocall_coef[k] = truncated_normal(rng, evidence);
        }
        const double a_call = call_coef.mean();
        const double a_nocall = nocall_coef.mean();
        const double margin = a_call - a_nocall;

        Eigen::VectorXd h = gt.call_atoms * call_coef + gt.nocall_atoms * nocall_coef;
        if (config.noise_sigma > 0.0) {
            for (int k = 0; k < config.d; ++k) {
                h[k] += config.noise_sigma * noise(rng);
            }
        }

        const bool emitted_call = unif(rng) < decision_probability(config, margin);
        const bool required = margin > config.correct_threshold;

        auto& rec = ds.records[static_cast<std::size_t>(i)];
        std::snprintf(id_buf, sizeof(id_buf), "ctx-%06d", i);
        rec.context_id = id_buf;
        rec.h = h.cast<float>();
        rec.behavior = emitted_call ? Behavior::ToolCall : Behavior::RequestForInfo;
        if (emitted_call) {
            rec.correctness = required ? Correctness::TrueCall : Correctness::FalseCall;
        } else {
            rec.correctness = required ? Correctness::FalseNocall : Correctness::TrueNocall;
        }

        gt.call_evidence[i] = a_call;
        gt.nocall_evidence[i] = a_nocall;
        gt.required_call[static_cast<std::size_t>(i)] = required ? 1 : 0;
    }
    return {std::move(ds), std::move(gt)};
}

double decision_probability(const SurrogateConfig& config, double margin) {
    return sigmoid(config.beta_true * margin + config.beta0_true);
}

double planted_margin(const GroundTruth& gt, const Eigen::VectorXf& h) {
    const Eigen::VectorXd hd = h.cast<double>();
    const double a_call = (gt.call_atoms.transpose() * hd).mean();
    const double a_nocall = (gt.nocall_atoms.transpose() * hd).mean();
    return a_call - a_nocall;
}

ActivationDataset resample_decisions(const ActivationDataset& dataset, const GroundTruth& gt,
                                     const SurrogateConfig& config, std::uint64_t seed) {
    if (dataset.d != config.d || gt.call_atoms.rows() != config.d) {
        throw DataError("resample_decisions: dimension mismatch between dataset, ground truth, "
                        "and config");
    }
    if (static_cast<Eigen::Index>(dataset.records.size()) != gt.size()) {
        throw DataError("resample_decisions: dataset has " + std::to_string(dataset.records.size()) +
                        " records but ground truth covers " + std::to_string(gt.size()));
    }

    ActivationDataset out = dataset;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        auto& rec = out.records[i];
        const double margin = planted_margin(gt, rec.h);
        const bool emitted_call = unif(rng) < decision_probability(config, margin);
        const bool required = gt.required_call[i] != 0;
        rec.behavior = emitted_call ? Behavior::ToolCall : Behavior::RequestForInfo;
        if (emitted_call) {
            rec.correctness = required ? Correctness::TrueCall : Correctness::FalseCall;
        } else {
            rec.correctness = required ? Correctness::FalseNocall : Correctness::TrueNocall;
        }
    }
    return out;
}

void write_ground_truth(const GroundTruth& gt, const SurrogateConfig& config,
                        const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open ground-truth file for writing: " + path);
    }
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint32_t>(config.d));
    write_pod(os, static_cast<std::uint32_t>(config.n_call_atoms));
    write_pod(os, static_cast<std::uint32_t>(config.n_nocall_atoms));
    write_pod(os, static_cast<std::uint64_t>(gt.size()));
    write_pod(os, config.beta_true);
    write_pod(os, config.beta0_true);
    write_pod(os, config.noise_sigma);
    write_pod(os, config.evidence_scale);
    write_pod(os, config.correct_threshold);
    write_pod(os, config.seed);
    write_matrix_f32(os, gt.call_atoms);
    write_matrix_f32(os, gt.nocall_atoms);
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
        write_pod(os, static_cast<float>(gt.call_evidence[i]));
        write_pod(os, static_cast<float>(gt.nocall_evidence[i]));
        write_pod(os, gt.required_call[static_cast<std::size_t>(i)]);
    }
    if (!os) {
        throw DataError("I/O failure while writing ground truth: " + path);
    }
}

std::pair<GroundTruth, SurrogateConfig> read_ground_truth(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open ground-truth file: " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("not a ground-truth file (bad magic): " + path);
    }
    const auto version = read_pod<std::uint16_t>(is, "version");
    if (version != kVersion) {
        throw DataError("unsupported ground-truth version " + std::to_string(version));
    }

    SurrogateConfig cfg;
    cfg.d = static_cast<int>(read_pod<std::uint32_t>(is, "width"));
    cfg.n_call_atoms = static_cast<int>(read_pod<std::uint32_t>(is, "call atom count"));
    cfg.n_nocall_atoms = static_cast<int>(read_pod<std::uint32_t>(is, "no-call atom count"));
    const auto n = read_pod<std::uint64_t>(is, "record count");
    cfg.n_records = static_cast<int>(n);
    cfg.beta_true = read_pod<double>(is, "beta");
    cfg.beta0_true = read_pod<double>(is, "beta0");
    cfg.noise_sigma = read_pod<double>(is, "noise sigma");
    cfg.evidence_scale = read_pod<double>(is, "evidence scale");
    cfg.correct_threshold = read_pod<double>(is, "correct threshold");
    cfg.seed = read_pod<std::uint64_t>(is, "seed");

    GroundTruth gt;
    gt.call_atoms = read_matrix_f32(is, cfg.d, cfg.n_call_atoms, "call atoms");
    gt.nocall_atoms = read_matrix_f32(is, cfg.d, cfg.n_nocall_atoms, "no-call atoms");
    gt.call_evidence.resize(static_cast<Eigen::Index>(n));
    gt.nocall_evidence.resize(static_cast<Eigen::Index>(n));
    gt.required_call.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        gt.call_evidence[static_cast<Eigen::Index>(i)] =
            static_cast<double>(read_pod<float>(is, "call evidence"));
        gt.nocall_evidence[static_cast<Eigen::Index>(i)] =
            static_cast<double>(read_pod<float>(is, "no-call evidence"));
        gt.required_call[i] = read_pod<std::uint8_t>(is, "required decision");
        if (gt.required_call[i] > 1) {
            throw DataError("corrupt required-decision byte in ground truth");
        }
    }
    return {std::move(gt), cfg};
}

} // namespace callgate
