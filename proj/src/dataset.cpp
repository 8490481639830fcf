#include "callgate/dataset.hpp"
#include "callgate/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace callgate {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'T', 'V'};
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
        throw DataError(std::string("activation cache truncated while reading ") + what);
    }
    return v;
}

Behavior behavior_from_string(const std::string& s, std::size_t line_no) {
    if (s == "tool_call") return Behavior::ToolCall;
    if (s == "request_for_info") return Behavior::RequestForInfo;
    if (s == "direct_answer") return Behavior::DirectAnswer;
    if (s == "cannot_answer") return Behavior::CannotAnswer;
    throw DataError("line " + std::to_string(line_no) + ": unknown label \"" + s + "\"");
}

Correctness correctness_from_string(const std::string& s, std::size_t line_no) {
    if (s == "true_call") return Correctness::TrueCall;
    if (s == "false_call") return Correctness::FalseCall;
    if (s == "true_nocall") return Correctness::TrueNocall;
    if (s == "false_nocall") return Correctness::FalseNocall;
    if (s == "unknown") return Correctness::Unknown;
    throw DataError("line " + std::to_string(line_no) + ": unknown correctness \"" + s + "\"");
}

} // namespace

const char* to_string(Behavior b) {
    switch (b) {
        case Behavior::ToolCall: return "tool_call";
        case Behavior::RequestForInfo: return "request_for_info";
        case Behavior::DirectAnswer: return "direct_answer";
        case Behavior::CannotAnswer: return "cannot_answer";
    }
    return "?";
}

const char* to_string(Correctness c) {
    switch (c) {
        case Correctness::TrueCall: return "true_call";
        case Correctness::FalseCall: return "false_call";
        case Correctness::TrueNocall: return "true_nocall";
        case Correctness::FalseNocall: return "false_nocall";
        case Correctness::Unknown: return "unknown";
    }
    return "?";
}

const char* to_string(SplitTag s) {
    switch (s) {
        case SplitTag::Cal: return "cal";
        case SplitTag::Test: return "test";
        case SplitTag::Unassigned: return "unassigned";
    }
    return "?";
}

std::vector<std::size_t> ActivationDataset::call_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].behavior == Behavior::ToolCall) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> ActivationDataset::nocall_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].behavior == Behavior::RequestForInfo) out.push_back(i);
    }
    return out;
}

std::size_t LabelCounts::total() const {
    std::size_t t = 0;
    for (auto c : by_behavior) t += c;
    return t;
}

void write_cache(const ActivationDataset& dataset, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open cache for writing: " + path);
    }
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint8_t>(dataset.provenance));
    write_pod(os, static_cast<std::uint32_t>(dataset.d));
    write_pod(os, static_cast<std::uint64_t>(dataset.records.size()));
    for (const auto& rec : dataset.records) {
        if (rec.h.size() != dataset.d) {
            throw DataError("record \"" + rec.context_id + "\" has width " +
                            std::to_string(rec.h.size()) + ", dataset width is " +
                            std::to_string(dataset.d));
        }
        write_pod(os, static_cast<std::uint32_t>(rec.context_id.size()));
        os.write(rec.context_id.data(), static_cast<std::streamsize>(rec.context_id.size()));
        os.write(reinterpret_cast<const char*>(rec.h.data()),
                 static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(dataset.d)));
        write_pod(os, static_cast<std::uint8_t>(rec.behavior));
        write_pod(os, static_cast<std::uint8_t>(rec.correctness));
        write_pod(os, static_cast<std::uint8_t>(rec.split));
    }
    if (!os) {
        throw DataError("I/O failure while writing cache: " + path);
    }
}

ActivationDataset read_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open cache: " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("not an activation cache (bad magic): " + path);
    }
    const auto version = read_pod<std::uint16_t>(is, "version");
    if (version != kVersion) {
        throw DataError("unsupported cache version " + std::to_string(version) + ": " + path);
    }
    const auto prov = read_pod<std::uint8_t>(is, "provenance");
    if (prov > 1) {
        throw DataError("invalid provenance byte in cache: " + path);
    }
    const auto d = read_pod<std::uint32_t>(is, "width");
    const auto n = read_pod<std::uint64_t>(is, "record count");
    if (d == 0) {
        throw DataError("cache declares zero width: " + path);
    }

    ActivationDataset out;
    out.d = static_cast<int>(d);
    out.provenance = static_cast<Provenance>(prov);
    out.records.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        ActivationRecord rec;
        const auto id_len = read_pod<std::uint32_t>(is, "id length");
        rec.context_id.resize(id_len);
        is.read(rec.context_id.data(), id_len);
        rec.h.resize(d);
        is.read(reinterpret_cast<char*>(rec.h.data()),
                static_cast<std::streamsize>(sizeof(float) * d));
        if (!is) {
            throw DataError("activation cache truncated at record " + std::to_string(i) + ": " + path);
        }
        const auto behavior = read_pod<std::uint8_t>(is, "behavior");
        const auto correctness = read_pod<std::uint8_t>(is, "correctness");
        const auto split = read_pod<std::uint8_t>(is, "split");
        if (behavior > 3 || correctness > 4 || split > 2) {
            throw DataError("corrupt enum byte at record " + std::to_string(i) + ": " + path);
        }
        rec.behavior = static_cast<Behavior>(behavior);
        rec.correctness = static_cast<Correctness>(correctness);
        rec.split = static_cast<SplitTag>(split);
        out.records.push_back(std::move(rec));
    }
    return out;
}

ActivationDataset ingest_jsonl(const std::string& path, int d) {
    if (d <= 0) {
        throw ConfigError("ingest: width must be positive, got " + std::to_string(d));
    }
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open JSONL file: " + path);
    }
    ActivationDataset out;
    out.d = d;
    out.provenance = Provenance::Ingested;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
        }
        if (!j.contains("context_id") || !j.contains("activation") || !j.contains("label")) {
            throw DataError("line " + std::to_string(line_no) +
                            ": missing required field (context_id, activation, label)");
        }
        ActivationRecord rec;
        rec.context_id = j.at("context_id").get<std::string>();
        const auto& act = j.at("activation");
        if (!act.is_array() || static_cast<int>(act.size()) != d) {
            throw DataError("line " + std::to_string(line_no) + ": activation length " +
                            std::to_string(act.size()) + ", expected " + std::to_string(d));
        }
        rec.h.resize(d);
        for (int k = 0; k < d; ++k) {
            rec.h[k] = act.at(static_cast<std::size_t>(k)).get<float>();
        }
        rec.behavior = behavior_from_string(j.at("label").get<std::string>(), line_no);
        if (j.contains("correctness")) {
            rec.correctness = correctness_from_string(j.at("correctness").get<std::string>(), line_no);
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

ActivationDataset split_dataset(const ActivationDataset& dataset, double cal_fraction,
                                std::uint64_t seed) {
    if (!(cal_fraction > 0.0 && cal_fraction < 1.0)) {
        throw ConfigError("split: cal_fraction must be in (0, 1), got " +
                          std::to_string(cal_fraction));
    }

    std::array<std::vector<std::size_t>, 4> by_class;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        by_class[static_cast<std::size_t>(dataset.records[i].behavior)].push_back(i);
    }
    int present = 0;
    for (const auto& cls : by_class) {
        if (!cls.empty()) ++present;
    }
    if (present == 0) {
        throw DataError("split: dataset is empty");
    }
    if (present > 1) {
        for (std::size_t b = 0; b < by_class.size(); ++b) {
            const auto c = by_class[b].size();
            if (c == 1) {
                throw DataError(std::string("split: class ") +
                                to_string(static_cast<Behavior>(b)) +
                                " has 1 record; stratification needs at least 2 per class");
            }
        }
    } else {
        // Single-class dataset: stratification degenerates to a plain split.
        std::size_t total = dataset.records.size();
        if (total < 2) {
            throw DataError("split: need at least 2 records");
        }
    }

    ActivationDataset out = dataset;
    std::mt19937_64 rng(seed);
    for (auto& cls : by_class) {
        if (cls.empty()) continue;
        std::shuffle(cls.begin(), cls.end(), rng);
        const auto c = cls.size();
        auto n_cal = static_cast<std::size_t>(std::llround(cal_fraction * static_cast<double>(c)));
        n_cal = std::clamp<std::size_t>(n_cal, 1, c - 1);
        for (std::size_t k = 0; k < c; ++k) {
            out.records[cls[k]].split = (k < n_cal) ? SplitTag::Cal : SplitTag::Test;
        }
    }
    return out;
}

LabelCounts counts(const ActivationDataset& dataset) {
    LabelCounts out;
    for (const auto& rec : dataset.records) {
        ++out.by_behavior[static_cast<std::size_t>(rec.behavior)];
    }
    return out;
}

ActivationDataset filter_split(const ActivationDataset& dataset, SplitTag tag) {
    ActivationDataset out;
    out.d = dataset.d;
    out.provenance = dataset.provenance;
    for (const auto& rec : dataset.records) {
        if (rec.split == tag) out.records.push_back(rec);
    }
    return out;
}

Eigen::MatrixXf to_matrix(const ActivationDataset& dataset) {
    Eigen::MatrixXf m(static_cast<Eigen::Index>(dataset.records.size()), dataset.d);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        m.row(i) = dataset.records[static_cast<std::size_t>(i)].h.transpose();
    }
    return m;
}

} // namespace callgate
