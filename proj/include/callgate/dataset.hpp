#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace callgate {

enum class Behavior : std::uint8_t {
    ToolCall = 0,
    RequestForInfo = 1,
    DirectAnswer = 2,
    CannotAnswer = 3,
};

enum class Correctness : std::uint8_t {
    TrueCall = 0,
    FalseCall = 1,
    TrueNocall = 2,
    FalseNocall = 3,
    Unknown = 4,
};

enum class SplitTag : std::uint8_t {
    Cal = 0,
    Test = 1,
    Unassigned = 2,
};

enum class Provenance : std::uint8_t {
    Surrogate = 0,
    Ingested = 1,
};

const char* to_string(Behavior b);
const char* to_string(Correctness c);
const char* to_string(SplitTag s);

// One residual-stream activation at the action-boundary position, with the
// observed gating behavior and (when known) ground-truth correctness.
struct ActivationRecord {
    std::string context_id;
    Eigen::VectorXf h;
    Behavior behavior = Behavior::ToolCall;
    Correctness correctness = Correctness::Unknown;
    SplitTag split = SplitTag::Unassigned;
};

struct ActivationDataset {
    int d = 0;
    std::vector<ActivationRecord> records;
    Provenance provenance = Provenance::Surrogate;

    // Indices of the call-decision set (tool_call) and the no-call-decision
    // set (request_for_info). direct_answer / cannot_answer records are never
    // members of either.
    std::vector<std::size_t> call_indices() const;
    std::vector<std::size_t> nocall_indices() const;
};

struct LabelCounts {
    std::array<std::size_t, 4> by_behavior{}; // indexed by Behavior
    std::size_t total() const;
};

// Binary ".actv" cache. Little-endian layout:
//   magic "ACTV", version u16, provenance u8, d u32, n u64,
//   then per record: id-length u32, id bytes, d x float32,
//   behavior u8, correctness u8, split u8.
// Round trips are bit-exact.
void write_cache(const ActivationDataset& dataset, const std::string& path);
ActivationDataset read_cache(const std::string& path);

// Reads JSONL with fields {"context_id", "activation", "label", "correctness"?}.
// Every activation must have length d; errors name the offending line.
ActivationDataset ingest_jsonl(const std::string& path, int d);

// Seeded shuffle + partition into CAL/TEST, stratified by behavior label so
// class ratios match across splits. Per-class CAL counts are clamped to
// [1, count-1] so both splits keep every present class. A single-class
// dataset degenerates to a plain split. Returns a tagged copy.
ActivationDataset split_dataset(const ActivationDataset& dataset, double cal_fraction,
                                std::uint64_t seed);

LabelCounts counts(const ActivationDataset& dataset);

// Copy of the records carrying the given split tag (d and provenance kept).
ActivationDataset filter_split(const ActivationDataset& dataset, SplitTag tag);

// Dense n x d matrix of record activations, in record order.
Eigen::MatrixXf to_matrix(const ActivationDataset& dataset);

} // namespace callgate
