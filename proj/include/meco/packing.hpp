#pragma once

#include "meco/conditioning.hpp"
#include "meco/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace meco {

struct Segment {
    std::uint32_t start = 0;
    std::uint32_t length = 0;

    bool operator==(const Segment&) const = default;
};

struct PackedSequence {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> loss_mask;
    std::vector<Segment> segments;
    std::uint32_t n_pad = 0;

    bool operator==(const PackedSequence&) const = default;
};

struct PackingStats {
    std::uint64_t input_tokens = 0;
    std::uint64_t emitted_tokens = 0;
    std::uint64_t discarded_tokens = 0;
    std::uint64_t padded_tokens = 0;
    std::uint64_t sequences = 0;
    std::uint64_t documents = 0;
    std::uint64_t documents_truncated = 0;

    PackingStats& operator+=(const PackingStats& other);
    bool conserved() const { return input_tokens + padded_tokens == emitted_tokens + discarded_tokens; }
    bool operator==(const PackingStats&) const = default;
};

enum class PackPolicy {
    /// Truncate the first document that overflows so it fills the sequence.
    truncate,
    /// Pad the current sequence and carry the overflowing document forward.
    pad,
};

PackPolicy pack_policy_from_string(std::string_view name);

/// Streaming packer. Every sequence starts at a document boundary (and so
/// with bos); only the final sequence is padded under the truncate policy.
class Packer {
public:
    using Sink = std::function<void(PackedSequence&&)>;

    Packer(std::uint32_t seq_len, TokenId pad_id, Sink sink, PackPolicy policy = PackPolicy::truncate);

    void add(const TokenizedDocument& doc);
    /// Pads and emits the partial sequence, if any. Idempotent.
    void finish();

    const PackingStats& stats() const { return stats_; }

private:
    void append(const TokenizedDocument& doc, std::uint32_t count);
    void emit(std::uint32_t n_pad);

    std::uint32_t seq_len_;
    TokenId pad_id_;
    Sink sink_;
    PackPolicy policy_;
    PackedSequence current_;
    PackingStats stats_;
};

std::pair<std::vector<PackedSequence>, PackingStats> pack(const std::vector<TokenizedDocument>& docs,
                                                          std::uint32_t seq_len, TokenId pad_id,
                                                          PackPolicy policy = PackPolicy::truncate);

/// Half-open [start, end) document intervals covering [0, L - n_pad).
std::vector<std::pair<std::uint32_t, std::uint32_t>> segment_spans(const PackedSequence& seq);

struct Report {
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
    std::string summary() const;
};

/// Checks a single sequence: length, bos at every segment start, segment
/// contiguity and coverage, pads masked out.
void check_sequence(const PackedSequence& seq, std::uint32_t seq_len, const TokenizerSpec& spec,
                    const std::string& label, Report& report);

/// Full re-derivation against the original documents (test scale).
Report verify_pack(const std::vector<PackedSequence>& sequences, const PackingStats& stats,
                   const std::vector<TokenizedDocument>& docs, std::uint32_t seq_len, const TokenizerSpec& spec,
                   PackPolicy policy = PackPolicy::truncate);

} // namespace meco
