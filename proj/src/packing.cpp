#include "meco/packing.hpp"

#include "meco/errors.hpp"

#include <algorithm>
#include <sstream>

namespace meco {

PackingStats& PackingStats::operator+=(const PackingStats& other) {
    input_tokens += other.input_tokens;
    emitted_tokens += other.emitted_tokens;
    discarded_tokens += other.discarded_tokens;
    padded_tokens += other.padded_tokens;
    sequences += other.sequences;
    documents += other.documents;
    documents_truncated += other.documents_truncated;
    return *this;
}

PackPolicy pack_policy_from_string(std::string_view name) {
    if (name == "truncate") return PackPolicy::truncate;
    if (name == "pad") return PackPolicy::pad;
    throw ConfigError("unknown pack policy \"" + std::string(name) + "\" (expected truncate or pad)");
}

Packer::Packer(std::uint32_t seq_len, TokenId pad_id, Sink sink, PackPolicy policy)
    : seq_len_(seq_len), pad_id_(pad_id), sink_(std::move(sink)), policy_(policy) {
    if (seq_len_ < 2) {
        throw ConfigError("sequence length must be at least 2, got " + std::to_string(seq_len_));
    }
    current_.ids.reserve(seq_len_);
    current_.loss_mask.reserve(seq_len_);
}

void Packer::append(const TokenizedDocument& doc, std::uint32_t count) {
    const auto start = static_cast<std::uint32_t>(current_.ids.size());
    current_.ids.insert(current_.ids.end(), doc.ids.begin(), doc.ids.begin() + count);
    current_.loss_mask.insert(current_.loss_mask.end(), doc.loss_mask.begin(), doc.loss_mask.begin() + count);
    current_.segments.push_back({start, count});
}

void Packer::emit(std::uint32_t n_pad) {
    current_.ids.insert(current_.ids.end(), n_pad, pad_id_);
    current_.loss_mask.insert(current_.loss_mask.end(), n_pad, 0);
    current_.n_pad = n_pad;
    stats_.emitted_tokens += seq_len_;
    stats_.padded_tokens += n_pad;
    ++stats_.sequences;
    PackedSequence out = std::move(current_);
    current_ = PackedSequence{};
    current_.ids.reserve(seq_len_);
    current_.loss_mask.reserve(seq_len_);
    sink_(std::move(out));
}

void Packer::add(const TokenizedDocument& doc) {
    const auto n = doc.ids.size();
    if (n < 2 || doc.loss_mask.size() != n) {
        throw DataError("document " + doc.doc_id + " is not a valid tokenized document");
    }
    ++stats_.documents;
    stats_.input_tokens += n;

    auto room = static_cast<std::uint32_t>(seq_len_ - current_.ids.size());
    if (n > room && policy_ == PackPolicy::pad && !current_.ids.empty()) {
        emit(room);
        room = seq_len_;
    }
    if (n <= room) {
        append(doc, static_cast<std::uint32_t>(n));
        if (n == room) emit(0);
        return;
    }
    append(doc, room);
    stats_.discarded_tokens += n - room;
    ++stats_.documents_truncated;
    emit(0);
}

void Packer::finish() {
    if (!current_.ids.empty()) {
        emit(static_cast<std::uint32_t>(seq_len_ - current_.ids.size()));
    }
}

std::pair<std::vector<PackedSequence>, PackingStats> pack(const std::vector<TokenizedDocument>& docs,
                                                          std::uint32_t seq_len, TokenId pad_id, PackPolicy policy) {
    std::vector<PackedSequence> out;
    Packer packer(seq_len, pad_id, [&](PackedSequence&& s) { out.push_back(std::move(s)); }, policy);
    for (const auto& d : docs) packer.add(d);
    packer.finish();
    return {std::move(out), packer.stats()};
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> segment_spans(const PackedSequence& seq) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;
    spans.reserve(seq.segments.size());
    for (const auto& s : seq.segments) spans.emplace_back(s.start, s.start + s.length);
    return spans;
}

std::string Report::summary() const {
    if (ok()) return "ok";
    std::ostringstream os;
    os << failures.size() << " failure(s):";
    for (const auto& f : failures) os << "\n  - " << f;
    return os.str();
}

void check_sequence(const PackedSequence& seq, std::uint32_t seq_len, const TokenizerSpec& spec,
                    const std::string& label, Report& report) {
    auto fail = [&](const std::string& what) { report.failures.push_back(label + ": " + what); };
    if (seq.ids.size() != seq_len || seq.loss_mask.size() != seq_len) {
        fail("length " + std::to_string(seq.ids.size()) + " != " + std::to_string(seq_len));
        return;
    }
    if (seq.ids.empty() || seq.ids[0] != spec.bos_id) {
        fail("first token is not bos");
    }
    if (seq.segments.empty()) {
        fail("no segments");
        return;
    }
    std::uint64_t expected_start = 0;
    for (std::size_t k = 0; k < seq.segments.size(); ++k) {
        const auto& s = seq.segments[k];
        if (s.start != expected_start) {
            fail("segment " + std::to_string(k) + " starts at " + std::to_string(s.start) + ", expected " +
                 std::to_string(expected_start) + " (gap or overlap)");
            return;
        }
        if (s.length == 0) {
            fail("segment " + std::to_string(k) + " is empty");
            return;
        }
        if (static_cast<std::uint64_t>(s.start) + s.length > seq_len) {
            fail("segment " + std::to_string(k) + " runs past the sequence end");
            return;
        }
        if (seq.ids[s.start] != spec.bos_id) {
            fail("segment " + std::to_string(k) + " does not begin with bos");
        }
        expected_start = static_cast<std::uint64_t>(s.start) + s.length;
    }
    if (expected_start + seq.n_pad != seq_len) {
        fail("segments cover " + std::to_string(expected_start) + " positions plus " + std::to_string(seq.n_pad) +
             " pads, expected " + std::to_string(seq_len));
        return;
    }
    for (std::uint32_t i = static_cast<std::uint32_t>(expected_start); i < seq_len; ++i) {
        if (seq.ids[i] != spec.pad_id || seq.loss_mask[i] != 0) {
            fail("pad position " + std::to_string(i) + " is not an unmasked pad");
            break;
        }
    }
    for (std::uint32_t i = 0; i < seq_len; ++i) {
        if (seq.loss_mask[i] > 1) {
            fail("loss mask value at " + std::to_string(i) + " is not a bit");
            break;
        }
    }
}

Report verify_pack(const std::vector<PackedSequence>& sequences, const PackingStats& stats,
                   const std::vector<TokenizedDocument>& docs, std::uint32_t seq_len, const TokenizerSpec& spec,
                   PackPolicy policy) {
    Report report;
    PackingStats derived;
    derived.documents = docs.size();
    derived.sequences = sequences.size();
    for (const auto& d : docs) derived.input_tokens += d.ids.size();

    std::size_t doc_index = 0;
    for (std::size_t q = 0; q < sequences.size(); ++q) {
        const auto& seq = sequences[q];
        const std::string label = "sequence " + std::to_string(q);
        check_sequence(seq, seq_len, spec, label, report);
        derived.emitted_tokens += seq.ids.size();
        derived.padded_tokens += seq.n_pad;
        if (policy == PackPolicy::truncate && seq.n_pad != 0 && q + 1 != sequences.size()) {
            report.failures.push_back(label + ": padded mid-stream");
        }
        for (const auto& s : seq.segments) {
            if (doc_index >= docs.size()) {
                report.failures.push_back(label + ": more segments than input documents");
                break;
            }
            const auto& doc = docs[doc_index++];
            if (s.length > doc.ids.size() || static_cast<std::uint64_t>(s.start) + s.length > seq.ids.size()) {
                report.failures.push_back(label + ": segment longer than document " + doc.doc_id);
                continue;
            }
            if (!std::equal(doc.ids.begin(), doc.ids.begin() + s.length, seq.ids.begin() + s.start) ||
                !std::equal(doc.loss_mask.begin(), doc.loss_mask.begin() + s.length,
                            seq.loss_mask.begin() + s.start)) {
                report.failures.push_back(label + ": segment content differs from document " + doc.doc_id);
            }
            if (s.length < doc.ids.size()) {
                derived.discarded_tokens += doc.ids.size() - s.length;
                ++derived.documents_truncated;
            }
        }
    }
    if (doc_index != docs.size()) {
        report.failures.push_back("only " + std::to_string(doc_index) + " of " + std::to_string(docs.size()) +
                                  " documents appear in the output");
    }
    if (!stats.conserved()) {
        report.failures.push_back("conservation violated: input + padded != emitted + discarded");
    }
    if (!(derived == stats)) {
        std::ostringstream os;
        os << "stats mismatch: reported (in " << stats.input_tokens << ", emitted " << stats.emitted_tokens
           << ", discarded " << stats.discarded_tokens << ", padded " << stats.padded_tokens << ", seqs "
           << stats.sequences << ", docs " << stats.documents << ", truncated " << stats.documents_truncated
           << ") vs derived (in " << derived.input_tokens << ", emitted " << derived.emitted_tokens << ", discarded "
           << derived.discarded_tokens << ", padded " << derived.padded_tokens << ", seqs " << derived.sequences
           << ", docs " << derived.documents << ", truncated " << derived.documents_truncated << ")";
        report.failures.push_back(os.str());
    }
    return report;
}

} // namespace meco
