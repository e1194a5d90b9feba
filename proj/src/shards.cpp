#include "meco/shards.hpp"

#include "meco/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace meco {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u16(std::vector<char>& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return v;
}

std::vector<char> encode_header(const ShardHeader& h) {
    std::vector<char> out;
    out.reserve(kShardHeaderBytes);
    out.insert(out.end(), std::begin(kShardMagic), std::end(kShardMagic));
    put_u16(out, h.version);
    out.push_back(static_cast<char>(h.rendering));
    out.push_back(0);
    put_u32(out, h.seq_len);
    put_u64(out, h.sequence_count);
    out.insert(out.end(), h.tokenizer_id.begin(), h.tokenizer_id.end());
    return out;
}

ShardHeader decode_header(const char* p, const std::string& file) {
    if (std::memcmp(p, kShardMagic, 4) != 0) {
        throw DataError(file + ": bad magic at offset 0");
    }
    ShardHeader h;
    h.version = get_le<std::uint16_t>(p + 4);
    if (h.version != kShardVersion) {
        throw DataError(file + ": unsupported version " + std::to_string(h.version) + " at offset 4");
    }
    const auto tag = static_cast<std::uint8_t>(p[6]);
    if (tag > 2) {
        throw DataError(file + ": unknown rendering tag " + std::to_string(tag) + " at offset 6");
    }
    h.rendering = static_cast<RenderingTag>(tag);
    h.seq_len = get_le<std::uint32_t>(p + 8);
    if (h.seq_len == 0) {
        throw DataError(file + ": zero sequence length at offset 8");
    }
    h.sequence_count = get_le<std::uint64_t>(p + 12);
    std::memcpy(h.tokenizer_id.data(), p + 20, h.tokenizer_id.size());
    return h;
}

std::string shard_name(std::size_t index) {
    char name[32];
    std::snprintf(name, sizeof(name), "shard-%05zu.meco", index);
    return name;
}

json stats_to_json(const PackingStats& s) {
    return {{"input_tokens", s.input_tokens},         {"emitted_tokens", s.emitted_tokens},
            {"discarded_tokens", s.discarded_tokens}, {"padded_tokens", s.padded_tokens},
            {"sequences", s.sequences},               {"documents", s.documents},
            {"documents_truncated", s.documents_truncated}};
}

PackingStats stats_from_json(const json& j) {
    PackingStats s;
    s.input_tokens = j.at("input_tokens").get<std::uint64_t>();
    s.emitted_tokens = j.at("emitted_tokens").get<std::uint64_t>();
    s.discarded_tokens = j.at("discarded_tokens").get<std::uint64_t>();
    s.padded_tokens = j.at("padded_tokens").get<std::uint64_t>();
    s.sequences = j.at("sequences").get<std::uint64_t>();
    s.documents = j.at("documents").get<std::uint64_t>();
    s.documents_truncated = j.at("documents_truncated").get<std::uint64_t>();
    return s;
}

Sha256Digest digest_from_hex(const std::string& hex) {
    Sha256Digest d{};
    if (hex.size() != 64) throw DataError("tokenizer id must be 64 hex characters");
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
    }
    return d;
}

} // namespace

std::string_view to_string(RenderingTag tag) {
    switch (tag) {
    case RenderingTag::conditioned: return "conditioned";
    case RenderingTag::standard: return "standard";
    case RenderingTag::interleaved: return "interleaved";
    }
    return "standard";
}

RenderingTag rendering_tag_from_string(std::string_view name) {
    if (name == "conditioned") return RenderingTag::conditioned;
    if (name == "standard") return RenderingTag::standard;
    if (name == "interleaved") return RenderingTag::interleaved;
    throw DataError("unknown rendering tag \"" + std::string(name) + "\"");
}

std::uint64_t sequence_record_bytes(std::uint32_t seq_len, std::size_t segment_count) {
    return std::uint64_t{seq_len} * 4 + (seq_len + 7) / 8 + 2 + 8 * segment_count + 2;
}

void encode_sequence(const PackedSequence& seq, std::uint32_t seq_len, std::vector<char>& out) {
    if (seq.ids.size() != seq_len || seq.loss_mask.size() != seq_len) {
        throw DataError("sequence length " + std::to_string(seq.ids.size()) + " does not match shard length " +
                        std::to_string(seq_len));
    }
    if (seq.segments.size() > 0xFFFF || seq.n_pad > 0xFFFF) {
        throw DataError("segment or pad count does not fit the u16 record fields");
    }
    out.clear();
    out.reserve(sequence_record_bytes(seq_len, seq.segments.size()));
    for (TokenId id : seq.ids) put_u32(out, id);
    const std::size_t mask_start = out.size();
    out.resize(mask_start + (seq_len + 7) / 8, 0);
    for (std::uint32_t i = 0; i < seq_len; ++i) {
        if (seq.loss_mask[i]) out[mask_start + i / 8] = static_cast<char>(out[mask_start + i / 8] | (1u << (i % 8)));
    }
    put_u16(out, static_cast<std::uint16_t>(seq.segments.size()));
    for (const auto& s : seq.segments) {
        put_u32(out, s.start);
        put_u32(out, s.length);
    }
    put_u16(out, static_cast<std::uint16_t>(seq.n_pad));
}

std::string ShardManifest::to_json() const {
    json j;
    j["format"] = "meco-shards";
    j["version"] = kShardVersion;
    j["seq_len"] = seq_len;
    j["rendering"] = std::string(meco::to_string(rendering));
    j["tokenizer"] = {{"id", to_hex(tokenizer_id)},
                      {"vocab_size", vocab_size},
                      {"bos_id", bos_id},
                      {"eos_id", eos_id},
                      {"pad_id", pad_id}};
    j["seqs_per_shard"] = seqs_per_shard;
    j["shards"] = json::array();
    for (const auto& e : shards) {
        j["shards"].push_back({{"file", e.file}, {"sequences", e.sequences}, {"bytes", e.bytes}, {"sha256", e.sha256}});
    }
    j["total_sequences"] = total_sequences;
    j["stats"] = stats_to_json(stats);
    j["plan"] = plan.empty() ? json(nullptr) : json(plan);
    j["doc_ids"] = doc_ids.empty() ? json(nullptr) : json(doc_ids);
    return j.dump(2) + "\n";
}

ShardManifest ShardManifest::from_json(std::string_view json_text) {
    ShardManifest m;
    try {
        auto j = json::parse(json_text);
        if (j.at("format").get<std::string>() != "meco-shards") {
            throw DataError("not a shard manifest");
        }
        m.seq_len = j.at("seq_len").get<std::uint32_t>();
        m.rendering = rendering_tag_from_string(j.at("rendering").get<std::string>());
        const auto& t = j.at("tokenizer");
        m.tokenizer_id = digest_from_hex(t.at("id").get<std::string>());
        m.vocab_size = t.at("vocab_size").get<std::uint32_t>();
        m.bos_id = t.at("bos_id").get<TokenId>();
        m.eos_id = t.at("eos_id").get<TokenId>();
        m.pad_id = t.at("pad_id").get<TokenId>();
        m.seqs_per_shard = j.at("seqs_per_shard").get<std::uint64_t>();
        for (const auto& e : j.at("shards")) {
            m.shards.push_back({e.at("file").get<std::string>(), e.at("sequences").get<std::uint64_t>(),
                                e.at("bytes").get<std::uint64_t>(), e.at("sha256").get<std::string>()});
        }
        m.total_sequences = j.at("total_sequences").get<std::uint64_t>();
        m.stats = stats_from_json(j.at("stats"));
        if (j.contains("plan") && j["plan"].is_string()) m.plan = j["plan"].get<std::string>();
        if (j.contains("doc_ids") && j["doc_ids"].is_string()) m.doc_ids = j["doc_ids"].get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed shard manifest: ") + e.what());
    }
    return m;
}

ShardManifest ShardManifest::load(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) {
        throw DataError("no manifest.json in " + dir.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

ShardWriter::ShardWriter(fs::path dir, ShardSetOptions options) : dir_(std::move(dir)), options_(std::move(options)) {
    if (options_.seqs_per_shard == 0) {
        throw ConfigError("sequences per shard must be at least 1");
    }
    if (options_.seq_len == 0) {
        throw ConfigError("sequence length must be positive");
    }
    fs::create_directories(dir_);
}

ShardWriter::~ShardWriter() {
    if (!finished_) abort();
}

void ShardWriter::open_shard() {
    tmp_path_ = dir_ / (shard_name(entries_.size()) + ".tmp");
    out_ = std::ofstream(tmp_path_, std::ios::binary | std::ios::trunc);
    if (!out_) {
        throw DataError("cannot open " + tmp_path_.string() + " for writing");
    }
    hasher_.emplace();
    in_shard_ = 0;
    ShardHeader h;
    h.rendering = options_.rendering;
    h.seq_len = options_.seq_len;
    h.sequence_count = options_.seqs_per_shard;
    h.tokenizer_id = options_.tokenizer.implementation_id;
    auto bytes = encode_header(h);
    out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    hasher_->update(bytes.data(), bytes.size());
}

void ShardWriter::close_shard() {
    if (!out_.is_open()) return;
    ShardEntry entry;
    entry.file = shard_name(entries_.size());
    entry.sequences = in_shard_;
    bool rehash = false;
    if (in_shard_ != options_.seqs_per_shard) {
        // Short final shard: patch the count and hash the finished file.
        std::vector<char> count;
        put_u64(count, in_shard_);
        out_.seekp(12);
        out_.write(count.data(), 8);
        out_.seekp(0, std::ios::end);
        rehash = true;
    }
    entry.bytes = static_cast<std::uint64_t>(out_.tellp());
    out_.close();
    if (!out_) {
        throw DataError("write failure on " + tmp_path_.string());
    }
    entry.sha256 = to_hex(rehash ? sha256_file(tmp_path_) : hasher_->finish());
    hasher_.reset();
    fs::rename(tmp_path_, dir_ / entry.file);
    tmp_path_.clear();
    entries_.push_back(std::move(entry));
}

void ShardWriter::write(const PackedSequence& seq) {
    if (finished_) {
        throw Error("write after finish");
    }
    try {
        if (!out_.is_open()) open_shard();
        encode_sequence(seq, options_.seq_len, buffer_);
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        hasher_->update(buffer_.data(), buffer_.size());
        if (!out_) {
            throw DataError("write failure on " + tmp_path_.string());
        }
        if (++in_shard_ == options_.seqs_per_shard) close_shard();
    } catch (...) {
        abort();
        throw;
    }
}

ShardManifest ShardWriter::finish(const PackingStats& stats, std::string plan_ref, std::string doc_ids_ref) {
    try {
        close_shard();
        ShardManifest m;
        m.seq_len = options_.seq_len;
        m.rendering = options_.rendering;
        m.tokenizer_id = options_.tokenizer.implementation_id;
        m.vocab_size = options_.tokenizer.vocab_size;
        m.bos_id = options_.tokenizer.bos_id;
        m.eos_id = options_.tokenizer.eos_id;
        m.pad_id = options_.tokenizer.pad_id;
        m.seqs_per_shard = options_.seqs_per_shard;
        m.shards = entries_;
        for (const auto& e : entries_) m.total_sequences += e.sequences;
        m.stats = stats;
        m.plan = std::move(plan_ref);
        m.doc_ids = std::move(doc_ids_ref);

        const auto tmp = dir_ / "manifest.json.tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << m.to_json();
            if (!out) throw DataError("cannot write " + tmp.string());
        }
        fs::rename(tmp, dir_ / "manifest.json");
        finished_ = true;
        return m;
    } catch (...) {
        abort();
        throw;
    }
}

void ShardWriter::abort() {
    std::error_code ec;
    if (out_.is_open()) out_.close();
    if (!tmp_path_.empty()) fs::remove(tmp_path_, ec);
    for (const auto& e : entries_) fs::remove(dir_ / e.file, ec);
    fs::remove(dir_ / "manifest.json.tmp", ec);
    entries_.clear();
    finished_ = true;
}

ShardManifest write_shards(const std::vector<PackedSequence>& sequences, const fs::path& dir,
                           const ShardSetOptions& options, const PackingStats& stats) {
    ShardWriter writer(dir, options);
    for (const auto& s : sequences) writer.write(s);
    return writer.finish(stats);
}

ShardReader::ShardReader(std::vector<fs::path> files, std::optional<Sha256Digest> active_tokenizer, Warning warn)
    : files_(std::move(files)), active_tokenizer_(active_tokenizer), warn_(std::move(warn)) {}

ShardReader ShardReader::open_dir(const fs::path& dir, std::optional<Sha256Digest> active_tokenizer, Warning warn) {
    std::vector<fs::path> files;
    if (fs::exists(dir / "manifest.json")) {
        for (const auto& e : ShardManifest::load(dir).shards) files.push_back(dir / e.file);
    } else {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".meco") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    }
    return ShardReader(std::move(files), active_tokenizer, std::move(warn));
}

void ShardReader::read_exact(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
        throw DataError(current_name_ + ": truncated " + what + " at byte offset " +
                        std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())));
    }
    offset_ += n;
}

bool ShardReader::open_next() {
    if (index_ >= files_.size()) return false;
    const auto& path = files_[index_++];
    in_ = std::ifstream(path, std::ios::binary);
    if (!in_) {
        throw DataError("cannot open shard " + path.string());
    }
    current_name_ = path.filename().string();
    offset_ = 0;
    char raw[kShardHeaderBytes];
    read_exact(raw, sizeof(raw), "header");
    ShardHeader h = decode_header(raw, current_name_);
    if (header_) {
        if (h.seq_len != header_->seq_len) {
            throw DataError(current_name_ + ": sequence length " + std::to_string(h.seq_len) +
                            " differs from earlier shards (" + std::to_string(header_->seq_len) + ")");
        }
    } else {
        header_ = h;
        if (active_tokenizer_ && *active_tokenizer_ != h.tokenizer_id && warn_) {
            warn_(current_name_ + ": tokenizer id " + to_hex(h.tokenizer_id) + " differs from the active tokenizer");
        }
    }
    remaining_ = h.sequence_count;
    return true;
}

bool ShardReader::next(PackedSequence& seq) {
    while (remaining_ == 0) {
        if (in_.is_open()) {
            if (in_.peek() != std::char_traits<char>::eof()) {
                throw DataError(current_name_ + ": trailing bytes at offset " + std::to_string(offset_));
            }
            in_.close();
        }
        if (!open_next()) return false;
    }
    const std::uint32_t len = header_->seq_len;
    buffer_.resize(std::size_t{len} * 4);
    read_exact(buffer_.data(), buffer_.size(), "token ids");
    seq.ids.resize(len);
    for (std::uint32_t i = 0; i < len; ++i) seq.ids[i] = get_le<std::uint32_t>(buffer_.data() + 4 * i);

    buffer_.resize((len + 7) / 8);
    read_exact(buffer_.data(), buffer_.size(), "loss mask");
    seq.loss_mask.resize(len);
    for (std::uint32_t i = 0; i < len; ++i) {
        seq.loss_mask[i] = static_cast<std::uint8_t>((static_cast<unsigned char>(buffer_[i / 8]) >> (i % 8)) & 1u);
    }

    char small[8];
    read_exact(small, 2, "segment count");
    const auto count = get_le<std::uint16_t>(small);
    if (count > len) {
        throw DataError(current_name_ + ": segment count " + std::to_string(count) + " exceeds sequence length at offset " +
                        std::to_string(offset_ - 2));
    }
    seq.segments.resize(count);
    for (auto& s : seq.segments) {
        read_exact(small, 8, "segment");
        s.start = get_le<std::uint32_t>(small);
        s.length = get_le<std::uint32_t>(small + 4);
    }
    read_exact(small, 2, "pad count");
    seq.n_pad = get_le<std::uint16_t>(small);
    --remaining_;
    return true;
}

ShardHeader read_shard_header(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    char raw[kShardHeaderBytes];
    in.read(raw, sizeof(raw));
    if (static_cast<std::size_t>(in.gcount()) != sizeof(raw)) {
        throw DataError(file.filename().string() + ": truncated header at byte offset " + std::to_string(in.gcount()));
    }
    return decode_header(raw, file.filename().string());
}

std::vector<PackedSequence> read_shards(const fs::path& dir_or_file) {
    ShardReader reader = fs::is_directory(dir_or_file) ? ShardReader::open_dir(dir_or_file)
                                                       : ShardReader({dir_or_file});
    std::vector<PackedSequence> out;
    PackedSequence seq;
    while (reader.next(seq)) out.push_back(seq);
    return out;
}

Report verify_shards(const fs::path& dir) {
    Report report;
    ShardManifest manifest;
    try {
        manifest = ShardManifest::load(dir);
    } catch (const DataError& e) {
        report.failures.push_back(e.what());
        return report;
    }
    TokenizerSpec spec;
    spec.bos_id = manifest.bos_id;
    spec.eos_id = manifest.eos_id;
    spec.pad_id = manifest.pad_id;
    spec.vocab_size = manifest.vocab_size;

    std::uint64_t total = 0;
    std::uint64_t padded = 0;
    for (const auto& entry : manifest.shards) {
        const auto path = dir / entry.file;
        total += entry.sequences;
        if (!fs::exists(path)) {
            report.failures.push_back(entry.file + ": missing");
            continue;
        }
        if (to_hex(sha256_file(path)) != entry.sha256) {
            report.failures.push_back(entry.file + ": sha256 mismatch");
        }
        if (fs::file_size(path) != entry.bytes) {
            report.failures.push_back(entry.file + ": size " + std::to_string(fs::file_size(path)) +
                                      " != manifest " + std::to_string(entry.bytes));
        }
        try {
            const auto h = read_shard_header(path);
            if (h.seq_len != manifest.seq_len) report.failures.push_back(entry.file + ": header length mismatch");
            if (h.tokenizer_id != manifest.tokenizer_id) report.failures.push_back(entry.file + ": tokenizer id mismatch");
            if (h.sequence_count != entry.sequences) {
                report.failures.push_back(entry.file + ": header count " + std::to_string(h.sequence_count) +
                                          " != manifest " + std::to_string(entry.sequences));
            }
            ShardReader reader({path});
            PackedSequence seq;
            std::uint64_t n = 0;
            while (reader.next(seq)) {
                const std::string label = entry.file + " sequence " + std::to_string(n);
                check_sequence(seq, manifest.seq_len, spec, label, report);
                for (const auto& s : seq.segments) {
                    if (s.start < seq.loss_mask.size() && seq.loss_mask[s.start] != 0) {
                        report.failures.push_back(label + ": bos at " + std::to_string(s.start) + " carries loss");
                        break;
                    }
                }
                for (TokenId id : seq.ids) {
                    if (id >= manifest.vocab_size) {
                        report.failures.push_back(label + ": token id " + std::to_string(id) + " out of vocab");
                        break;
                    }
                }
                padded += seq.n_pad;
                ++n;
            }
            if (n != entry.sequences) {
                report.failures.push_back(entry.file + ": read " + std::to_string(n) + " sequences, manifest says " +
                                          std::to_string(entry.sequences));
            }
        } catch (const DataError& e) {
            report.failures.push_back(e.what());
        }
    }
    if (total != manifest.total_sequences) {
        report.failures.push_back("manifest total_sequences does not equal the per-shard sum");
    }
    if (manifest.stats.sequences != manifest.total_sequences) {
        report.failures.push_back("packing stats sequence count disagrees with the shards");
    }
    if (!manifest.stats.conserved()) {
        report.failures.push_back("packing stats violate token conservation");
    }
    if (padded != manifest.stats.padded_tokens) {
        report.failures.push_back("padded tokens in shards disagree with packing stats");
    }
    return report;
}

} // namespace meco
