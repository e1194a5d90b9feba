#pragma once

#include "meco/hashing.hpp"
#include "meco/packing.hpp"
#include "meco/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace meco {

inline constexpr char kShardMagic[4] = {'M', 'E', 'C', 'O'};
inline constexpr std::uint16_t kShardVersion = 1;
inline constexpr std::size_t kShardHeaderBytes = 52;

enum class RenderingTag : std::uint8_t { conditioned = 0, standard = 1, interleaved = 2 };

std::string_view to_string(RenderingTag tag);
RenderingTag rendering_tag_from_string(std::string_view name);

/// Little-endian, 52 bytes:
///   0  magic "MECO"
///   4  u16 version
///   6  u8  rendering tag
///   7  u8  reserved (0)
///   8  u32 sequence length L
///  12  u64 sequence count
///  20  u8[32] tokenizer implementation id
struct ShardHeader {
    std::uint16_t version = kShardVersion;
    RenderingTag rendering = RenderingTag::standard;
    std::uint32_t seq_len = 0;
    std::uint64_t sequence_count = 0;
    Sha256Digest tokenizer_id{};

    bool operator==(const ShardHeader&) const = default;
};

/// Bytes of one serialized sequence record:
/// L*4 ids + ceil(L/8) mask bytes + u16 count + 8 per segment + u16 n_pad.
std::uint64_t sequence_record_bytes(std::uint32_t seq_len, std::size_t segment_count);

struct ShardEntry {
    std::string file;
    std::uint64_t sequences = 0;
    std::uint64_t bytes = 0;
    std::string sha256;

    bool operator==(const ShardEntry&) const = default;
};

struct ShardManifest {
    std::uint32_t seq_len = 0;
    RenderingTag rendering = RenderingTag::standard;
    Sha256Digest tokenizer_id{};
    std::uint32_t vocab_size = 0;
    TokenId bos_id = 0;
    TokenId eos_id = 0;
    TokenId pad_id = 0;
    std::uint64_t seqs_per_shard = 0;
    std::vector<ShardEntry> shards;
    std::uint64_t total_sequences = 0;
    PackingStats stats;
    /// Relative reference to the schedule plan, empty when none.
    std::string plan;
    /// Relative path of the doc-id list for this shard set, empty when none.
    std::string doc_ids;

    std::string to_json() const;
    static ShardManifest from_json(std::string_view json_text);
    static ShardManifest load(const std::filesystem::path& dir);
};

struct ShardSetOptions {
    std::uint32_t seq_len = 8192;
    std::uint64_t seqs_per_shard = 1024;
    RenderingTag rendering = RenderingTag::standard;
    TokenizerSpec tokenizer;
};

/// Streams sequences into `shard-%05d.meco` files. Shards are written under
/// temporary names and renamed when complete; the manifest is written last by
/// finish(). Destroying an unfinished writer removes everything it wrote.
class ShardWriter {
public:
    ShardWriter(std::filesystem::path dir, ShardSetOptions options);
    ~ShardWriter();
    ShardWriter(const ShardWriter&) = delete;
    ShardWriter& operator=(const ShardWriter&) = delete;

    void write(const PackedSequence& seq);
    /// Closes the open shard and writes manifest.json.
    ShardManifest finish(const PackingStats& stats, std::string plan_ref = {}, std::string doc_ids_ref = {});
    void abort();

private:
    void open_shard();
    void close_shard();

    std::filesystem::path dir_;
    ShardSetOptions options_;
    std::ofstream out_;
    std::filesystem::path tmp_path_;
    std::optional<Sha256Stream> hasher_;
    std::uint64_t in_shard_ = 0;
    std::vector<ShardEntry> entries_;
    std::vector<char> buffer_;
    bool finished_ = false;
};

ShardManifest write_shards(const std::vector<PackedSequence>& sequences, const std::filesystem::path& dir,
                           const ShardSetOptions& options, const PackingStats& stats = {});

void encode_sequence(const PackedSequence& seq, std::uint32_t seq_len, std::vector<char>& out);

/// Sequential reader over shard files. Throws DataError with the byte
/// offset on bad magic, version, truncation or header inconsistency.
class ShardReader {
public:
    using Warning = std::function<void(const std::string&)>;

    explicit ShardReader(std::vector<std::filesystem::path> files, std::optional<Sha256Digest> active_tokenizer = {},
                         Warning warn = {});
    /// Uses the manifest order when manifest.json exists, otherwise sorted shard files.
    static ShardReader open_dir(const std::filesystem::path& dir, std::optional<Sha256Digest> active_tokenizer = {},
                                Warning warn = {});

    bool next(PackedSequence& seq);

    /// Header of the first shard, available after the first next().
    const std::optional<ShardHeader>& header() const { return header_; }

private:
    bool open_next();
    void read_exact(char* dst, std::size_t n, const char* what);

    std::vector<std::filesystem::path> files_;
    std::size_t index_ = 0;
    std::ifstream in_;
    std::string current_name_;
    std::uint64_t offset_ = 0;
    std::uint64_t remaining_ = 0;
    std::optional<ShardHeader> header_;
    std::optional<Sha256Digest> active_tokenizer_;
    Warning warn_;
    std::vector<char> buffer_;
};

ShardHeader read_shard_header(const std::filesystem::path& file);

std::vector<PackedSequence> read_shards(const std::filesystem::path& dir_or_file);

/// Re-hashes files, recounts sequences and re-checks sequence invariants.
Report verify_shards(const std::filesystem::path& dir);

} // namespace meco
