#pragma once

#include "meco/hashing.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace meco {

using TokenId = std::uint32_t;

struct TokenizerSpec {
    std::uint32_t vocab_size = 0;
    TokenId bos_id = 0;
    TokenId eos_id = 0;
    TokenId pad_id = 0;
    /// SHA-256 identifying the implementation; embedded in shard headers.
    Sha256Digest implementation_id{};
};

/// Immutable after construction; safe to share across threads.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    const TokenizerSpec& spec() const { return spec_; }

    /// Never emits bos/eos/pad; those are inserted by conditioning.
    virtual std::vector<TokenId> encode(std::string_view text) const = 0;
    /// Appends to `out`, avoiding a temporary on hot paths.
    virtual void encode_into(std::string_view text, std::vector<TokenId>& out) const = 0;
    /// Special ids decode to the empty string. Throws on out-of-range ids.
    virtual std::string decode(std::span<const TokenId> ids) const = 0;

    bool is_special(TokenId id) const {
        return id == spec_.bos_id || id == spec_.eos_id || id == spec_.pad_id;
    }

protected:
    TokenizerSpec spec_;
};

/// One id per byte after three specials: bos=0, eos=1, pad=2, vocab 259.
class ByteTokenizer final : public Tokenizer {
public:
    static constexpr TokenId kByteOffset = 3;

    ByteTokenizer();

    std::vector<TokenId> encode(std::string_view text) const override;
    void encode_into(std::string_view text, std::vector<TokenId>& out) const override;
    std::string decode(std::span<const TokenId> ids) const override;
};

/// Greedy longest-match tokenizer over an external vocabulary file
/// `{"tokens": [...], "bos": "...", "eos": "...", "pad": "..."}`.
/// Tokens of the form `<0xHH>` are byte fallbacks and must cover all 256
/// byte values that are not already present as single-byte tokens.
class VocabTokenizer final : public Tokenizer {
public:
    static std::shared_ptr<const VocabTokenizer> from_file(const std::filesystem::path& path);
    static std::shared_ptr<const VocabTokenizer> from_json_text(std::string_view json_text);

    std::vector<TokenId> encode(std::string_view text) const override;
    void encode_into(std::string_view text, std::vector<TokenId>& out) const override;
    std::string decode(std::span<const TokenId> ids) const override;

private:
    struct TrieNode {
        std::vector<std::pair<unsigned char, std::uint32_t>> children;
        std::int64_t token = -1;
    };

    VocabTokenizer() = default;
    std::uint32_t child(std::uint32_t node, unsigned char c) const;
    void insert(std::string_view piece, TokenId id);

    std::vector<std::string> pieces_;
    std::vector<TrieNode> trie_;
    std::array<TokenId, 256> byte_fallback_{};
};

/// "builtin" yields the byte tokenizer; anything else is read as an
/// external vocabulary file.
std::shared_ptr<const Tokenizer> load_tokenizer(const std::string& path_or_builtin);

} // namespace meco
