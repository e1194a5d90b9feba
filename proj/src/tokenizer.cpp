#include "meco/tokenizer.hpp"

#include "meco/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace meco {

namespace {

constexpr std::string_view kBuiltinDescriptor = "meco-builtin-byte-tokenizer/v1 specials=bos,eos,pad offset=3";

bool parse_byte_fallback(std::string_view piece, unsigned char& byte) {
    if (piece.size() != 6 || piece.substr(0, 3) != "<0x" || piece[5] != '>') {
        return false;
    }
    unsigned value = 0;
    for (char c : piece.substr(3, 2)) {
        value <<= 4;
        if (c >= '0' && c <= '9') value |= static_cast<unsigned>(c - '0');
        else if (c >= 'A' && c <= 'F') value |= static_cast<unsigned>(c - 'A' + 10);
        else if (c >= 'a' && c <= 'f') value |= static_cast<unsigned>(c - 'a' + 10);
        else return false;
    }
    byte = static_cast<unsigned char>(value);
    return true;
}

} // namespace

ByteTokenizer::ByteTokenizer() {
    spec_.vocab_size = 256 + kByteOffset;
    spec_.bos_id = 0;
    spec_.eos_id = 1;
    spec_.pad_id = 2;
    spec_.implementation_id = sha256(kBuiltinDescriptor);
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> out;
    encode_into(text, out);
    return out;
}

void ByteTokenizer::encode_into(std::string_view text, std::vector<TokenId>& out) const {
    out.reserve(out.size() + text.size());
    for (unsigned char c : text) {
        out.push_back(static_cast<TokenId>(c) + kByteOffset);
    }
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (id >= spec_.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " out of range for vocab of " +
                            std::to_string(spec_.vocab_size));
        }
        if (id >= kByteOffset) {
            out.push_back(static_cast<char>(id - kByteOffset));
        }
    }
    return out;
}

std::uint32_t VocabTokenizer::child(std::uint32_t node, unsigned char c) const {
    for (const auto& [ch, next] : trie_[node].children) {
        if (ch == c) return next;
    }
    return 0;
}

void VocabTokenizer::insert(std::string_view piece, TokenId id) {
    std::uint32_t node = 0;
    for (unsigned char c : piece) {
        std::uint32_t next = child(node, c);
        if (next == 0) {
            next = static_cast<std::uint32_t>(trie_.size());
            trie_.emplace_back();
            trie_[node].children.emplace_back(c, next);
        }
        node = next;
    }
    // First occurrence wins for duplicated pieces.
    if (trie_[node].token < 0) {
        trie_[node].token = id;
    }
}

std::shared_ptr<const VocabTokenizer> VocabTokenizer::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read tokenizer vocab " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::shared_ptr<const VocabTokenizer> VocabTokenizer::from_json_text(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed tokenizer vocab: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("tokens") || !doc["tokens"].is_array()) {
        throw ConfigError("malformed tokenizer vocab: missing \"tokens\" array");
    }

    std::shared_ptr<VocabTokenizer> tok(new VocabTokenizer());
    for (const auto& t : doc["tokens"]) {
        if (!t.is_string()) {
            throw ConfigError("malformed tokenizer vocab: non-string token");
        }
        tok->pieces_.push_back(t.get<std::string>());
    }

    auto find_special = [&](const char* name) -> TokenId {
        if (!doc.contains(name) || !doc[name].is_string()) {
            throw ConfigError(std::string("tokenizer vocab missing special token \"") + name + "\"");
        }
        const auto piece = doc[name].get<std::string>();
        auto it = std::find(tok->pieces_.begin(), tok->pieces_.end(), piece);
        if (it == tok->pieces_.end()) {
            throw ConfigError(std::string("tokenizer vocab missing special token \"") + name + "\" (" + piece +
                              ") in tokens list");
        }
        return static_cast<TokenId>(it - tok->pieces_.begin());
    };
    tok->spec_.bos_id = find_special("bos");
    tok->spec_.eos_id = find_special("eos");
    tok->spec_.pad_id = find_special("pad");
    tok->spec_.vocab_size = static_cast<std::uint32_t>(tok->pieces_.size());
    if (tok->spec_.bos_id == tok->spec_.eos_id || tok->spec_.bos_id == tok->spec_.pad_id ||
        tok->spec_.eos_id == tok->spec_.pad_id) {
        throw ConfigError("tokenizer vocab: bos, eos and pad must be distinct tokens");
    }

    std::array<bool, 256> have_byte{};
    tok->trie_.emplace_back();
    for (std::size_t i = 0; i < tok->pieces_.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        const auto& piece = tok->pieces_[i];
        unsigned char byte = 0;
        if (tok->is_special(id) || piece.empty()) {
            continue;
        }
        if (parse_byte_fallback(piece, byte)) {
            if (!have_byte[byte]) {
                tok->byte_fallback_[byte] = id;
                have_byte[byte] = true;
            }
            continue;
        }
        tok->insert(piece, id);
        if (piece.size() == 1) {
            auto b = static_cast<unsigned char>(piece[0]);
            tok->byte_fallback_[b] = id;
            have_byte[b] = true;
        }
    }
    for (int b = 0; b < 256; ++b) {
        if (!have_byte[static_cast<std::size_t>(b)]) {
            char name[8];
            std::snprintf(name, sizeof(name), "<0x%02X>", b);
            throw ConfigError(std::string("tokenizer vocab has no byte fallback for ") + name);
        }
    }
    tok->spec_.implementation_id = sha256(json_text);
    return tok;
}

std::vector<TokenId> VocabTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> out;
    encode_into(text, out);
    return out;
}

void VocabTokenizer::encode_into(std::string_view text, std::vector<TokenId>& out) const {
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::uint32_t node = 0;
        std::int64_t best = -1;
        std::size_t best_len = 0;
        for (std::size_t i = pos; i < text.size(); ++i) {
            node = child(node, static_cast<unsigned char>(text[i]));
            if (node == 0) break;
            if (trie_[node].token >= 0) {
                best = trie_[node].token;
                best_len = i - pos + 1;
            }
        }
        if (best < 0) {
            out.push_back(byte_fallback_[static_cast<unsigned char>(text[pos])]);
            ++pos;
        } else {
            out.push_back(static_cast<TokenId>(best));
            pos += best_len;
        }
    }
}

std::string VocabTokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id >= spec_.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " out of range for vocab of " +
                            std::to_string(spec_.vocab_size));
        }
        if (is_special(id)) continue;
        unsigned char byte = 0;
        if (parse_byte_fallback(pieces_[id], byte)) {
            out.push_back(static_cast<char>(byte));
        } else {
            out += pieces_[id];
        }
    }
    return out;
}

std::shared_ptr<const Tokenizer> load_tokenizer(const std::string& path_or_builtin) {
    if (path_or_builtin.empty() || path_or_builtin == "builtin") {
        return std::make_shared<const ByteTokenizer>();
    }
    return VocabTokenizer::from_file(path_or_builtin);
}

} // namespace meco
