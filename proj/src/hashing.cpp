#include "meco/hashing.hpp"

#include "meco/errors.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <fstream>
#include <vector>

namespace meco {

Sha256Stream::Sha256Stream() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest init failed");
    }
}

Sha256Stream::~Sha256Stream() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void Sha256Stream::update(const void* data, std::size_t size) {
    if (size != 0) {
        EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, size);
    }
}

Sha256Digest Sha256Stream::finish() {
    Sha256Digest out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
    return out;
}

Sha256Digest sha256(std::span<const std::uint8_t> bytes) {
    Sha256Stream s;
    s.update(bytes.data(), bytes.size());
    return s.finish();
}

Sha256Digest sha256(std::string_view text) {
    Sha256Stream s;
    s.update(text.data(), text.size());
    return s.finish();
}

Sha256Digest sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string() + " for hashing");
    }
    Sha256Stream s;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        s.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return s.finish();
}

std::array<std::uint8_t, 16> keyed_hash128(const HashKey& key, std::string_view message) {
    std::array<std::uint8_t, 32> mac{};
    unsigned int len = 0;
    HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
         reinterpret_cast<const unsigned char*>(message.data()), message.size(), mac.data(), &len);
    std::array<std::uint8_t, 16> out{};
    std::copy_n(mac.begin(), out.size(), out.begin());
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

HashKey parse_hash_key(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    HashKey key{};
    if (hex.size() != key.size() * 2) {
        throw ConfigError("hash key must be 32 hex characters, got " + std::to_string(hex.size()));
    }
    for (std::size_t i = 0; i < key.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            throw ConfigError("hash key contains a non-hex character");
        }
        key[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return key;
}

std::uint64_t stable_hash64(std::string_view text, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = h + seed * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_interval(std::uint64_t hash) {
    return static_cast<double>(hash >> 11) * 0x1.0p-53;
}

} // namespace meco
