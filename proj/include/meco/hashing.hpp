#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace meco {

using Sha256Digest = std::array<std::uint8_t, 32>;
using HashKey = std::array<std::uint8_t, 16>;

Sha256Digest sha256(std::span<const std::uint8_t> bytes);
Sha256Digest sha256(std::string_view text);
Sha256Digest sha256_file(const std::filesystem::path& path);

/// Incremental SHA-256 for streamed writers.
class Sha256Stream {
public:
    Sha256Stream();
    ~Sha256Stream();
    Sha256Stream(const Sha256Stream&) = delete;
    Sha256Stream& operator=(const Sha256Stream&) = delete;

    void update(const void* data, std::size_t size);
    Sha256Digest finish();

private:
    void* ctx_;
};

/// HMAC-SHA256 truncated to the first 16 bytes.
std::array<std::uint8_t, 16> keyed_hash128(const HashKey& key, std::string_view message);

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Parses a 32-character hex string into a 128-bit key.
HashKey parse_hash_key(std::string_view hex);

/// Seeded 64-bit hash that is stable across processes and platforms
/// (FNV-1a over the bytes, finalized with the splitmix64 mixer).
std::uint64_t stable_hash64(std::string_view text, std::uint64_t seed);

/// Maps a stable hash onto [0, 1) using the top 53 bits.
double unit_interval(std::uint64_t hash);

} // namespace meco
