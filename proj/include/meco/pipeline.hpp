#pragma once

#include "meco/conditioning.hpp"
#include "meco/packing.hpp"
#include "meco/schedule.hpp"
#include "meco/shards.hpp"
#include "meco/url_meta.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace meco {

inline constexpr std::string_view kVersion = "0.1.0";

struct BuildOptions {
    std::filesystem::path corpus;
    std::filesystem::path out_dir;
    MetadataSpec metadata;
    std::uint32_t seq_len = 8192;
    PackPolicy pack_policy = PackPolicy::truncate;
    MixStrategy strategy;
    double cooldown_fraction = kDefaultCooldownFraction;
    std::uint64_t seed = 0;
    std::uint32_t workers = 1;
    std::uint64_t seqs_per_shard = 1024;
    std::string tokenizer = "builtin";
    std::optional<std::filesystem::path> vocab;
    std::optional<std::filesystem::path> topics;
    std::optional<HashKey> hash_key;
    bool eos_loss = true;
    /// Zero batch_tokens means "derive from the corpus" (see resolve_batch_tokens);
    /// zero total_tokens means "all emitted tokens".
    TrainConfig train;
    /// Lines handed to a worker at a time.
    std::size_t chunk_lines = 2048;

    /// Checks everything that can be checked before reading the corpus.
    void validate() const;
};

struct ShardSetSummary {
    std::string name;
    RenderingTag rendering = RenderingTag::standard;
    PackingStats stats;
    std::uint64_t documents = 0;
};

struct BuildResult {
    std::vector<ShardSetSummary> sets;
    SchedulePlan plan;
    std::vector<Diagnostic> diagnostics;
};

/// Batch size used by `build` when none is given: the 4M-token preset,
/// reduced (in whole sequences) so that tiny corpora still yield a plan of
/// at least `min_steps` steps.
std::uint64_t resolve_batch_tokens(std::uint64_t requested, std::uint64_t total_tokens, std::uint32_t seq_len,
                                   std::uint64_t min_steps = 20);

/// Conditions, packs and shards the corpus into `out_dir`. The output is
/// staged in a sibling directory and moved into place only on success.
BuildResult run_build(const BuildOptions& options);

/// Verifies every shard set, the plan and (for two-stage output) the
/// disjointness of the per-stage document sets.
Report verify_output(const std::filesystem::path& out_dir);

/// Reads one doc id per line.
std::vector<std::string> read_doc_ids(const std::filesystem::path& path);

} // namespace meco
