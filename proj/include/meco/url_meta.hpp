#pragma once

#include "meco/corpus_io.hpp"
#include "meco/hashing.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace meco {

struct UrlParts {
    std::string scheme;
    std::string host;
    std::string path;
    std::string raw;
};

/// Lowercases the host and strips port and userinfo. A missing scheme is
/// tolerated (the string is read host-first). Query and fragment are
/// dropped. Throws DataError when no host can be recognized.
UrlParts parse_url(std::string_view raw);

enum class MetadataKind { none, domain, full_url, suffix, top_k, hashed, topic };

std::string_view to_string(MetadataKind kind);
MetadataKind metadata_kind_from_string(std::string_view name);
bool is_url_family(MetadataKind kind);

struct MetadataValue {
    MetadataKind kind = MetadataKind::none;
    std::string value;

    bool operator==(const MetadataValue&) const = default;
};

struct MetadataSpec {
    MetadataKind kind = MetadataKind::domain;
    /// Fraction of unique domains retained for top_k.
    double top_fraction = 0.002;
};

/// Parallel-friendly domain counter; merge() is associative.
class UrlCounter {
public:
    void add(const Document& doc);
    void merge(const UrlCounter& other);

    const std::unordered_map<std::string, std::uint64_t>& counts() const { return counts_; }
    std::uint64_t total() const { return total_; }

private:
    std::unordered_map<std::string, std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

class UrlVocab {
public:
    struct Entry {
        std::string name;
        std::uint64_t count = 0;
    };

    /// Ranks domains by count descending, ties lexicographic, and retains
    /// the top ceil(fraction * unique) of them.
    UrlVocab(const UrlCounter& counter, double top_fraction);

    /// Documents seen, including those without a parsable URL.
    std::uint64_t total() const { return total_; }
    const std::vector<Entry>& ranked() const { return ranked_; }
    double retained_fraction() const { return retained_fraction_; }
    std::size_t retained_count() const { return retained_count_; }
    std::uint64_t retained_documents() const { return retained_docs_; }
    /// retained_documents / total.
    double coverage() const;
    bool is_retained(std::string_view domain) const;

    std::string to_json() const;
    static UrlVocab from_json(std::string_view json_text);

private:
    UrlVocab() = default;
    void retain(double fraction);

    std::uint64_t total_ = 0;
    std::vector<Entry> ranked_;
    double retained_fraction_ = 1.0;
    std::size_t retained_count_ = 0;
    std::uint64_t retained_docs_ = 0;
    std::unordered_set<std::string> retained_;
};

UrlVocab build_url_vocab(const std::vector<Document>& docs, double top_fraction);

struct Coverage {
    std::size_t retained_count = 0;
    std::uint64_t retained_documents = 0;
    double coverage = 0.0;
};

/// Coverage of the top `fraction` of the vocabulary's domains.
Coverage vocab_coverage(const UrlVocab& vocab, double fraction);

/// Twelve base-36 characters of a keyed 128-bit hash, shaped `xxxxxxxx-xxxx`.
std::string hash_domain(std::string_view domain, const HashKey& key);

/// Groups of distinct vocab domains whose hashed values collide.
std::vector<std::vector<std::string>> hashed_collisions(const UrlVocab& vocab, const HashKey& key);

using TopicTable = std::unordered_map<std::string, std::string>;

/// Reads `{doc_id, topic}` newline-delimited records.
TopicTable read_topic_table(const std::filesystem::path& path);

struct ExtractInputs {
    const UrlVocab* vocab = nullptr;
    const HashKey* key = nullptr;
    const TopicTable* topics = nullptr;
};

struct Extraction {
    MetadataValue value;
    /// Set when the document fell back to kind none for a per-doc reason.
    std::optional<std::string> diagnostic;
};

/// Pure function of its arguments. Throws ConfigError when the spec needs
/// an input that was not supplied.
Extraction extract_metadata(const Document& doc, const MetadataSpec& spec, const ExtractInputs& inputs);

} // namespace meco
