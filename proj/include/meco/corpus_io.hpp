#pragma once

#include "meco/hashing.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace meco {

struct Document {
    std::string doc_id;
    std::optional<std::string> url;
    std::string text;
    std::optional<std::string> source_label;

    bool operator==(const Document&) const = default;
};

struct Diagnostic {
    std::string file;
    std::uint64_t line = 0;
    std::string message;
};

struct ManifestFile {
    std::string path;
    std::uint64_t count = 0;
    std::uint64_t text_bytes = 0;
    std::string sha256;

    bool operator==(const ManifestFile&) const = default;
};

struct CorpusManifest {
    std::vector<ManifestFile> files;
    std::uint64_t document_count = 0;
    std::uint64_t text_bytes = 0;

    /// Associative merge; file lists concatenate in argument order.
    void merge(const CorpusManifest& other);
    bool operator==(const CorpusManifest&) const = default;
};

/// Lists the record files under `path`: the file itself, or the `*.jsonl`
/// and `*.ndjson` files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_corpus_files(const std::filesystem::path& path);

/// Parses one newline-delimited JSON record. Returns nullopt and fills
/// `error` for malformed or empty-text records.
std::optional<Document> parse_record(std::string_view line, std::string_view file_name, std::uint64_t line_no,
                                     std::string& error);

std::string serialize_record(const Document& doc);

/// Single-consumer stream of documents over a list of files, yielding file
/// order then record order. Malformed records become diagnostics.
class DocumentReader {
public:
    explicit DocumentReader(const std::filesystem::path& path);
    explicit DocumentReader(std::vector<std::filesystem::path> files);

    std::optional<Document> next();

    const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

    /// Raw line access for chunked parallel parsing: returns the next
    /// non-blank line with its origin, or false at end of stream.
    bool next_line(std::string& line, std::string& file_name, std::uint64_t& line_no);
    void add_diagnostic(Diagnostic d) { diagnostics_.push_back(std::move(d)); }

    /// Enforces doc_id uniqueness; duplicates are reported and should be dropped.
    bool claim_id(const std::string& doc_id, const std::string& file_name, std::uint64_t line_no);

private:
    bool open_next_file();

    std::vector<std::filesystem::path> files_;
    std::size_t file_index_ = 0;
    std::ifstream current_;
    std::string current_name_;
    std::uint64_t line_no_ = 0;
    std::unordered_set<std::string> seen_ids_;
    std::vector<Diagnostic> diagnostics_;
};

/// Reads everything; diagnostics are appended to `diagnostics` when given.
std::vector<Document> read_documents(const std::filesystem::path& path,
                                     std::vector<Diagnostic>* diagnostics = nullptr);

/// Writes newline-delimited records atomically (temp file then rename).
/// The manifest entry's path is the file name relative to its directory.
CorpusManifest write_documents(const std::vector<Document>& docs, const std::filesystem::path& path);

std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(std::string_view json_text);
void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Recomputes checksums and counts for every file listed in `manifest`
/// relative to `dir`. Returns a list of mismatches (empty when ok).
std::vector<std::string> verify_corpus_manifest(const CorpusManifest& manifest, const std::filesystem::path& dir);

/// Deterministic disjoint split keyed on (doc_id, seed).
class CorpusSplitter {
public:
    CorpusSplitter(std::vector<std::pair<std::string, double>> fractions, std::uint64_t seed);

    /// Name of the split the document falls in, or nullopt for the
    /// unallocated remainder when fractions sum below one.
    std::optional<std::string_view> assign(std::string_view doc_id) const;

    const std::vector<std::pair<std::string, double>>& fractions() const { return fractions_; }

private:
    std::vector<std::pair<std::string, double>> fractions_;
    std::vector<double> cumulative_;
    std::uint64_t seed_;
};

std::map<std::string, std::set<std::string>> split_corpus(const std::vector<Document>& docs,
                                                          std::vector<std::pair<std::string, double>> fractions,
                                                          std::uint64_t seed);

} // namespace meco
