#pragma once

#include "meco/corpus_io.hpp"
#include "meco/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace meco {

struct AnnotatorConfig {
    /// Scheme, host and port, e.g. "http://localhost:8000".
    std::string endpoint = "http://localhost:8000";
    std::string path = "/v1/chat/completions";
    std::string model = "meta-llama/Llama-3.1-8B-Instruct";
    /// Name of the environment variable holding the bearer token; the
    /// header is omitted when the variable is unset.
    std::string api_key_env = "MECO_ANNOTATOR_API_KEY";
    std::uint32_t max_snippet_tokens = 1024;
    double timeout_seconds = 60.0;
    std::uint32_t max_retries = 3;
    std::uint32_t backoff_ms = 500;
    std::uint32_t concurrency = 8;
    std::filesystem::path cache_dir = "cache";

    void validate() const;
};

struct TopicRecord {
    std::string doc_id;
    std::string topic;
    std::string raw;
    std::string prompt_sha256;
    /// Set when post-processing cut the model output down to four words.
    bool truncated = false;

    bool operator==(const TopicRecord&) const = default;
};

struct AnnotationFailure {
    std::string doc_id;
    std::string error;
};

struct AnnotationResult {
    /// In input order.
    std::vector<TopicRecord> records;
    std::vector<AnnotationFailure> failures;
    std::uint64_t network_calls = 0;
    std::uint64_t cache_hits = 0;
};

/// Text of the first `max_tokens` tokens of the document.
std::string extract_snippet(const Document& doc, const Tokenizer& tokenizer, std::uint32_t max_tokens);

/// The topic-generation instruction with the snippet substituted.
std::string render_topic_prompt(std::string_view snippet);

struct CleanTopic {
    std::string topic;
    bool truncated = false;
};

/// Strips surrounding quotes, punctuation and whitespace, collapses inner
/// whitespace and keeps at most four words. Throws DataError when nothing
/// is left.
CleanTopic postprocess_topic(std::string_view raw);

/// Request body for the chat-completions call (greedy decoding).
std::string build_annotation_request(const AnnotatorConfig& config, std::string_view prompt);

/// Extracts choices[0].message.content; throws ServiceError otherwise.
std::string parse_annotation_response(std::string_view body);

AnnotationResult annotate_batch(const std::vector<Document>& docs, const AnnotatorConfig& config,
                                const Tokenizer& tokenizer);

void write_topic_table(const std::vector<TopicRecord>& records, const std::filesystem::path& path);

} // namespace meco
