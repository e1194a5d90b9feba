#include "meco/topic_annotator.hpp"

#include "meco/errors.hpp"
#include "meco/hashing.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace meco {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kPromptHead =
    "Based on the given sampled snippet from a document (could be a webpage, a book, a codebase, a paper, or "
    "anything else), write a domain keyphrase (within 4 words; for example, code, international news, food blog, "
    "biography, science fiction, politics essay, gaming forum, algebra quiz, physics textbook, restaurant "
    "advertisement, religous story, etc.) for the document. The \"domain keyphrase\" should consider both the "
    "topics and the genre/source of the document.\n\n"
    "*** Start of the snippet ***\n\n";

constexpr std::string_view kPromptTail =
    "\n\n*** End of the snippet ***\n\n"
    "Now output the domain (do not output other things):";

bool is_strip_char(unsigned char c) {
    return std::isspace(c) || std::string_view("\"'`.,;:!?*()[]{}<>").find(static_cast<char>(c)) != std::string_view::npos;
}

std::string_view strip(std::string_view s) {
    // Curly quotes are multi-byte; peel them off alongside ASCII punctuation.
    static constexpr std::string_view curly[] = {"\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99"};
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        while (!s.empty() && is_strip_char(static_cast<unsigned char>(s.front()))) s.remove_prefix(1), changed = true;
        while (!s.empty() && is_strip_char(static_cast<unsigned char>(s.back()))) s.remove_suffix(1), changed = true;
        for (auto q : curly) {
            if (s.starts_with(q)) s.remove_prefix(q.size()), changed = true;
            if (s.ends_with(q)) s.remove_suffix(q.size()), changed = true;
        }
    }
    return s;
}

std::optional<TopicRecord> read_cache(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    try {
        TopicRecord r;
        r.doc_id = j.at("doc_id").get<std::string>();
        r.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
        r.raw = j.at("raw").get<std::string>();
        r.topic = j.at("topic").get<std::string>();
        r.truncated = j.value("truncated", false);
        return r;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void write_cache(const fs::path& dir, const TopicRecord& r, std::size_t unique) {
    json j = {{"doc_id", r.doc_id}, {"prompt_sha256", r.prompt_sha256}, {"raw", r.raw}, {"topic", r.topic},
              {"truncated", r.truncated}};
    const auto final_path = dir / (r.prompt_sha256 + ".json");
    const auto tmp = dir / (r.prompt_sha256 + ".json.tmp" + std::to_string(unique));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << j.dump(2, ' ', false, json::error_handler_t::replace) << "\n";
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            return;
        }
    }
    fs::rename(tmp, final_path);
}

} // namespace

void AnnotatorConfig::validate() const {
    if (max_snippet_tokens < 1) throw ConfigError("max snippet tokens must be at least 1");
    if (concurrency < 1) throw ConfigError("annotator concurrency must be at least 1");
    if (endpoint.empty()) throw ConfigError("annotator endpoint is empty");
    if (!(timeout_seconds > 0.0)) throw ConfigError("annotator timeout must be positive");
}

std::string extract_snippet(const Document& doc, const Tokenizer& tokenizer, std::uint32_t max_tokens) {
    auto ids = tokenizer.encode(doc.text);
    if (ids.size() > max_tokens) ids.resize(max_tokens);
    return tokenizer.decode(ids);
}

std::string render_topic_prompt(std::string_view snippet) {
    std::string out;
    out.reserve(kPromptHead.size() + snippet.size() + kPromptTail.size());
    out += kPromptHead;
    out += snippet;
    out += kPromptTail;
    return out;
}

CleanTopic postprocess_topic(std::string_view raw) {
    std::string_view s = strip(raw);
    std::vector<std::string_view> words;
    std::size_t pos = 0;
    while (pos < s.size()) {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        std::size_t end = pos;
        while (end < s.size() && !std::isspace(static_cast<unsigned char>(s[end]))) ++end;
        if (end > pos) words.push_back(s.substr(pos, end - pos));
        pos = end;
    }
    CleanTopic out;
    if (words.size() > 4) {
        words.resize(4);
        out.truncated = true;
    }
    std::string joined;
    for (auto w : words) {
        if (!joined.empty()) joined.push_back(' ');
        joined += w;
    }
    out.topic = std::string(strip(joined));
    if (out.topic.empty()) {
        throw DataError("topic is empty after cleaning");
    }
    return out;
}

std::string build_annotation_request(const AnnotatorConfig& config, std::string_view prompt) {
    json body = {{"model", config.model},
                 {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
                 {"temperature", 0}};
    return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string parse_annotation_response(std::string_view body) {
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ServiceError("response is not JSON");
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw ServiceError("response content is not a string");
        return content.get<std::string>();
    } catch (const json::exception&) {
        throw ServiceError("response lacks choices[0].message.content");
    }
}

AnnotationResult annotate_batch(const std::vector<Document>& docs, const AnnotatorConfig& config,
                                const Tokenizer& tokenizer) {
    config.validate();
    fs::create_directories(config.cache_dir);

    std::string api_key;
    if (const char* k = std::getenv(config.api_key_env.c_str())) api_key = k;

    struct Slot {
        std::optional<TopicRecord> record;
        std::optional<std::string> error;
        std::uint32_t requests = 0;
        bool cached = false;
    };
    std::vector<Slot> slots(docs.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&](std::size_t worker_id) {
        std::optional<httplib::Client> client;
        for (std::size_t i = next++; i < docs.size(); i = next++) {
            const auto& doc = docs[i];
            auto& slot = slots[i];
            try {
                const auto prompt = render_topic_prompt(extract_snippet(doc, tokenizer, config.max_snippet_tokens));
                const auto prompt_hash = to_hex(sha256(prompt));
                const auto cache_file = config.cache_dir / (prompt_hash + ".json");
                if (auto hit = read_cache(cache_file); hit && hit->prompt_sha256 == prompt_hash) {
                    hit->doc_id = doc.doc_id;
                    slot.record = std::move(*hit);
                    slot.cached = true;
                    continue;
                }

                if (!client) {
                    client.emplace(config.endpoint);
                    const auto secs = std::chrono::duration<double>(config.timeout_seconds);
                    client->set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
                    client->set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
                    client->set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
                    if (!api_key.empty()) client->set_bearer_token_auth(api_key);
                }
                const auto body = build_annotation_request(config, prompt);
                std::string last_error;
                std::optional<std::string> raw;
                for (std::uint32_t attempt = 0; attempt <= config.max_retries && !raw; ++attempt) {
                    if (attempt > 0) {
                        std::this_thread::sleep_for(std::chrono::milliseconds(std::uint64_t{config.backoff_ms}
                                                                              << (attempt - 1)));
                    }
                    ++slot.requests;
                    auto res = client->Post(config.path, body, "application/json");
                    if (!res) {
                        last_error = "request failed: " + httplib::to_string(res.error());
                        continue;
                    }
                    if (res->status != 200) {
                        last_error = "HTTP " + std::to_string(res->status);
                        continue;
                    }
                    try {
                        raw = parse_annotation_response(res->body);
                    } catch (const ServiceError& e) {
                        last_error = e.what();
                    }
                }
                if (!raw) {
                    slot.error = last_error + " after " + std::to_string(config.max_retries + 1) + " attempt(s)";
                    continue;
                }
                auto clean = postprocess_topic(*raw);
                TopicRecord record{doc.doc_id, clean.topic, *raw, prompt_hash, clean.truncated};
                write_cache(config.cache_dir, record, worker_id);
                slot.record = std::move(record);
            } catch (const std::exception& e) {
                slot.error = e.what();
            }
        }
    };

    const auto n_threads = std::max<std::size_t>(1, std::min<std::size_t>(config.concurrency, docs.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker, t);
    worker(0);
    for (auto& t : threads) t.join();

    AnnotationResult result;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto& slot = slots[i];
        result.network_calls += slot.requests;
        if (slot.cached) ++result.cache_hits;
        if (slot.record) {
            result.records.push_back(std::move(*slot.record));
        } else {
            result.failures.push_back({docs[i].doc_id, slot.error.value_or("unknown failure")});
        }
    }
    return result;
}

void write_topic_table(const std::vector<TopicRecord>& records, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const auto& r : records) {
            out << json{{"doc_id", r.doc_id}, {"topic", r.topic}}.dump(-1, ' ', false, json::error_handler_t::replace)
                << "\n";
        }
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("cannot write topic table " + path.string());
        }
    }
    fs::rename(tmp, path);
}

} // namespace meco
