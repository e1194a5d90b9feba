#pragma once

// Test-only reference implementations and generators. Nothing here calls
// into the code paths it is used to check.

#include "meco/corpus_io.hpp"
#include "meco/packing.hpp"
#include "meco/tokenizer.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace meco::testing {

/// Reference packer: builds one sequence at a time by pulling documents
/// off the front of the list.
struct RefPackResult {
    std::vector<PackedSequence> sequences;
    std::uint64_t discarded = 0;
    std::uint64_t padded = 0;
    std::uint64_t truncated_docs = 0;
};

inline RefPackResult reference_pack(const std::vector<TokenizedDocument>& docs, std::uint32_t L, TokenId pad) {
    RefPackResult r;
    std::size_t next = 0;
    while (next < docs.size()) {
        PackedSequence seq;
        while (next < docs.size() && seq.ids.size() < L) {
            const auto& d = docs[next++];
            const std::size_t take = std::min<std::size_t>(d.ids.size(), L - seq.ids.size());
            seq.segments.push_back({static_cast<std::uint32_t>(seq.ids.size()), static_cast<std::uint32_t>(take)});
            for (std::size_t i = 0; i < take; ++i) {
                seq.ids.push_back(d.ids[i]);
                seq.loss_mask.push_back(d.loss_mask[i]);
            }
            if (take < d.ids.size()) {
                r.discarded += d.ids.size() - take;
                ++r.truncated_docs;
            }
        }
        seq.n_pad = static_cast<std::uint32_t>(L - seq.ids.size());
        r.padded += seq.n_pad;
        seq.ids.resize(L, pad);
        seq.loss_mask.resize(L, 0);
        r.sequences.push_back(std::move(seq));
    }
    return r;
}

/// Random tokenized document of exactly `len` tokens (bos, body, eos) with
/// a random-length masked prefix.
inline TokenizedDocument random_tokenized(std::mt19937_64& rng, std::size_t len, const TokenizerSpec& spec,
                                          const std::string& id) {
    TokenizedDocument d;
    d.doc_id = id;
    std::uniform_int_distribution<TokenId> tok(3, spec.vocab_size - 1);
    d.ids.push_back(spec.bos_id);
    for (std::size_t i = 2; i < len; ++i) d.ids.push_back(tok(rng));
    d.ids.push_back(spec.eos_id);
    const std::size_t prefix = len > 2 ? std::uniform_int_distribution<std::size_t>(0, len - 2)(rng) : 0;
    d.loss_mask.assign(len, 1);
    for (std::size_t i = 0; i <= prefix && i < len; ++i) d.loss_mask[i] = 0;
    d.n_prefix_tokens = static_cast<std::uint32_t>(prefix);
    return d;
}

/// Random valid UTF-8 text mixing ASCII, 2-, 3- and 4-byte code points.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t code_points) {
    std::string s;
    std::uniform_int_distribution<int> kind(0, 9);
    for (std::size_t i = 0; i < code_points; ++i) {
        std::uint32_t cp = 0;
        switch (kind(rng)) {
        case 0: cp = std::uniform_int_distribution<std::uint32_t>(0x80, 0x7FF)(rng); break;
        case 1: cp = std::uniform_int_distribution<std::uint32_t>(0x800, 0xD7FF)(rng); break;
        case 2: cp = std::uniform_int_distribution<std::uint32_t>(0x10000, 0x10FFFF)(rng); break;
        default: cp = std::uniform_int_distribution<std::uint32_t>(0x20, 0x7E)(rng); break;
        }
        if (cp < 0x80) {
            s.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            s.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return s;
}

inline std::string random_words(std::mt19937_64& rng, std::size_t n_words) {
    static const char* words[] = {"the", "model", "data", "token", "source", "web", "page", "news", "quiz",
                                  "forum", "code", "science", "story", "pre-training", "corpus", "über", "naïve"};
    std::uniform_int_distribution<std::size_t> pick(0, std::size(words) - 1);
    std::string s;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (i) s.push_back(i % 13 == 0 ? '\n' : ' ');
        s += words[pick(rng)];
    }
    return s;
}

/// Zipf-distributed domains: domain k is drawn with weight 1 / (k+1)^s.
inline std::vector<Document> zipf_corpus(std::size_t n_docs, std::size_t n_domains, double s, std::uint64_t seed,
                                         double url_share = 1.0) {
    std::mt19937_64 rng(seed);
    std::vector<double> weights(n_domains);
    for (std::size_t k = 0; k < n_domains; ++k) weights[k] = 1.0 / std::pow(static_cast<double>(k + 1), s);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::bernoulli_distribution has_url(url_share);
    std::vector<Document> docs;
    docs.reserve(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
        Document d;
        d.doc_id = "doc-" + std::to_string(i);
        d.text = random_words(rng, 8);
        if (has_url(rng)) {
            d.url = "https://site" + std::to_string(pick(rng)) + ".example.org/page/" + std::to_string(i);
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

/// Independent domain count: parses the host by hand from the generator's
/// fixed URL shape.
inline std::map<std::string, std::uint64_t> brute_force_domain_counts(const std::vector<Document>& docs) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& d : docs) {
        if (!d.url) continue;
        auto rest = d.url->substr(d.url->find("//") + 2);
        counts[rest.substr(0, rest.find('/'))]++;
    }
    return counts;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
}

inline std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// SHA-256 of a file computed by the system `sha256sum` tool.
inline std::string external_sha256(const std::filesystem::path& path) {
    std::string cmd = "sha256sum '" + path.string() + "'";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {};
    char buf[128] = {};
    std::string out;
    if (fgets(buf, sizeof(buf), pipe)) out = buf;
    pclose(pipe);
    return out.substr(0, 64);
}

/// Every regular file under `dir` keyed by its relative path.
inline std::map<std::string, std::string> snapshot_tree(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_all(e.path());
    }
    return out;
}

/// Fresh scratch directory under the system temp dir.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("meco-" + tag + "-" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace meco::testing
