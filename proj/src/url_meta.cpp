#include "meco/url_meta.hpp"

#include "meco/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace meco {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool valid_scheme(std::string_view s) {
    if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
    });
}

bool valid_host_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_' || c == '%' ||
           static_cast<unsigned char>(c) >= 0x80;
}

std::size_t retained_size(double fraction, std::size_t unique) {
    if (unique == 0) return 0;
    // Absorb representation error such as 0.002 * 10000 = 20.000000000000004.
    auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(unique) - 1e-9));
    return std::clamp<std::size_t>(n, 1, unique);
}

void check_fraction(double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("top fraction must be in (0, 1], got " + std::to_string(fraction));
    }
}

} // namespace

UrlParts parse_url(std::string_view raw) {
    UrlParts parts;
    parts.raw = std::string(raw);

    auto first = raw.find_first_not_of(" \t\r\n");
    auto last = raw.find_last_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        throw DataError("empty URL");
    }
    std::string_view rest = raw.substr(first, last - first + 1);

    if (auto sep = rest.find("://"); sep != std::string_view::npos && valid_scheme(rest.substr(0, sep))) {
        parts.scheme = lower(rest.substr(0, sep));
        rest.remove_prefix(sep + 3);
    } else if (rest.starts_with("//")) {
        rest.remove_prefix(2);
    }

    const auto auth_end = std::min(rest.find_first_of("/?#"), rest.size());
    std::string_view authority = rest.substr(0, auth_end);
    std::string_view tail = rest.substr(auth_end);

    if (auto at = authority.rfind('@'); at != std::string_view::npos) {
        authority.remove_prefix(at + 1);
    }
    std::string_view host = authority;
    if (host.starts_with('[')) {
        auto close = host.find(']');
        if (close == std::string_view::npos) {
            throw DataError("unterminated IPv6 host in URL: " + parts.raw);
        }
        host = host.substr(0, close + 1);
    } else if (auto colon = host.rfind(':'); colon != std::string_view::npos) {
        auto port = host.substr(colon + 1);
        if (!std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw DataError("invalid port in URL: " + parts.raw);
        }
        host = host.substr(0, colon);
    }
    while (host.ends_with('.')) host.remove_suffix(1);

    if (host.empty()) {
        throw DataError("no host in URL: " + parts.raw);
    }
    if (!host.starts_with('[') && !std::all_of(host.begin(), host.end(), valid_host_char)) {
        throw DataError("invalid host in URL: " + parts.raw);
    }
    parts.host = lower(host);

    const auto path_end = std::min(tail.find_first_of("?#"), tail.size());
    parts.path = std::string(tail.substr(0, path_end));
    return parts;
}

std::string_view to_string(MetadataKind kind) {
    switch (kind) {
    case MetadataKind::none: return "none";
    case MetadataKind::domain: return "domain";
    case MetadataKind::full_url: return "full-url";
    case MetadataKind::suffix: return "suffix";
    case MetadataKind::top_k: return "top-k";
    case MetadataKind::hashed: return "hashed";
    case MetadataKind::topic: return "topic";
    }
    return "none";
}

MetadataKind metadata_kind_from_string(std::string_view name) {
    for (auto k : {MetadataKind::none, MetadataKind::domain, MetadataKind::full_url, MetadataKind::suffix,
                   MetadataKind::top_k, MetadataKind::hashed, MetadataKind::topic}) {
        if (to_string(k) == name) return k;
    }
    if (name == "full_url") return MetadataKind::full_url;
    if (name == "top_k") return MetadataKind::top_k;
    throw ConfigError("unknown metadata kind \"" + std::string(name) + "\"");
}

bool is_url_family(MetadataKind kind) {
    return kind == MetadataKind::domain || kind == MetadataKind::full_url || kind == MetadataKind::suffix ||
           kind == MetadataKind::top_k || kind == MetadataKind::hashed;
}

void UrlCounter::add(const Document& doc) {
    ++total_;
    if (!doc.url) return;
    try {
        ++counts_[parse_url(*doc.url).host];
    } catch (const DataError&) {
        // Unparsable URLs count toward the total only.
    }
}

void UrlCounter::merge(const UrlCounter& other) {
    total_ += other.total_;
    for (const auto& [name, count] : other.counts_) counts_[name] += count;
}

UrlVocab::UrlVocab(const UrlCounter& counter, double top_fraction) : total_(counter.total()) {
    check_fraction(top_fraction);
    ranked_.reserve(counter.counts().size());
    for (const auto& [name, count] : counter.counts()) ranked_.push_back({name, count});
    std::sort(ranked_.begin(), ranked_.end(), [](const Entry& a, const Entry& b) {
        return a.count != b.count ? a.count > b.count : a.name < b.name;
    });
    retain(top_fraction);
}

void UrlVocab::retain(double fraction) {
    retained_fraction_ = fraction;
    retained_count_ = retained_size(fraction, ranked_.size());
    retained_docs_ = 0;
    retained_.clear();
    for (std::size_t i = 0; i < retained_count_; ++i) {
        retained_.insert(ranked_[i].name);
        retained_docs_ += ranked_[i].count;
    }
}

double UrlVocab::coverage() const {
    return total_ == 0 ? 0.0 : static_cast<double>(retained_docs_) / static_cast<double>(total_);
}

bool UrlVocab::is_retained(std::string_view domain) const { return retained_.contains(std::string(domain)); }

std::string UrlVocab::to_json() const {
    json j;
    j["total"] = total_;
    j["retained_fraction"] = retained_fraction_;
    j["domains"] = json::array();
    for (const auto& e : ranked_) j["domains"].push_back({{"name", e.name}, {"count", e.count}});
    j["retained"] = json::array();
    for (std::size_t i = 0; i < retained_count_; ++i) j["retained"].push_back(ranked_[i].name);
    j["coverage"] = coverage();
    return j.dump(2) + "\n";
}

UrlVocab UrlVocab::from_json(std::string_view json_text) {
    UrlVocab v;
    try {
        auto j = json::parse(json_text);
        v.total_ = j.at("total").get<std::uint64_t>();
        for (const auto& d : j.at("domains")) {
            v.ranked_.push_back({d.at("name").get<std::string>(), d.at("count").get<std::uint64_t>()});
        }
        std::sort(v.ranked_.begin(), v.ranked_.end(), [](const Entry& a, const Entry& b) {
            return a.count != b.count ? a.count > b.count : a.name < b.name;
        });
        const double fraction = j.at("retained_fraction").get<double>();
        check_fraction(fraction);
        v.retain(fraction);
        if (j.contains("retained")) {
            std::vector<std::string> listed = j["retained"].get<std::vector<std::string>>();
            for (const auto& name : listed) {
                if (!v.retained_.contains(name)) {
                    throw DataError("url vocab lists \"" + name + "\" as retained but its rank disagrees");
                }
            }
            if (listed.size() != v.retained_count_) {
                throw DataError("url vocab retained list size disagrees with retained_fraction");
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed url vocab: ") + e.what());
    }
    return v;
}

UrlVocab build_url_vocab(const std::vector<Document>& docs, double top_fraction) {
    if (docs.empty()) {
        throw DataError("cannot build a URL vocabulary from an empty corpus");
    }
    UrlCounter counter;
    for (const auto& doc : docs) counter.add(doc);
    return UrlVocab(counter, top_fraction);
}

Coverage vocab_coverage(const UrlVocab& vocab, double fraction) {
    check_fraction(fraction);
    Coverage c;
    c.retained_count = retained_size(fraction, vocab.ranked().size());
    for (std::size_t i = 0; i < c.retained_count; ++i) c.retained_documents += vocab.ranked()[i].count;
    c.coverage = vocab.total() == 0 ? 0.0
                                    : static_cast<double>(c.retained_documents) / static_cast<double>(vocab.total());
    return c;
}

std::string hash_domain(std::string_view domain, const HashKey& key) {
    static constexpr char alphabet[] = "0123456789abcdefghijklmnopqrstuvwxyz";
    const auto digest = keyed_hash128(key, domain);
    unsigned __int128 v = 0;
    for (auto b : digest) v = (v << 8) | b;
    // Low-order base-36 digits, most significant first.
    char digits[12];
    for (int i = 11; i >= 0; --i) {
        digits[i] = alphabet[static_cast<int>(v % 36)];
        v /= 36;
    }
    std::string out(digits, 8);
    out.push_back('-');
    out.append(digits + 8, 4);
    return out;
}

std::vector<std::vector<std::string>> hashed_collisions(const UrlVocab& vocab, const HashKey& key) {
    std::unordered_map<std::string, std::vector<std::string>> by_hash;
    for (const auto& e : vocab.ranked()) by_hash[hash_domain(e.name, key)].push_back(e.name);
    std::vector<std::vector<std::string>> out;
    for (auto& [h, names] : by_hash) {
        if (names.size() > 1) {
            std::sort(names.begin(), names.end());
            out.push_back(std::move(names));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

TopicTable read_topic_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read topic table " + path.string());
    }
    TopicTable table;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("doc_id") || !j.contains("topic") ||
            !j["doc_id"].is_string() || !j["topic"].is_string()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed topic record");
        }
        table[j["doc_id"].get<std::string>()] = j["topic"].get<std::string>();
    }
    return table;
}

Extraction extract_metadata(const Document& doc, const MetadataSpec& spec, const ExtractInputs& inputs) {
    Extraction out;
    if (spec.kind == MetadataKind::none) return out;

    if (spec.kind == MetadataKind::top_k && inputs.vocab == nullptr) {
        throw ConfigError("top-k metadata requires a URL vocabulary (run analyze-urls first)");
    }
    if (spec.kind == MetadataKind::hashed && inputs.key == nullptr) {
        throw ConfigError("hashed metadata requires a hash key (set MECO_HASH_KEY)");
    }
    if (spec.kind == MetadataKind::topic) {
        if (inputs.topics == nullptr) {
            throw ConfigError("topic metadata requires a topic table (run annotate-topics first)");
        }
        auto it = inputs.topics->find(doc.doc_id);
        if (it == inputs.topics->end() || it->second.empty()) {
            out.diagnostic = "no topic for doc_id \"" + doc.doc_id + "\"";
            return out;
        }
        out.value = {MetadataKind::topic, it->second};
        return out;
    }

    if (!doc.url) return out;
    UrlParts parts;
    try {
        parts = parse_url(*doc.url);
    } catch (const DataError& e) {
        out.diagnostic = e.what();
        return out;
    }

    switch (spec.kind) {
    case MetadataKind::domain:
        out.value = {spec.kind, parts.host};
        break;
    case MetadataKind::full_url:
        out.value = {spec.kind, parts.host + parts.path};
        break;
    case MetadataKind::suffix: {
        auto dot = parts.host.rfind('.');
        out.value = {spec.kind, dot == std::string::npos ? parts.host : parts.host.substr(dot + 1)};
        break;
    }
    case MetadataKind::top_k:
        out.value = {spec.kind, inputs.vocab->is_retained(parts.host) ? parts.host : std::string("unknown")};
        break;
    case MetadataKind::hashed:
        out.value = {spec.kind, hash_domain(parts.host, *inputs.key)};
        break;
    default:
        break;
    }
    return out;
}

} // namespace meco
