#include "meco/corpus_io.hpp"

#include "meco/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace meco {

namespace fs = std::filesystem;
using nlohmann::json;

void CorpusManifest::merge(const CorpusManifest& other) {
    files.insert(files.end(), other.files.begin(), other.files.end());
    document_count += other.document_count;
    text_bytes += other.text_bytes;
}

std::vector<fs::path> list_corpus_files(const fs::path& path) {
    std::error_code ec;
    if (fs::is_regular_file(path, ec)) {
        return {path};
    }
    if (!fs::is_directory(path, ec)) {
        throw DataError("corpus path does not exist: " + path.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".jsonl" || ext == ".ndjson")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::optional<Document> parse_record(std::string_view line, std::string_view file_name, std::uint64_t line_no,
                                     std::string& error) {
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
        error = "malformed JSON record";
        return std::nullopt;
    }
    auto text_it = rec.find("text");
    if (text_it == rec.end() || !text_it->is_string()) {
        error = "record has no string \"text\" field";
        return std::nullopt;
    }
    Document doc;
    doc.text = text_it->get<std::string>();
    if (doc.text.empty()) {
        error = "record has empty text";
        return std::nullopt;
    }
    if (auto it = rec.find("id"); it != rec.end() && !it->is_null()) {
        if (it->is_string()) {
            doc.doc_id = it->get<std::string>();
        } else if (it->is_number_integer()) {
            doc.doc_id = it->dump();
        } else {
            error = "record \"id\" must be a string or integer";
            return std::nullopt;
        }
    }
    if (doc.doc_id.empty()) {
        doc.doc_id = std::string(file_name) + "#" + std::to_string(line_no);
    }
    if (auto it = rec.find("url"); it != rec.end() && !it->is_null()) {
        if (!it->is_string()) {
            error = "record \"url\" must be a string";
            return std::nullopt;
        }
        auto url = it->get<std::string>();
        if (!url.empty()) doc.url = std::move(url);
    }
    if (auto it = rec.find("source"); it != rec.end() && it->is_string()) {
        doc.source_label = it->get<std::string>();
    }
    return doc;
}

std::string serialize_record(const Document& doc) {
    json rec;
    rec["id"] = doc.doc_id;
    rec["text"] = doc.text;
    if (doc.url) rec["url"] = *doc.url;
    if (doc.source_label) rec["source"] = *doc.source_label;
    return rec.dump();
}

DocumentReader::DocumentReader(const fs::path& path) : files_(list_corpus_files(path)) {}

DocumentReader::DocumentReader(std::vector<fs::path> files) : files_(std::move(files)) {}

bool DocumentReader::open_next_file() {
    while (file_index_ < files_.size()) {
        const auto& path = files_[file_index_++];
        current_ = std::ifstream(path, std::ios::binary);
        if (!current_) {
            throw DataError("cannot read corpus file " + path.string());
        }
        current_name_ = path.filename().string();
        line_no_ = 0;
        return true;
    }
    return false;
}

bool DocumentReader::next_line(std::string& line, std::string& file_name, std::uint64_t& line_no) {
    for (;;) {
        if (!current_.is_open() || !current_) {
            if (current_.is_open() && current_.bad()) {
                throw DataError("read failure in " + current_name_);
            }
            current_.close();
            if (!open_next_file()) return false;
        }
        if (!std::getline(current_, line)) {
            continue;
        }
        ++line_no_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        file_name = current_name_;
        line_no = line_no_;
        return true;
    }
}

bool DocumentReader::claim_id(const std::string& doc_id, const std::string& file_name, std::uint64_t line_no) {
    if (!seen_ids_.insert(doc_id).second) {
        diagnostics_.push_back({file_name, line_no, "duplicate doc_id \"" + doc_id + "\""});
        return false;
    }
    return true;
}

std::optional<Document> DocumentReader::next() {
    std::string line, file_name, error;
    std::uint64_t line_no = 0;
    while (next_line(line, file_name, line_no)) {
        auto doc = parse_record(line, file_name, line_no, error);
        if (!doc) {
            diagnostics_.push_back({file_name, line_no, error});
            continue;
        }
        if (!claim_id(doc->doc_id, file_name, line_no)) continue;
        return doc;
    }
    return std::nullopt;
}

std::vector<Document> read_documents(const fs::path& path, std::vector<Diagnostic>* diagnostics) {
    DocumentReader reader(path);
    std::vector<Document> docs;
    while (auto doc = reader.next()) {
        docs.push_back(std::move(*doc));
    }
    if (diagnostics) {
        diagnostics->insert(diagnostics->end(), reader.diagnostics().begin(), reader.diagnostics().end());
    }
    return docs;
}

CorpusManifest write_documents(const std::vector<Document>& docs, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    ManifestFile entry;
    entry.path = path.filename().string();
    try {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot open " + tmp.string() + " for writing");
        }
        Sha256Stream hasher;
        for (const auto& doc : docs) {
            std::string line = serialize_record(doc);
            line.push_back('\n');
            out.write(line.data(), static_cast<std::streamsize>(line.size()));
            hasher.update(line.data(), line.size());
            ++entry.count;
            entry.text_bytes += doc.text.size();
        }
        out.close();
        if (!out) {
            throw DataError("write failure on " + tmp.string());
        }
        entry.sha256 = to_hex(hasher.finish());
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    CorpusManifest manifest;
    manifest.document_count = entry.count;
    manifest.text_bytes = entry.text_bytes;
    manifest.files.push_back(std::move(entry));
    return manifest;
}

std::string manifest_to_json(const CorpusManifest& manifest) {
    json j;
    j["document_count"] = manifest.document_count;
    j["text_bytes"] = manifest.text_bytes;
    j["files"] = json::array();
    for (const auto& f : manifest.files) {
        j["files"].push_back({{"path", f.path}, {"count", f.count}, {"text_bytes", f.text_bytes}, {"sha256", f.sha256}});
    }
    return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view json_text) {
    CorpusManifest m;
    try {
        auto j = json::parse(json_text);
        m.document_count = j.at("document_count").get<std::uint64_t>();
        m.text_bytes = j.at("text_bytes").get<std::uint64_t>();
        for (const auto& f : j.at("files")) {
            m.files.push_back({f.at("path").get<std::string>(), f.at("count").get<std::uint64_t>(),
                               f.value("text_bytes", std::uint64_t{0}), f.at("sha256").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed corpus manifest: ") + e.what());
    }
    return m;
}

void write_manifest(const CorpusManifest& manifest, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << manifest_to_json(manifest);
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("cannot write manifest " + path.string());
        }
    }
    fs::rename(tmp, path);
}

std::vector<std::string> verify_corpus_manifest(const CorpusManifest& manifest, const fs::path& dir) {
    std::vector<std::string> failures;
    std::uint64_t total = 0;
    for (const auto& f : manifest.files) {
        const auto path = dir / f.path;
        if (!fs::exists(path)) {
            failures.push_back(f.path + ": missing");
            continue;
        }
        if (to_hex(sha256_file(path)) != f.sha256) {
            failures.push_back(f.path + ": sha256 mismatch");
        }
        std::vector<Diagnostic> diags;
        auto docs = read_documents(path, &diags);
        if (docs.size() != f.count) {
            failures.push_back(f.path + ": count " + std::to_string(docs.size()) + " != manifest " +
                               std::to_string(f.count));
        }
        total += f.count;
    }
    if (total != manifest.document_count) {
        failures.push_back("document_count does not equal the sum over files");
    }
    return failures;
}

CorpusSplitter::CorpusSplitter(std::vector<std::pair<std::string, double>> fractions, std::uint64_t seed)
    : fractions_(std::move(fractions)), seed_(seed) {
    double sum = 0.0;
    std::set<std::string> names;
    for (const auto& [name, frac] : fractions_) {
        if (!(frac >= 0.0) || frac > 1.0) {
            throw ConfigError("split fraction for \"" + name + "\" must be in [0, 1]");
        }
        if (name.empty() || !names.insert(name).second) {
            throw ConfigError("split names must be unique and non-empty: \"" + name + "\"");
        }
        sum += frac;
        cumulative_.push_back(sum);
    }
    if (sum > 1.0 + 1e-9) {
        throw ConfigError("split fractions sum to " + std::to_string(sum) + " > 1");
    }
    // Close the rounding gap so a full allocation really covers [0, 1).
    if (!cumulative_.empty() && std::abs(sum - 1.0) <= 1e-9) {
        cumulative_.back() = 1.0;
    }
}

std::optional<std::string_view> CorpusSplitter::assign(std::string_view doc_id) const {
    const double u = unit_interval(stable_hash64(doc_id, seed_ ^ 0x73706c6974ULL));
    for (std::size_t i = 0; i < cumulative_.size(); ++i) {
        if (u < cumulative_[i]) return fractions_[i].first;
    }
    return std::nullopt;
}

std::map<std::string, std::set<std::string>> split_corpus(const std::vector<Document>& docs,
                                                          std::vector<std::pair<std::string, double>> fractions,
                                                          std::uint64_t seed) {
    CorpusSplitter splitter(std::move(fractions), seed);
    std::map<std::string, std::set<std::string>> out;
    for (const auto& [name, frac] : splitter.fractions()) out[name];
    for (const auto& doc : docs) {
        if (auto name = splitter.assign(doc.doc_id)) {
            out[std::string(*name)].insert(doc.doc_id);
        }
    }
    return out;
}

} // namespace meco
