#include "meco/conditioning.hpp"

#include "meco/errors.hpp"

#include <algorithm>

namespace meco {

std::string render_prefix(MetadataKind kind, std::string_view value) {
    if (kind == MetadataKind::none) return {};
    std::string out = kind == MetadataKind::topic ? "Topic: " : "URL: ";
    out += value;
    out += "\n\n";
    return out;
}

ConditionedDocument condition_document(const Document& doc, const MetadataValue& metadata) {
    ConditionedDocument out;
    out.doc_id = doc.doc_id;
    out.kind = metadata.value.empty() ? MetadataKind::none : metadata.kind;
    out.prefix = render_prefix(out.kind, metadata.value);
    out.body = doc.text;
    return out;
}

TokenizedDocument tokenize_document(const Document& doc, const MetadataValue& metadata, const Tokenizer& tokenizer,
                                    const TokenizeOptions& options) {
    if (doc.text.empty()) {
        throw DataError("cannot tokenize empty document " + doc.doc_id);
    }
    const auto& spec = tokenizer.spec();
    const auto conditioned = condition_document(doc, metadata);

    TokenizedDocument out;
    out.doc_id = doc.doc_id;
    out.ids.reserve(conditioned.prefix.size() + conditioned.body.size() + 2);
    out.ids.push_back(spec.bos_id);
    tokenizer.encode_into(conditioned.prefix, out.ids);
    const std::size_t body_start = out.ids.size();
    tokenizer.encode_into(conditioned.body, out.ids);
    out.ids.push_back(spec.eos_id);

    out.n_prefix_tokens = static_cast<std::uint32_t>(body_start - 1);
    out.loss_mask.assign(out.ids.size(), 1);
    std::fill(out.loss_mask.begin(), out.loss_mask.begin() + static_cast<std::ptrdiff_t>(body_start), 0);
    out.loss_mask.back() = options.eos_loss ? 1 : 0;
    return out;
}

std::string build_conditional_prompt(std::string_view url, std::string_view prompt) {
    std::string out = render_prefix(MetadataKind::domain, url);
    out += prompt;
    return out;
}

const std::vector<std::pair<std::string, std::string>>& task_url_registry() {
    static const std::vector<std::pair<std::string, std::string>> registry = {
        {"mmlu", "www.testprepportal.com"},
        {"arc_easy", "www.sciencestudyquiz.com"},
        {"arc_challenge", "www.sciencestudyquiz.com"},
        {"csqa", "www.quizsmart.com"},
        {"hellaswag", "www.wikihowquiz.com"},
        {"openbookqa", "www.factquizmaster.com"},
        {"piqa", "www.basicknowledgequiz.com"},
        {"social_iqa", "www.socialskillsassessment.com"},
        {"winogrande", "www.testpreppractice.com"},
        {"truthfulqa", "www.factcheckfun.com"},
    };
    return registry;
}

std::string task_url(std::string_view task_name) {
    for (const auto& [name, url] : task_url_registry()) {
        if (name == task_name) return url;
    }
    std::string known;
    for (const auto& [name, url] : task_url_registry()) {
        if (!known.empty()) known += ", ";
        known += name;
    }
    throw ConfigError("unknown task \"" + std::string(task_name) + "\"; known tasks: " + known);
}

} // namespace meco
