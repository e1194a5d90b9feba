#pragma once

#include "meco/corpus_io.hpp"
#include "meco/tokenizer.hpp"
#include "meco/url_meta.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace meco {

/// Prefix for a metadata value: `URL: <value>\n\n` for the URL family,
/// `Topic: <value>\n\n` for topics, empty for none.
std::string render_prefix(MetadataKind kind, std::string_view value);

struct ConditionedDocument {
    std::string doc_id;
    std::string prefix;
    std::string body;
    MetadataKind kind = MetadataKind::none;
};

ConditionedDocument condition_document(const Document& doc, const MetadataValue& metadata);

struct TokenizedDocument {
    std::string doc_id;
    std::vector<TokenId> ids;
    /// One entry per token, 0 or 1. Position i governs the loss on token i.
    std::vector<std::uint8_t> loss_mask;
    std::uint32_t n_prefix_tokens = 0;
};

struct TokenizeOptions {
    /// Whether the trailing eos contributes to the loss.
    bool eos_loss = true;
};

/// ids = [bos] + encode(prefix) + encode(body) + [eos]; mask is 0 on bos
/// and prefix, 1 on body and (by default) eos.
TokenizedDocument tokenize_document(const Document& doc, const MetadataValue& metadata, const Tokenizer& tokenizer,
                                    const TokenizeOptions& options = {});

/// `URL: <url>\n\n<prompt>`. The URL is not validated and may be fabricated.
std::string build_conditional_prompt(std::string_view url, std::string_view prompt);

/// Registered evaluation task names and their customized URLs, in table order.
const std::vector<std::pair<std::string, std::string>>& task_url_registry();

/// Throws ConfigError listing the known tasks when `task_name` is unknown.
std::string task_url(std::string_view task_name);

} // namespace meco
