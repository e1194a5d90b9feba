#include "meco/cli.hpp"

#include "meco/conditioning.hpp"
#include "meco/corpus_io.hpp"
#include "meco/errors.hpp"
#include "meco/pipeline.hpp"
#include "meco/schedule.hpp"
#include "meco/topic_annotator.hpp"
#include "meco/url_meta.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace meco::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads config files written as JSON: nested objects become sections
/// (one per subcommand), arrays become multi-value inputs.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json root;
        try {
            input >> root;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        flatten(root, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void flatten(const json& node, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
        if (!node.is_object()) {
            throw CLI::ConversionError("config file root must be a JSON object");
        }
        for (const auto& [key, value] : node.items()) {
            if (value.is_object()) {
                auto next = parents;
                next.push_back(key);
                flatten(value, next, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            out.push_back(std::move(item));
        }
    }
};

std::uint64_t parse_count(const std::string& text, const char* what) {
    std::size_t pos = 0;
    double value = 0;
    try {
        value = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError(std::string(what) + " is not a number: " + text);
    }
    if (pos != text.size() || !(value > 0) || value != std::floor(value) || value > 1.8e19) {
        throw ConfigError(std::string(what) + " must be a positive integer: " + text);
    }
    return static_cast<std::uint64_t>(value);
}

std::optional<HashKey> resolve_hash_key(const std::string& flag_value) {
    if (!flag_value.empty()) return parse_hash_key(flag_value);
    if (const char* env = std::getenv("MECO_HASH_KEY"); env && *env) return parse_hash_key(env);
    return std::nullopt;
}

const std::vector<std::string> kMetadataNames = {"domain", "full-url", "suffix", "top-k", "hashed", "topic", "none"};
const std::vector<std::string> kStrategyNames = {"standard", "all-conditioned", "interleaved", "two-stage"};

struct AnalyzeArgs {
    std::string corpus;
    std::string out;
    double top_fraction = 0.002;
    std::string hash_key;
};

struct AnnotateArgs {
    std::string corpus;
    std::string out;
    AnnotatorConfig config;
    std::string cache_dir = "cache";
    std::string tokenizer = "builtin";
};

struct BuildArgs {
    std::string corpus;
    std::string out;
    std::string metadata = "domain";
    double top_fraction = 0.002;
    std::uint32_t seq_len = 8192;
    std::string pack_policy = "truncate";
    std::string strategy = "two-stage";
    double interleave_p = 0.9;
    double cooldown_frac = kDefaultCooldownFraction;
    std::uint64_t seed = 0;
    std::uint32_t workers = 1;
    std::uint64_t seqs_per_shard = 1024;
    std::string tokenizer = "builtin";
    std::string vocab;
    std::string topics;
    std::string hash_key;
    bool no_eos_loss = false;
    std::string batch_tokens;
    std::string total_tokens;
    double peak_lr = 3e-3;
    double final_lr_ratio = 0.1;
    double warmup_fraction = 0.05;
};

struct PlanArgs {
    std::string tokens;
    std::string batch_tokens = "4194304";
    double cooldown_frac = kDefaultCooldownFraction;
    std::string strategy = "two-stage";
    double interleave_p = 0.9;
    double peak_lr = 3e-3;
    double final_lr_ratio = 0.1;
    double warmup_fraction = 0.05;
    std::string out;
};

struct PromptArgs {
    std::string task;
    std::string url;
    std::string prompt;
    bool list_tasks = false;
};

struct SplitArgs {
    std::string corpus;
    std::string out;
    std::vector<std::string> fractions = {"cond=0.9", "cool=0.1"};
    std::uint64_t seed = 0;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
    DocumentReader reader{fs::path(a.corpus)};
    UrlCounter counter;
    while (auto doc = reader.next()) counter.add(*doc);
    for (const auto& d : reader.diagnostics()) err << d.file << ":" << d.line << ": " << d.message << "\n";
    if (counter.total() == 0) throw DataError("corpus has no valid documents");

    UrlVocab vocab(counter, a.top_fraction);
    fs::create_directories(a.out);
    const auto path = fs::path(a.out) / "url_vocab.json";
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << vocab.to_json();
        if (!f) throw DataError("cannot write " + path.string());
    }
    out << "documents: " << vocab.total() << "\n"
        << "unique domains: " << vocab.ranked().size() << "\n"
        << "retained (top " << a.top_fraction << "): " << vocab.retained_count() << "\n"
        << "coverage: " << vocab.coverage() << "\n";
    for (double f : {0.002, 0.02, 0.2, 1.0}) {
        const auto c = vocab_coverage(vocab, f);
        out << "  top " << f << " -> " << c.retained_count << " domains, coverage " << c.coverage << "\n";
    }
    if (auto key = resolve_hash_key(a.hash_key)) {
        const auto collisions = hashed_collisions(vocab, *key);
        out << "hashed collisions: " << collisions.size() << "\n";
        for (const auto& group : collisions) {
            err << "hash collision:";
            for (const auto& n : group) err << " " << n;
            err << "\n";
        }
    }
    out << "wrote " << path.string() << "\n";
    return kOk;
}

int cmd_annotate(AnnotateArgs a, std::ostream& out, std::ostream& err) {
    a.config.cache_dir = a.cache_dir;
    a.config.validate();
    const auto tokenizer = load_tokenizer(a.tokenizer);
    std::vector<Diagnostic> diags;
    const auto docs = read_documents(a.corpus, &diags);
    for (const auto& d : diags) err << d.file << ":" << d.line << ": " << d.message << "\n";

    const auto result = annotate_batch(docs, a.config, *tokenizer);
    for (const auto& f : result.failures) err << "annotation failed for " << f.doc_id << ": " << f.error << "\n";
    for (const auto& r : result.records) {
        if (r.truncated) err << "topic for " << r.doc_id << " cut to four words: \"" << r.topic << "\"\n";
    }
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    write_topic_table(result.records, a.out);
    out << "annotated " << result.records.size() << " of " << docs.size() << " documents (" << result.cache_hits
        << " from cache, " << result.network_calls << " requests, " << result.failures.size() << " failed)\n";
    if (result.records.empty() && !result.failures.empty()) {
        throw ServiceError("every annotation request failed");
    }
    return kOk;
}

int cmd_build(const BuildArgs& a, std::ostream& out, std::ostream& err) {
    BuildOptions o;
    o.corpus = a.corpus;
    o.out_dir = a.out;
    o.metadata.kind = metadata_kind_from_string(a.metadata);
    o.metadata.top_fraction = a.top_fraction;
    o.seq_len = a.seq_len;
    o.pack_policy = pack_policy_from_string(a.pack_policy);
    o.strategy.kind = strategy_from_string(a.strategy);
    o.strategy.p = a.interleave_p;
    o.cooldown_fraction = a.cooldown_frac;
    o.seed = a.seed;
    o.workers = a.workers;
    o.seqs_per_shard = a.seqs_per_shard;
    o.tokenizer = a.tokenizer;
    if (!a.vocab.empty()) o.vocab = a.vocab;
    if (!a.topics.empty()) o.topics = a.topics;
    o.hash_key = resolve_hash_key(a.hash_key);
    o.eos_loss = !a.no_eos_loss;
    o.train.batch_tokens = a.batch_tokens.empty() ? 0 : parse_count(a.batch_tokens, "--batch-tokens");
    o.train.total_tokens = a.total_tokens.empty() ? 0 : parse_count(a.total_tokens, "--total-tokens");
    o.train.peak_lr = a.peak_lr;
    o.train.final_lr_ratio = a.final_lr_ratio;
    o.train.warmup_fraction = a.warmup_fraction;

    const auto result = run_build(o);
    for (const auto& d : result.diagnostics) err << d.file << ":" << d.line << ": " << d.message << "\n";
    for (const auto& s : result.sets) {
        out << s.name << " (" << to_string(s.rendering) << "): " << s.documents << " documents, "
            << s.stats.sequences << " sequences, " << s.stats.discarded_tokens << " tokens discarded, "
            << s.stats.padded_tokens << " padded\n";
    }
    out << "plan: T=" << result.plan.total_steps << " w=" << result.plan.warmup_steps
        << " b=" << result.plan.boundary_step << " batch_tokens=" << result.plan.batch_tokens << "\n";
    return kOk;
}

int cmd_plan(const PlanArgs& a, std::ostream& out, std::ostream& err) {
    TrainConfig cfg;
    cfg.total_tokens = parse_count(a.tokens, "--tokens");
    cfg.batch_tokens = parse_count(a.batch_tokens, "--batch-tokens");
    cfg.peak_lr = a.peak_lr;
    cfg.final_lr_ratio = a.final_lr_ratio;
    cfg.warmup_fraction = a.warmup_fraction;
    MixStrategy strategy{strategy_from_string(a.strategy), a.interleave_p};
    const auto plan = build_plan(cfg, strategy, a.cooldown_frac);
    const auto report = verify_plan(plan, cfg);
    if (!report.ok()) throw ConfigError("plan failed verification: " + report.summary());
    if (!a.out.empty()) {
        std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
        f << plan.to_json();
        if (!f) throw DataError("cannot write " + a.out);
    } else {
        out << plan.to_json();
    }
    err << "steps: " << plan.total_steps << " (warmup " << plan.warmup_steps << ", boundary " << plan.boundary_step
        << ")\nconditioning tokens: " << plan.conditioning_tokens() << "\ncooldown tokens: " << plan.cooldown_tokens()
        << "\n";
    return kOk;
}

int cmd_verify(const std::string& dir, std::ostream& out, std::ostream& err) {
    const auto report = verify_output(dir);
    if (!report.ok()) {
        err << report.summary() << "\n";
        return kDataError;
    }
    out << "ok\n";
    return kOk;
}

int cmd_prompt(const PromptArgs& a, std::ostream& out) {
    if (a.list_tasks) {
        for (const auto& [name, url] : task_url_registry()) out << name << "\t" << url << "\n";
        return kOk;
    }
    if (a.task.empty() == a.url.empty()) {
        throw ConfigError("prompt needs exactly one of --task or --url");
    }
    const auto url = a.task.empty() ? a.url : task_url(a.task);
    out << build_conditional_prompt(url, a.prompt);
    return kOk;
}

int cmd_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<std::pair<std::string, double>> fractions;
    for (const auto& f : a.fractions) {
        const auto eq = f.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--fractions entries look like name=0.9: " + f);
        double value = 0;
        try {
            value = std::stod(f.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad fraction in " + f);
        }
        fractions.emplace_back(f.substr(0, eq), value);
    }
    CorpusSplitter splitter(fractions, a.seed);
    std::vector<Diagnostic> diags;
    const auto docs = read_documents(a.corpus, &diags);
    for (const auto& d : diags) err << d.file << ":" << d.line << ": " << d.message << "\n";

    std::map<std::string, std::vector<Document>> parts;
    for (const auto& [name, frac] : fractions) parts[name];
    for (const auto& doc : docs) {
        if (auto name = splitter.assign(doc.doc_id)) parts[std::string(*name)].push_back(doc);
    }
    fs::create_directories(a.out);
    CorpusManifest manifest;
    for (const auto& [name, frac] : fractions) {
        manifest.merge(write_documents(parts[name], fs::path(a.out) / (name + ".jsonl")));
        out << name << ": " << parts[name].size() << " documents\n";
    }
    write_manifest(manifest, fs::path(a.out) / "manifest.json");
    return kOk;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Metadata conditioning then cooldown: corpus conditioning, packing and shard emission", "meco"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "TOML or JSON config file; command-line flags take precedence");

    for (int i = 1; i + 1 < argc; ++i) {
        std::string_view arg = argv[i];
        std::string_view value = argv[i + 1];
        if (arg == "--config" && value.ends_with(".json")) app.config_formatter(std::make_shared<JsonConfig>());
    }
    for (int i = 1; i < argc; ++i) {
        std::string_view arg = argv[i];
        if (arg.starts_with("--config=") && arg.ends_with(".json")) app.config_formatter(std::make_shared<JsonConfig>());
    }

    AnalyzeArgs analyze;
    auto* c_analyze = app.add_subcommand("analyze-urls", "Count domains, write url_vocab.json and coverage");
    c_analyze->add_option("corpus", analyze.corpus, "Corpus file or directory")->required();
    c_analyze->add_option("out", analyze.out, "Output directory")->required();
    c_analyze->add_option("--top-fraction", analyze.top_fraction, "Fraction of unique domains to retain")
        ->check(CLI::Range(1e-12, 1.0));
    c_analyze->add_option("--hash-key", analyze.hash_key, "Hex hash key (defaults to $MECO_HASH_KEY)");

    AnnotateArgs annotate;
    auto* c_annotate = app.add_subcommand("annotate-topics", "Generate model-written topics per document");
    c_annotate->add_option("corpus", annotate.corpus, "Corpus file or directory")->required();
    c_annotate->add_option("out", annotate.out, "Output topic table (newline-delimited JSON)")->required();
    c_annotate->add_option("--endpoint", annotate.config.endpoint, "Base URL of the chat-completions server");
    c_annotate->add_option("--path", annotate.config.path, "Request path");
    c_annotate->add_option("--model", annotate.config.model, "Model name");
    c_annotate->add_option("--api-key-env", annotate.config.api_key_env, "Environment variable holding the API key");
    c_annotate->add_option("--snippet-tokens", annotate.config.max_snippet_tokens, "Snippet length in tokens")
        ->check(CLI::PositiveNumber);
    c_annotate->add_option("--timeout", annotate.config.timeout_seconds, "Request timeout in seconds")
        ->check(CLI::PositiveNumber);
    c_annotate->add_option("--max-retries", annotate.config.max_retries, "Retries per document");
    c_annotate->add_option("--backoff-ms", annotate.config.backoff_ms, "Initial retry backoff");
    c_annotate->add_option("--concurrency", annotate.config.concurrency, "Requests in flight")
        ->check(CLI::PositiveNumber);
    c_annotate->add_option("--cache-dir", annotate.cache_dir, "Response cache directory");
    c_annotate->add_option("--tokenizer", annotate.tokenizer, "\"builtin\" or a vocab JSON file");

    BuildArgs build;
    auto* c_build = app.add_subcommand("build", "Condition, pack and shard a corpus");
    c_build->add_option("corpus", build.corpus, "Corpus file or directory")->required();
    c_build->add_option("out", build.out, "Output directory")->required();
    c_build->add_option("--metadata", build.metadata, "Metadata variant")->check(CLI::IsMember(kMetadataNames));
    c_build->add_option("--top-fraction", build.top_fraction, "Top-k retained fraction")->check(CLI::Range(1e-12, 1.0));
    c_build->add_option("--seq-len", build.seq_len, "Packed sequence length")->check(CLI::Range(2u, 65535u));
    c_build->add_option("--pack-policy", build.pack_policy, "Overflow handling")
        ->check(CLI::IsMember({"truncate", "pad"}));
    c_build->add_option("--strategy", build.strategy, "Data mixing strategy")->check(CLI::IsMember(kStrategyNames));
    c_build->add_option("--interleave-p", build.interleave_p, "Conditioned share for interleaved")
        ->check(CLI::Range(0.0, 1.0));
    c_build->add_option("--cooldown-frac", build.cooldown_frac, "Cooldown share of steps")->check(CLI::Range(0.0, 1.0));
    c_build->add_option("--seed", build.seed, "Split and interleave seed");
    c_build->add_option("--workers", build.workers, "Parallel workers")->check(CLI::Range(1u, 1024u));
    c_build->add_option("--seqs-per-shard", build.seqs_per_shard, "Sequences per shard file")
        ->check(CLI::PositiveNumber);
    c_build->add_option("--tokenizer", build.tokenizer, "\"builtin\" or a vocab JSON file");
    c_build->add_option("--vocab", build.vocab, "url_vocab.json from analyze-urls (top-k)");
    c_build->add_option("--topics", build.topics, "Topic table from annotate-topics (topic)");
    c_build->add_option("--hash-key", build.hash_key, "Hex hash key (defaults to $MECO_HASH_KEY)");
    c_build->add_flag("--no-eos-loss", build.no_eos_loss, "Exclude eos from the loss");
    c_build->add_option("--batch-tokens", build.batch_tokens, "Tokens per optimizer step for the plan");
    c_build->add_option("--total-tokens", build.total_tokens, "Planned training tokens (default: all emitted)");
    c_build->add_option("--peak-lr", build.peak_lr, "Peak learning rate")->check(CLI::PositiveNumber);
    c_build->add_option("--final-lr-ratio", build.final_lr_ratio, "Final / peak learning rate");
    c_build->add_option("--warmup-frac", build.warmup_fraction, "Warmup share of steps");

    PlanArgs plan;
    auto* c_plan = app.add_subcommand("plan", "Plan the training schedule");
    c_plan->add_option("--tokens", plan.tokens, "Total training tokens, e.g. 160e9")->required();
    c_plan->add_option("--batch-tokens", plan.batch_tokens, "Tokens per optimizer step");
    c_plan->add_option("--cooldown-frac", plan.cooldown_frac, "Cooldown share of steps")->check(CLI::Range(0.0, 1.0));
    c_plan->add_option("--strategy", plan.strategy, "Data mixing strategy")->check(CLI::IsMember(kStrategyNames));
    c_plan->add_option("--interleave-p", plan.interleave_p, "Conditioned share for interleaved")
        ->check(CLI::Range(0.0, 1.0));
    c_plan->add_option("--peak-lr", plan.peak_lr, "Peak learning rate")->check(CLI::PositiveNumber);
    c_plan->add_option("--final-lr-ratio", plan.final_lr_ratio, "Final / peak learning rate");
    c_plan->add_option("--warmup-frac", plan.warmup_fraction, "Warmup share of steps");
    c_plan->add_option("--out", plan.out, "Write plan.json here instead of stdout");

    std::string verify_dir;
    auto* c_verify = app.add_subcommand("verify", "Verify a build output directory");
    c_verify->add_option("dir", verify_dir, "Build output directory")->required();

    PromptArgs prompt;
    auto* c_prompt = app.add_subcommand("prompt", "Build a URL-conditioned inference prompt");
    c_prompt->add_option("--task", prompt.task, "Evaluation task with a registered URL");
    c_prompt->add_option("--url", prompt.url, "URL to condition on (need not exist)");
    c_prompt->add_flag("--list-tasks", prompt.list_tasks, "List registered tasks");
    c_prompt->add_option("prompt", prompt.prompt, "Prompt text");

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "Split a corpus into disjoint seeded subsets");
    c_split->add_option("corpus", split.corpus, "Corpus file or directory")->required();
    c_split->add_option("out", split.out, "Output directory")->required();
    c_split->add_option("--fractions", split.fractions, "name=fraction pairs")->delimiter(',');
    c_split->add_option("--seed", split.seed, "Split seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::FileError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kConfigError;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kOk;
        }
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (c_analyze->parsed()) return cmd_analyze(analyze, out, err);
        if (c_annotate->parsed()) return cmd_annotate(annotate, out, err);
        if (c_build->parsed()) return cmd_build(build, out, err);
        if (c_plan->parsed()) return cmd_plan(plan, out, err);
        if (c_verify->parsed()) return cmd_verify(verify_dir, out, err);
        if (c_prompt->parsed()) return cmd_prompt(prompt, out);
        if (c_split->parsed()) return cmd_split(split, out, err);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ServiceError& e) {
        err << "service error: " << e.what() << "\n";
        return kServiceError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsage;
}

} // namespace meco::cli
