#include "meco/pipeline.hpp"

#include "meco/corpus_io.hpp"
#include "meco/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

namespace meco {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RawLine {
    std::string text;
    std::string file;
    std::uint64_t line_no = 0;
};

struct Item {
    bool ok = false;
    std::string error;
    std::optional<std::string> metadata_note;
    int set_index = -1;
    TokenizedDocument doc;
};

struct SetState {
    std::string name;
    RenderingTag rendering;
    std::unique_ptr<ShardWriter> writer;
    std::unique_ptr<Packer> packer;
    std::vector<std::string> doc_ids;
};

/// Routes a document to a shard set and picks its rendering. Pure in doc_id.
class Router {
public:
    Router(const BuildOptions& options, const SchedulePlan& routing_plan)
        : options_(options), routing_plan_(routing_plan) {
        if (options.strategy.kind == StrategyKind::two_stage) {
            splitter_.emplace(std::vector<std::pair<std::string, double>>{
                                  {"cond", 1.0 - options.cooldown_fraction}, {"cool", options.cooldown_fraction}},
                              options.seed);
        }
    }

    std::vector<std::pair<std::string, RenderingTag>> sets() const {
        switch (options_.strategy.kind) {
        case StrategyKind::two_stage: return {{"cond", RenderingTag::conditioned}, {"cool", RenderingTag::standard}};
        case StrategyKind::all_conditioned: return {{"cond", RenderingTag::conditioned}};
        case StrategyKind::interleaved: return {{"mixed", RenderingTag::interleaved}};
        case StrategyKind::standard: return {{"std", RenderingTag::standard}};
        }
        return {};
    }

    /// (set index, conditioned?)
    std::pair<int, bool> route(std::string_view doc_id) const {
        switch (options_.strategy.kind) {
        case StrategyKind::two_stage: {
            auto name = splitter_->assign(doc_id);
            return name && *name == "cool" ? std::pair{1, false} : std::pair{0, true};
        }
        case StrategyKind::all_conditioned: return {0, true};
        case StrategyKind::interleaved:
            return {0, assign_rendering(doc_id, routing_plan_, options_.seed) == Rendering::conditioned};
        case StrategyKind::standard: return {0, false};
        }
        return {0, false};
    }

private:
    const BuildOptions& options_;
    const SchedulePlan& routing_plan_;
    std::optional<CorpusSplitter> splitter_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw DataError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json stats_json(const PackingStats& s) {
    return {{"input_tokens", s.input_tokens},         {"emitted_tokens", s.emitted_tokens},
            {"discarded_tokens", s.discarded_tokens}, {"padded_tokens", s.padded_tokens},
            {"sequences", s.sequences},               {"documents", s.documents},
            {"documents_truncated", s.documents_truncated}};
}

bool is_meco_output(const fs::path& dir) {
    return fs::exists(dir / "run.json") || fs::is_empty(dir);
}

} // namespace

void BuildOptions::validate() const {
    if (seq_len < 2) throw ConfigError("--seq-len must be at least 2");
    if (seqs_per_shard == 0) throw ConfigError("--seqs-per-shard must be at least 1");
    if (workers == 0) throw ConfigError("--workers must be at least 1");
    if (chunk_lines == 0) throw ConfigError("chunk size must be positive");
    if (strategy.kind == StrategyKind::two_stage && !(cooldown_fraction > 0.0 && cooldown_fraction < 1.0)) {
        throw ConfigError("--cooldown-frac must be in (0, 1)");
    }
    if (!(strategy.p >= 0.0 && strategy.p <= 1.0)) throw ConfigError("--interleave-p must be in [0, 1]");
    if (!fs::exists(corpus)) throw DataError("corpus path does not exist: " + corpus.string());
    if (fs::exists(out_dir) && (!fs::is_directory(out_dir) || !is_meco_output(out_dir))) {
        throw ConfigError("output directory " + out_dir.string() + " exists and is not a previous build output");
    }
    const bool uses_metadata = strategy.kind != StrategyKind::standard && metadata.kind != MetadataKind::none;
    if (uses_metadata && metadata.kind == MetadataKind::top_k) {
        if (!vocab) {
            throw ConfigError("--metadata top-k needs a URL vocabulary: run `meco analyze-urls` first and pass --vocab");
        }
        if (!fs::exists(*vocab)) {
            throw ConfigError("URL vocabulary " + vocab->string() + " not found: run `meco analyze-urls` first");
        }
    }
    if (uses_metadata && metadata.kind == MetadataKind::hashed && !hash_key) {
        throw ConfigError("--metadata hashed needs a hash key: set MECO_HASH_KEY (32 hex characters)");
    }
    if (uses_metadata && metadata.kind == MetadataKind::topic) {
        if (!topics) {
            throw ConfigError("--metadata topic needs a topic table: run `meco annotate-topics` first and pass --topics");
        }
        if (!fs::exists(*topics)) {
            throw ConfigError("topic table " + topics->string() + " not found: run `meco annotate-topics` first");
        }
    }
    TrainConfig probe = train;
    probe.batch_tokens = std::max<std::uint64_t>(probe.batch_tokens, 1);
    probe.total_tokens = std::max<std::uint64_t>(probe.total_tokens, 1);
    probe.validate();
}

std::uint64_t resolve_batch_tokens(std::uint64_t requested, std::uint64_t total_tokens, std::uint32_t seq_len,
                                   std::uint64_t min_steps) {
    if (requested != 0) return requested;
    std::uint64_t batch = TrainConfig{}.batch_tokens;
    const std::uint64_t cap = total_tokens / std::max<std::uint64_t>(min_steps, 1);
    if (batch > cap) {
        batch = std::max<std::uint64_t>(seq_len, cap / seq_len * seq_len);
    }
    return batch;
}

BuildResult run_build(const BuildOptions& options) {
    options.validate();

    const auto tokenizer = load_tokenizer(options.tokenizer);
    std::optional<UrlVocab> vocab;
    std::optional<TopicTable> topics;
    const bool conditioned_any = options.strategy.kind != StrategyKind::standard;
    if (conditioned_any && options.metadata.kind == MetadataKind::top_k) {
        vocab = UrlVocab::from_json(read_text(*options.vocab));
    }
    if (conditioned_any && options.metadata.kind == MetadataKind::topic) {
        topics = read_topic_table(*options.topics);
    }
    ExtractInputs inputs{vocab ? &*vocab : nullptr, options.hash_key ? &*options.hash_key : nullptr,
                         topics ? &*topics : nullptr};
    // Validate prerequisites once up front so workers never throw ConfigError.
    if (conditioned_any) {
        extract_metadata(Document{"probe", std::nullopt, "x", std::nullopt}, options.metadata, inputs);
    }

    SchedulePlan routing_plan;
    routing_plan.strategy = options.strategy;
    const Router router(options, routing_plan);

    const fs::path staging = options.out_dir.string() + ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    fs::create_directories(staging);

    BuildResult result;
    try {
        std::vector<SetState> sets;
        for (const auto& [name, tag] : router.sets()) {
            SetState s;
            s.name = name;
            s.rendering = tag;
            ShardSetOptions so;
            so.seq_len = options.seq_len;
            so.seqs_per_shard = options.seqs_per_shard;
            so.rendering = tag;
            so.tokenizer = tokenizer->spec();
            s.writer = std::make_unique<ShardWriter>(staging / name, so);
            auto* writer = s.writer.get();
            s.packer = std::make_unique<Packer>(
                options.seq_len, tokenizer->spec().pad_id, [writer](PackedSequence&& seq) { writer->write(seq); },
                options.pack_policy);
            sets.push_back(std::move(s));
        }

        const TokenizeOptions tok_opts{options.eos_loss};
        auto process = [&](const RawLine& line, Item& item) {
            auto doc = parse_record(line.text, line.file, line.line_no, item.error);
            if (!doc) return;
            auto [set_index, conditioned] = router.route(doc->doc_id);
            item.set_index = set_index;
            MetadataValue meta;
            if (conditioned) {
                auto ex = extract_metadata(*doc, options.metadata, inputs);
                meta = std::move(ex.value);
                item.metadata_note = std::move(ex.diagnostic);
            }
            item.doc = tokenize_document(*doc, meta, *tokenizer, tok_opts);
            item.ok = true;
        };

        DocumentReader reader(options.corpus);
        const std::size_t workers = options.workers;
        const std::size_t batch_lines = workers * options.chunk_lines;
        std::vector<RawLine> lines;
        std::vector<Item> items;
        for (;;) {
            lines.clear();
            RawLine raw;
            while (lines.size() < batch_lines && reader.next_line(raw.text, raw.file, raw.line_no)) {
                lines.push_back(raw);
            }
            if (lines.empty()) break;
            items.assign(lines.size(), Item{});

            auto run_range = [&](std::size_t begin, std::size_t end) {
                for (std::size_t i = begin; i < end; ++i) process(lines[i], items[i]);
            };
            if (workers == 1 || lines.size() < 2) {
                run_range(0, lines.size());
            } else {
                const std::size_t per = (lines.size() + workers - 1) / workers;
                std::vector<std::thread> threads;
                std::vector<std::exception_ptr> errors(workers);
                for (std::size_t w = 0; w < workers; ++w) {
                    const std::size_t begin = w * per;
                    const std::size_t end = std::min(lines.size(), begin + per);
                    if (begin >= end) break;
                    threads.emplace_back([&, w, begin, end] {
                        try {
                            run_range(begin, end);
                        } catch (...) {
                            errors[w] = std::current_exception();
                        }
                    });
                }
                for (auto& t : threads) t.join();
                for (auto& e : errors) {
                    if (e) std::rethrow_exception(e);
                }
            }

            for (std::size_t i = 0; i < items.size(); ++i) {
                auto& item = items[i];
                const auto& line = lines[i];
                if (!item.ok) {
                    reader.add_diagnostic({line.file, line.line_no, item.error});
                    continue;
                }
                if (!reader.claim_id(item.doc.doc_id, line.file, line.line_no)) continue;
                if (item.metadata_note) {
                    reader.add_diagnostic({line.file, line.line_no, *item.metadata_note + "; rendered without metadata"});
                }
                auto& set = sets[static_cast<std::size_t>(item.set_index)];
                set.packer->add(item.doc);
                set.doc_ids.push_back(std::move(item.doc.doc_id));
            }
        }

        std::uint64_t emitted = 0;
        for (auto& set : sets) {
            set.packer->finish();
            std::string ids;
            for (const auto& id : set.doc_ids) {
                ids += id;
                ids += '\n';
            }
            write_text(staging / set.name / "doc_ids.txt", ids);
            set.writer->finish(set.packer->stats(), "../plan.json", "doc_ids.txt");
            emitted += set.packer->stats().emitted_tokens;
            result.sets.push_back({set.name, set.rendering, set.packer->stats(), set.doc_ids.size()});
        }
        if (emitted == 0 && options.train.total_tokens == 0) {
            throw DataError("corpus produced no tokens");
        }

        TrainConfig cfg = options.train;
        cfg.total_tokens = cfg.total_tokens != 0 ? cfg.total_tokens : emitted;
        cfg.batch_tokens = resolve_batch_tokens(cfg.batch_tokens, cfg.total_tokens, options.seq_len);
        result.plan = build_plan(cfg, options.strategy, options.cooldown_fraction);
        write_text(staging / "plan.json", result.plan.to_json());

        if (vocab) fs::copy_file(*options.vocab, staging / "url_vocab.json");
        if (topics) fs::copy_file(*options.topics, staging / "topics.jsonl");

        result.diagnostics = reader.diagnostics();
        std::string diag_text;
        for (const auto& d : result.diagnostics) {
            diag_text += d.file + ":" + std::to_string(d.line) + ": " + d.message + "\n";
        }
        write_text(staging / "diagnostics.txt", diag_text);

        json stats;
        stats["sets"] = json::array();
        for (const auto& s : result.sets) {
            stats["sets"].push_back({{"name", s.name},
                                     {"rendering", std::string(to_string(s.rendering))},
                                     {"documents", s.documents},
                                     {"packing", stats_json(s.stats)}});
        }
        stats["diagnostics"] = result.diagnostics.size();
        write_text(staging / "stats.json", stats.dump(2) + "\n");

        json run;
        run["tool"] = "meco";
        run["version"] = std::string(kVersion);
        run["command"] = "build";
        run["seed"] = options.seed;
        run["config"] = {
            {"corpus", options.corpus.string()},
            {"metadata", std::string(to_string(options.metadata.kind))},
            {"top_fraction", options.metadata.top_fraction},
            {"seq_len", options.seq_len},
            {"pack_policy", options.pack_policy == PackPolicy::truncate ? "truncate" : "pad"},
            {"strategy", std::string(to_string(options.strategy.kind))},
            {"interleave_p", options.strategy.p},
            {"cooldown_fraction", options.cooldown_fraction},
            {"workers", options.workers},
            {"seqs_per_shard", options.seqs_per_shard},
            {"tokenizer", options.tokenizer},
            {"tokenizer_id", to_hex(tokenizer->spec().implementation_id)},
            {"vocab", options.vocab ? json(options.vocab->string()) : json(nullptr)},
            {"topics", options.topics ? json(options.topics->string()) : json(nullptr)},
            {"hash_key_sha256", options.hash_key ? json(to_hex(sha256(std::span<const std::uint8_t>(
                                                       options.hash_key->data(), options.hash_key->size()))))
                                                 : json(nullptr)},
            {"eos_loss", options.eos_loss},
            {"batch_tokens", cfg.batch_tokens},
            {"total_tokens", cfg.total_tokens},
            {"peak_lr", cfg.peak_lr},
            {"final_lr_ratio", cfg.final_lr_ratio},
            {"warmup_fraction", cfg.warmup_fraction},
            {"adam_beta1", cfg.adam_beta1},
            {"adam_beta2", cfg.adam_beta2},
            {"weight_decay", cfg.weight_decay},
        };
        write_text(staging / "run.json", run.dump(2) + "\n");

        if (fs::exists(options.out_dir)) fs::remove_all(options.out_dir);
        fs::rename(staging, options.out_dir);
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    return result;
}

std::vector<std::string> read_doc_ids(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

Report verify_output(const fs::path& out_dir) {
    Report report;
    if (!fs::is_directory(out_dir)) {
        report.failures.push_back(out_dir.string() + " is not a directory");
        return report;
    }
    std::vector<fs::path> set_dirs;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) set_dirs.push_back(entry.path());
    }
    std::sort(set_dirs.begin(), set_dirs.end());
    if (set_dirs.empty()) {
        report.failures.push_back("no shard sets found under " + out_dir.string());
    }
    std::map<std::string, std::vector<std::string>> ids_by_set;
    for (const auto& dir : set_dirs) {
        const auto name = dir.filename().string();
        for (auto& f : verify_shards(dir).failures) report.failures.push_back(name + "/" + f);
        try {
            const auto manifest = ShardManifest::load(dir);
            if (!manifest.doc_ids.empty()) {
                auto ids = read_doc_ids(dir / manifest.doc_ids);
                if (ids.size() != manifest.stats.documents) {
                    report.failures.push_back(name + ": doc id list has " + std::to_string(ids.size()) +
                                              " entries, packing consumed " +
                                              std::to_string(manifest.stats.documents));
                }
                ids_by_set[name] = std::move(ids);
            }
        } catch (const Error& e) {
            report.failures.push_back(name + ": " + e.what());
        }
    }

    const auto plan_path = out_dir / "plan.json";
    if (fs::exists(plan_path)) {
        try {
            const auto plan = SchedulePlan::from_json(read_text(plan_path));
            for (auto& f : verify_plan(plan, plan.train_config()).failures) report.failures.push_back("plan: " + f);
            if (plan.strategy.kind == StrategyKind::two_stage) {
                auto cond = ids_by_set.find(plan.conditioning_split);
                auto cool = ids_by_set.find(plan.cooldown_split);
                if (cond == ids_by_set.end() || cool == ids_by_set.end()) {
                    report.failures.push_back("plan: stage shard sets missing for splits " + plan.conditioning_split +
                                              "/" + plan.cooldown_split);
                } else {
                    std::set<std::string> seen(cond->second.begin(), cond->second.end());
                    std::size_t overlap = 0;
                    for (const auto& id : cool->second) overlap += seen.count(id);
                    if (overlap != 0) {
                        report.failures.push_back("conditioning and cooldown sets share " + std::to_string(overlap) +
                                                  " document(s)");
                    }
                }
            }
        } catch (const Error& e) {
            report.failures.push_back(std::string("plan: ") + e.what());
        }
    }
    return report;
}

} // namespace meco
