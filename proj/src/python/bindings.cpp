#include "meco/cli.hpp"
#include "meco/conditioning.hpp"
#include "meco/errors.hpp"
#include "meco/hashing.hpp"
#include "meco/packing.hpp"
#include "meco/pipeline.hpp"
#include "meco/schedule.hpp"
#include "meco/shards.hpp"
#include "meco/topic_annotator.hpp"
#include "meco/url_meta.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace meco;

namespace {

HashKey key_from(const py::object& key) {
    if (py::isinstance<py::bytes>(key)) {
        const auto raw = key.cast<std::string>();
        if (raw.size() != 16) throw ConfigError("hash key must be 16 bytes");
        HashKey k{};
        std::copy(raw.begin(), raw.end(), k.begin());
        return k;
    }
    return parse_hash_key(key.cast<std::string>());
}

MetadataValue metadata_from(const std::string& kind, const std::string& value) {
    return {metadata_kind_from_string(kind), value};
}

py::dict pack_stats_dict(const PackingStats& s) {
    py::dict d;
    d["input_tokens"] = s.input_tokens;
    d["emitted_tokens"] = s.emitted_tokens;
    d["discarded_tokens"] = s.discarded_tokens;
    d["padded_tokens"] = s.padded_tokens;
    d["sequences"] = s.sequences;
    d["documents"] = s.documents;
    d["documents_truncated"] = s.documents_truncated;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Metadata conditioning, packing, schedule planning and shard I/O";
    m.attr("__version__") = std::string(kVersion);

    auto base = py::register_exception<Error>(m, "MecoError");
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ServiceError>(m, "ServiceError", base.ptr());

    py::class_<UrlParts>(m, "UrlParts")
        .def_readonly("scheme", &UrlParts::scheme)
        .def_readonly("host", &UrlParts::host)
        .def_readonly("path", &UrlParts::path)
        .def("__repr__", [](const UrlParts& u) { return "UrlParts(host='" + u.host + "', path='" + u.path + "')"; });
    m.def("parse_url", &parse_url, py::arg("url"));
    m.def(
        "hash_domain", [](const std::string& domain, const py::object& key) { return hash_domain(domain, key_from(key)); },
        py::arg("domain"), py::arg("key"), "key: 32 hex characters or 16 raw bytes");
    m.def(
        "render_prefix",
        [](const std::string& kind, const std::string& value) {
            return render_prefix(metadata_kind_from_string(kind), value);
        },
        py::arg("kind"), py::arg("value") = "");
    m.def("build_conditional_prompt", &build_conditional_prompt, py::arg("url"), py::arg("prompt"));
    m.def("task_url", &task_url, py::arg("task"));
    m.def("task_urls", [] {
        py::dict d;
        for (const auto& [name, url] : task_url_registry()) d[py::str(name)] = url;
        return d;
    });
    m.def("render_topic_prompt", &render_topic_prompt, py::arg("snippet"));
    m.def(
        "postprocess_topic",
        [](const std::string& raw) {
            auto c = postprocess_topic(raw);
            return py::make_tuple(c.topic, c.truncated);
        },
        py::arg("raw"), "Returns (topic, truncated).");

    py::class_<TokenizedDocument>(m, "TokenizedDocument")
        .def_readonly("doc_id", &TokenizedDocument::doc_id)
        .def_readonly("ids", &TokenizedDocument::ids)
        .def_readonly("loss_mask", &TokenizedDocument::loss_mask)
        .def_readonly("n_prefix_tokens", &TokenizedDocument::n_prefix_tokens);

    m.def(
        "tokenize_document",
        [](const std::string& text, const std::string& kind, const std::string& value, const std::string& doc_id,
           bool eos_loss, const std::string& tokenizer) {
            const auto tok = load_tokenizer(tokenizer);
            Document doc{doc_id, std::nullopt, text, std::nullopt};
            return tokenize_document(doc, metadata_from(kind, value), *tok, {eos_loss});
        },
        py::arg("text"), py::arg("kind") = "none", py::arg("value") = "", py::arg("doc_id") = "",
        py::arg("eos_loss") = true, py::arg("tokenizer") = "builtin");
    m.def(
        "decode",
        [](const std::vector<TokenId>& ids, const std::string& tokenizer) { return load_tokenizer(tokenizer)->decode(ids); },
        py::arg("ids"), py::arg("tokenizer") = "builtin");

    py::class_<Segment>(m, "Segment").def_readonly("start", &Segment::start).def_readonly("length", &Segment::length);
    py::class_<PackedSequence>(m, "PackedSequence")
        .def_readonly("ids", &PackedSequence::ids)
        .def_readonly("loss_mask", &PackedSequence::loss_mask)
        .def_readonly("segments", &PackedSequence::segments)
        .def_readonly("n_pad", &PackedSequence::n_pad)
        .def("spans", &segment_spans);

    m.def(
        "pack",
        [](const std::vector<TokenizedDocument>& docs, std::uint32_t seq_len, TokenId pad_id, const std::string& policy) {
            auto [seqs, stats] = pack(docs, seq_len, pad_id, pack_policy_from_string(policy));
            return py::make_tuple(seqs, pack_stats_dict(stats));
        },
        py::arg("docs"), py::arg("seq_len"), py::arg("pad_id") = 2, py::arg("policy") = "truncate");

    m.def(
        "lr_at",
        [](std::uint64_t step, std::uint64_t total_steps, double peak_lr, double final_lr_ratio, double warmup_fraction) {
            TrainConfig cfg;
            cfg.peak_lr = peak_lr;
            cfg.final_lr_ratio = final_lr_ratio;
            cfg.warmup_fraction = warmup_fraction;
            return lr_at(step, cfg, total_steps);
        },
        py::arg("step"), py::arg("total_steps"), py::arg("peak_lr") = 3e-3, py::arg("final_lr_ratio") = 0.1,
        py::arg("warmup_fraction") = 0.05);
    m.def(
        "build_plan",
        [](std::uint64_t total_tokens, std::uint64_t batch_tokens, const std::string& strategy, double cooldown_fraction,
           double interleave_p) {
            TrainConfig cfg;
            cfg.total_tokens = total_tokens;
            cfg.batch_tokens = batch_tokens;
            return build_plan(cfg, {strategy_from_string(strategy), interleave_p}, cooldown_fraction).to_json();
        },
        py::arg("total_tokens"), py::arg("batch_tokens") = 4194304, py::arg("strategy") = "two-stage",
        py::arg("cooldown_fraction") = kDefaultCooldownFraction, py::arg("interleave_p") = 0.9,
        "Returns the plan as JSON text.");

    m.def(
        "write_shards",
        [](const std::vector<PackedSequence>& seqs, const std::filesystem::path& dir, std::uint32_t seq_len,
           std::uint64_t seqs_per_shard, const std::string& rendering) {
            ShardSetOptions o;
            o.seq_len = seq_len;
            o.seqs_per_shard = seqs_per_shard;
            o.rendering = rendering_tag_from_string(rendering);
            o.tokenizer = load_tokenizer("builtin")->spec();
            PackingStats stats;
            stats.sequences = seqs.size();
            for (const auto& s : seqs) {
                stats.emitted_tokens += s.ids.size();
                stats.padded_tokens += s.n_pad;
                stats.input_tokens += s.ids.size() - s.n_pad;
                stats.documents += s.segments.size();
            }
            return write_shards(seqs, dir, o, stats).to_json();
        },
        py::arg("sequences"), py::arg("dir"), py::arg("seq_len"), py::arg("seqs_per_shard") = 1024,
        py::arg("rendering") = "standard", "Writes with the builtin tokenizer id; returns the manifest JSON.");
    m.def("read_shards", &read_shards, py::arg("path"));
    m.def(
        "verify_shards",
        [](const std::filesystem::path& dir) {
            auto r = verify_shards(dir);
            return py::make_tuple(r.ok(), r.failures);
        },
        py::arg("dir"));
    m.def(
        "verify_output",
        [](const std::filesystem::path& dir) {
            auto r = verify_output(dir);
            return py::make_tuple(r.ok(), r.failures);
        },
        py::arg("dir"), "Returns (ok, failures) for a build output directory.");

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "meco");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a meco subcommand in-process; returns (exit_code, stdout, stderr).");
}
