#include "meco/pipeline.hpp"

#include "meco/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace meco;
using meco::testing::TempDir;
namespace fs = std::filesystem;

namespace {

BuildOptions options(const TempDir& dir, std::size_t n_docs) {
    write_documents(testing::zipf_corpus(n_docs, 50, 1.1, 4, 0.8), dir / "corpus.jsonl");
    BuildOptions o;
    o.corpus = dir / "corpus.jsonl";
    o.out_dir = dir / "out";
    o.seq_len = 128;
    o.seqs_per_shard = 16;
    o.train.batch_tokens = 0;
    return o;
}

} // namespace

TEST_CASE("resolve_batch_tokens") {
    CHECK(resolve_batch_tokens(0, 160'000'000'000ULL, 8192) == 4194304);
    // Small corpora shrink the batch to whole sequences so the plan keeps 20 steps.
    const auto small = resolve_batch_tokens(0, 100000, 128);
    CHECK(small % 128 == 0);
    CHECK((100000 + small - 1) / small >= 20);
    CHECK(resolve_batch_tokens(0, 1000, 128) == 128);
    CHECK(resolve_batch_tokens(65536, 1000, 128) == 65536);
}

TEST_CASE("two-stage build splits documents disjointly and stats add up") {
    TempDir dir("pl");
    auto o = options(dir, 3000);
    auto result = run_build(o);
    REQUIRE(result.sets.size() == 2);
    auto cond = read_doc_ids(o.out_dir / "cond" / "doc_ids.txt");
    auto cool = read_doc_ids(o.out_dir / "cool" / "doc_ids.txt");
    CHECK(cond.size() + cool.size() == 3000);
    std::set<std::string> a(cond.begin(), cond.end());
    for (const auto& id : cool) CHECK(a.count(id) == 0);
    for (const auto& s : result.sets) CHECK(s.stats.conserved());
    CHECK(result.plan.boundary_step < result.plan.total_steps);
    auto report = verify_output(o.out_dir);
    CHECK_MESSAGE(report.ok(), report.summary());
}

TEST_CASE("verify_output catches overlapping stage documents") {
    TempDir dir("pl");
    auto o = options(dir, 500);
    run_build(o);
    auto cond = read_doc_ids(o.out_dir / "cond" / "doc_ids.txt");
    {
        std::ofstream out(o.out_dir / "cool" / "doc_ids.txt", std::ios::app);
        out << cond.front() << "\n";
    }
    CHECK_FALSE(verify_output(o.out_dir).ok());
}

TEST_CASE("worker count does not change the output") {
    TempDir dir("pl");
    auto o = options(dir, 2500);
    o.chunk_lines = 97;
    run_build(o);
    auto single = testing::snapshot_tree(o.out_dir);
    o.workers = 5;
    o.out_dir = dir / "out5";
    run_build(o);
    auto multi = testing::snapshot_tree(o.out_dir);
    single.erase("run.json");
    multi.erase("run.json");
    CHECK(single == multi);
}

TEST_CASE("a failed build leaves no output") {
    TempDir dir("pl");
    auto o = options(dir, 50);
    o.tokenizer = (dir / "missing-vocab.json").string();
    CHECK_THROWS_AS(run_build(o), ConfigError);
    CHECK_FALSE(fs::exists(o.out_dir));
    CHECK_FALSE(fs::exists(dir / "out.partial"));
}

TEST_CASE("eos loss can be disabled") {
    TempDir dir("pl");
    auto o = options(dir, 20);
    o.eos_loss = false;
    o.strategy.kind = StrategyKind::standard;
    o.seq_len = 4096;
    run_build(o);
    auto seqs = read_shards(o.out_dir / "std");
    REQUIRE_FALSE(seqs.empty());
    for (const auto& s : seqs) {
        for (std::size_t i = 0; i < s.ids.size(); ++i) {
            if (s.ids[i] == 1) CHECK(s.loss_mask[i] == 0);
        }
    }
}
