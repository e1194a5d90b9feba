#include "meco/corpus_io.hpp"

#include "meco/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>

using namespace meco;
using meco::testing::TempDir;
using meco::testing::write_jsonl;

TEST_CASE("three valid lines yield three documents") {
    TempDir dir("cio");
    write_jsonl(dir / "a.jsonl", {R"({"id":"x","text":"one","url":"https://a.com/p"})",
                                  R"({"id":7,"text":"two","source":"web"})", R"({"text":"three"})"});
    std::vector<Diagnostic> diags;
    auto docs = read_documents(dir / "a.jsonl", &diags);
    REQUIRE(docs.size() == 3);
    CHECK(diags.empty());
    CHECK(docs[0].doc_id == "x");
    CHECK(docs[0].url == std::optional<std::string>("https://a.com/p"));
    CHECK(docs[1].doc_id == "7");
    CHECK(docs[1].source_label == std::optional<std::string>("web"));
    CHECK_FALSE(docs[1].url.has_value());
    CHECK(docs[2].doc_id == "a.jsonl#3");
}

TEST_CASE("bad records become diagnostics and are skipped") {
    TempDir dir("cio");
    write_jsonl(dir / "a.jsonl", {R"({"id":"1","text":""})", R"({"id":"2","text":"ok"})", "{nope",
                                  R"({"id":"2","text":"dup"})", "", R"({"id":"3"})"});
    std::vector<Diagnostic> diags;
    auto docs = read_documents(dir / "a.jsonl", &diags);
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].text == "ok");
    REQUIRE(diags.size() == 4);
    CHECK(diags[0].line == 1);
    CHECK(diags[0].file == "a.jsonl");
    CHECK(diags[2].message.find("duplicate") != std::string::npos);
}

TEST_CASE("directory input reads files in lexicographic order") {
    TempDir dir("cio");
    std::vector<std::string> b, a;
    for (int i = 0; i < 10; ++i) {
        a.push_back(R"({"id":"a)" + std::to_string(i) + R"(","text":"t"})");
        b.push_back(R"({"id":"b)" + std::to_string(i) + R"(","text":"t"})");
    }
    write_jsonl(dir / "b.jsonl", b);
    write_jsonl(dir / "a.ndjson", a);
    write_jsonl(dir / "ignored.txt", {"not a record"});
    auto docs = read_documents(dir.path());
    REQUIRE(docs.size() == 20);
    for (int i = 0; i < 10; ++i) {
        CHECK(docs[static_cast<std::size_t>(i)].doc_id == "a" + std::to_string(i));
        CHECK(docs[static_cast<std::size_t>(10 + i)].doc_id == "b" + std::to_string(i));
    }
}

TEST_CASE("write then read round-trips and checksums match sha256sum") {
    TempDir dir("cio");
    std::mt19937_64 rng(5);
    std::vector<Document> docs;
    for (int i = 0; i < 100; ++i) {
        Document d;
        d.doc_id = "d" + std::to_string(i);
        d.text = testing::random_utf8(rng, 50) + "\n\t\"quoted\"";
        if (i % 3) d.url = "https://x" + std::to_string(i % 7) + ".org/p?q=" + std::to_string(i);
        if (i % 5 == 0) d.source_label = "src";
        docs.push_back(d);
    }
    auto manifest = write_documents(docs, dir / "out.jsonl");
    CHECK(read_documents(dir / "out.jsonl") == docs);
    REQUIRE(manifest.files.size() == 1);
    CHECK(manifest.document_count == 100);
    CHECK(manifest.files[0].sha256 == testing::external_sha256(dir / "out.jsonl"));
    CHECK(verify_corpus_manifest(manifest, dir.path()).empty());
    CHECK(manifest_from_json(manifest_to_json(manifest)) == manifest);

    auto empty = write_documents({}, dir / "empty.jsonl");
    CHECK(empty.document_count == 0);
    CHECK(read_documents(dir / "empty.jsonl").empty());

    testing::write_jsonl(dir / "out.jsonl", {R"({"id":"x","text":"tampered"})"});
    CHECK_FALSE(verify_corpus_manifest(manifest, dir.path()).empty());
}

TEST_CASE("manifest merge is associative") {
    auto m = [](std::string p, std::uint64_t n) {
        CorpusManifest c;
        c.files.push_back({p, n, n * 10, "h" + p});
        c.document_count = n;
        c.text_bytes = n * 10;
        return c;
    };
    auto a = m("a", 1), b = m("b", 2), c = m("c", 3);
    auto left = a;
    left.merge(b);
    left.merge(c);
    auto bc = b;
    bc.merge(c);
    auto right = a;
    right.merge(bc);
    CHECK(left == right);
    CHECK(left.document_count == 6);
}

TEST_CASE("splitter is deterministic, disjoint and hits its fractions") {
    std::vector<Document> docs;
    for (int i = 0; i < 100000; ++i) docs.push_back({"doc-" + std::to_string(i), std::nullopt, "t", std::nullopt});
    auto s1 = split_corpus(docs, {{"cond", 0.9}, {"cool", 0.1}}, 42);
    auto s2 = split_corpus(docs, {{"cond", 0.9}, {"cool", 0.1}}, 42);
    CHECK(s1 == s2);
    CHECK(s1["cond"].size() + s1["cool"].size() == docs.size());
    for (const auto& id : s1["cool"]) REQUIRE(s1["cond"].count(id) == 0);
    CHECK(std::abs(static_cast<double>(s1["cond"].size()) / 100000.0 - 0.9) <= 0.01);
    CHECK(std::abs(static_cast<double>(s1["cool"].size()) / 100000.0 - 0.1) <= 0.01);

    auto s3 = split_corpus(docs, {{"cond", 0.9}, {"cool", 0.1}}, 43);
    CHECK(s3 != s1);

    auto all = split_corpus(docs, {{"a", 1.0}}, 1);
    CHECK(all["a"].size() == docs.size());

    auto partial = split_corpus(docs, {{"a", 0.3}}, 1);
    CHECK(std::abs(static_cast<double>(partial["a"].size()) / 100000.0 - 0.3) <= 0.01);
}

TEST_CASE("splitter rejects bad fractions") {
    CHECK_THROWS_AS(CorpusSplitter({{"a", 0.6}, {"b", 0.6}}, 0), ConfigError);
    CHECK_THROWS_AS(CorpusSplitter({{"a", 0.5}, {"a", 0.5}}, 0), ConfigError);
    CHECK_THROWS_AS(CorpusSplitter({{"a", -0.1}}, 0), ConfigError);
}
