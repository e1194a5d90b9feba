#include "meco/tokenizer.hpp"

#include "meco/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace meco;

TEST_CASE("builtin tokenizer constants") {
    auto tok = load_tokenizer("builtin");
    CHECK(tok->spec().vocab_size == 259);
    CHECK(tok->spec().bos_id == 0);
    CHECK(tok->spec().eos_id == 1);
    CHECK(tok->spec().pad_id == 2);
    CHECK(load_tokenizer("builtin")->spec().implementation_id == tok->spec().implementation_id);
}

TEST_CASE("byte tokenizer encodes bytes plus the special offset") {
    ByteTokenizer tok;
    CHECK(tok.encode("").empty());
    CHECK(tok.encode("AB") == std::vector<TokenId>{65 + 3, 66 + 3});
    CHECK(tok.decode(std::vector<TokenId>{}) == "");
    CHECK(tok.decode(std::vector<TokenId>{0}) == "");
    CHECK(tok.decode(std::vector<TokenId>{0, 68, 1, 2}) == "A");
    CHECK_THROWS_AS(tok.decode(std::vector<TokenId>{259}), DataError);
}

TEST_CASE("byte tokenizer round-trips arbitrary UTF-8 and never emits specials") {
    ByteTokenizer tok;
    CHECK(tok.decode(tok.encode("héllo")) == "héllo");
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = testing::random_utf8(rng, 400);
        const auto ids = tok.encode(s);
        CHECK(tok.decode(ids) == s);
        for (auto id : ids) REQUIRE_FALSE(tok.is_special(id));
    }
}

namespace {

std::string vocab_json(bool with_eos = true) {
    std::string tokens = R"(["<s>", "</s>", "<pad>", "hello", " world", "he", "l")";
    for (int b = 0; b < 256; ++b) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), ", \"<0x%02X>\"", b);
        tokens += buf;
    }
    tokens += "]";
    std::string j = R"({"tokens": )" + tokens + R"(, "bos": "<s>", "pad": "<pad>")";
    if (with_eos) j += R"(, "eos": "</s>")";
    return j + "}";
}

} // namespace

TEST_CASE("external vocab: greedy longest match with byte fallback") {
    auto tok = VocabTokenizer::from_json_text(vocab_json());
    CHECK(tok->spec().vocab_size == 7 + 256);
    CHECK(tok->spec().bos_id == 0);
    CHECK(tok->spec().eos_id == 1);
    CHECK(tok->spec().pad_id == 2);
    const auto ids = tok->encode("hello world!");
    CHECK(ids.size() == 3);
    CHECK(ids[0] == 3);
    CHECK(ids[1] == 4);
    CHECK(tok->decode(ids) == "hello world!");
    // Literal specials and fallback spellings in text are plain bytes.
    for (std::string s : {std::string("<s> and <0x41>"), std::string("naïve \xF0\x9F\x98\x80")}) {
        auto e = tok->encode(s);
        for (auto id : e) CHECK_FALSE(tok->is_special(id));
        CHECK(tok->decode(e) == s);
    }
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        auto s = testing::random_utf8(rng, 100);
        CHECK(tok->decode(tok->encode(s)) == s);
    }
}

TEST_CASE("external vocab missing a special names it") {
    try {
        VocabTokenizer::from_json_text(vocab_json(false));
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("\"eos\"") != std::string::npos);
    }
    CHECK_THROWS_AS(VocabTokenizer::from_json_text("{not json"), ConfigError);
    CHECK_THROWS_AS(VocabTokenizer::from_json_text(R"({"tokens": ["a","b","c"], "bos":"a","eos":"b","pad":"c"})"),
                    ConfigError);
}

TEST_CASE("implementation id tracks vocab bytes") {
    testing::TempDir dir("tok");
    const auto path = dir / "vocab.json";
    testing::write_jsonl(path, {vocab_json()});
    auto a = load_tokenizer(path.string());
    auto b = load_tokenizer(path.string());
    CHECK(a->spec().implementation_id == b->spec().implementation_id);
    testing::write_jsonl(path, {vocab_json() + " "});
    auto c = load_tokenizer(path.string());
    CHECK(c->spec().implementation_id != a->spec().implementation_id);
    CHECK(c->spec().implementation_id != ByteTokenizer().spec().implementation_id);
}
