#include "meco/conditioning.hpp"

#include "meco/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace meco;

TEST_CASE("render_prefix") {
    CHECK(render_prefix(MetadataKind::domain, "en.wikipedia.org") == "URL: en.wikipedia.org\n\n");
    CHECK(render_prefix(MetadataKind::hashed, "7dsjuj3a-olp0") == "URL: 7dsjuj3a-olp0\n\n");
    CHECK(render_prefix(MetadataKind::top_k, "unknown") == "URL: unknown\n\n");
    CHECK(render_prefix(MetadataKind::none, "").empty());
    CHECK(render_prefix(MetadataKind::topic, "gaming forum") == "Topic: gaming forum\n\n");
}

TEST_CASE("tokenize_document layout and masks") {
    ByteTokenizer tok;
    Document doc{"d", std::string("https://a.com/x"), "hi", std::nullopt};

    auto plain = tokenize_document(doc, {}, tok);
    CHECK(plain.ids == std::vector<TokenId>{0, 'h' + 3u, 'i' + 3u, 1});
    CHECK(plain.loss_mask == std::vector<std::uint8_t>{0, 1, 1, 1});
    CHECK(plain.n_prefix_tokens == 0);

    auto cond = tokenize_document(doc, {MetadataKind::domain, "a.com"}, tok);
    CHECK(cond.n_prefix_tokens == 12);
    CHECK(cond.ids.size() == 1 + 12 + 2 + 1);
    CHECK(tok.decode(std::span(cond.ids).subspan(1, 12)) == "URL: a.com\n\n");
    for (std::size_t i = 0; i < cond.ids.size(); ++i) CHECK(cond.loss_mask[i] == (i >= 13 ? 1 : 0));

    auto no_eos = tokenize_document(doc, {MetadataKind::domain, "a.com"}, tok, {false});
    CHECK(no_eos.loss_mask.back() == 0);

    CHECK_THROWS_AS(tokenize_document(Document{"e", std::nullopt, "", std::nullopt}, {}, tok), DataError);
}

TEST_CASE("mask partition and body preservation over random documents") {
    ByteTokenizer tok;
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) {
        Document doc{"d" + std::to_string(i), std::nullopt, testing::random_utf8(rng, 1 + rng() % 200), std::nullopt};
        MetadataValue meta{MetadataKind::domain, "site" + std::to_string(i % 17) + ".org"};
        if (i % 3 == 0) meta = {};
        if (i % 5 == 0) meta = {MetadataKind::topic, "food blog"};
        auto t = tokenize_document(doc, meta, tok);
        const auto prefix_len = render_prefix(meta.kind, meta.value).size();
        REQUIRE(t.n_prefix_tokens == prefix_len);
        std::vector<TokenId> body;
        for (std::size_t p = 0; p < t.ids.size(); ++p) {
            const bool zero = p <= prefix_len;
            REQUIRE(t.loss_mask[p] == (zero ? 0 : 1));
            if (t.loss_mask[p]) body.push_back(t.ids[p]);
        }
        CHECK(t.ids.front() == tok.spec().bos_id);
        CHECK(t.ids.back() == tok.spec().eos_id);
        body.pop_back();
        CHECK(tok.decode(body) == doc.text);
    }
}

TEST_CASE("conditional prompts and the task registry") {
    CHECK(build_conditional_prompt("www.factquizmaster.com", "Q: ...") == "URL: www.factquizmaster.com\n\nQ: ...");
    CHECK(build_conditional_prompt("en.wikipedia.org", "") == "URL: en.wikipedia.org\n\n");
    CHECK(build_conditional_prompt("not a real url!!", "x") == "URL: not a real url!!\n\nx");

    CHECK(task_url("openbookqa") == "www.factquizmaster.com");
    CHECK(task_url("social_iqa") == "www.socialskillsassessment.com");
    CHECK(task_url("mmlu") == "www.testprepportal.com");
    CHECK(task_url("arc_easy") == "www.sciencestudyquiz.com");
    CHECK(task_url("arc_challenge") == "www.sciencestudyquiz.com");
    CHECK(task_url("csqa") == "www.quizsmart.com");
    CHECK(task_url("hellaswag") == "www.wikihowquiz.com");
    CHECK(task_url("piqa") == "www.basicknowledgequiz.com");
    CHECK(task_url("winogrande") == "www.testpreppractice.com");
    CHECK(task_url("truthfulqa") == "www.factcheckfun.com");
    CHECK(task_url_registry().size() == 10);
    try {
        task_url("nonexistent");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("openbookqa") != std::string::npos);
    }
}
