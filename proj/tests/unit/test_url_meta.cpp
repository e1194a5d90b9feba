#include "meco/url_meta.hpp"

#include "meco/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <regex>
#include <set>

using namespace meco;

namespace {

HashKey test_key() {
    HashKey k{};
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(i);
    return k;
}

Document url_doc(std::string id, std::optional<std::string> url) {
    return Document{std::move(id), std::move(url), "body", std::nullopt};
}

} // namespace

TEST_CASE("parse_url") {
    auto a = parse_url("https://en.wikipedia.org/wiki/Bill_Gates");
    CHECK(a.host == "en.wikipedia.org");
    CHECK(a.path == "/wiki/Bill_Gates");
    CHECK(a.scheme == "https");

    auto b = parse_url("en.wikipedia.org");
    CHECK(b.host == "en.wikipedia.org");
    CHECK(b.path.empty());

    CHECK(parse_url("http://WWW.Example.COM:8080/a").host == "www.example.com");
    CHECK(parse_url("http://WWW.Example.COM:8080/a").path == "/a");
    CHECK(parse_url("https://user:pw@sub.domain.org/p/q?x=1#frag").host == "sub.domain.org");
    CHECK(parse_url("https://user:pw@sub.domain.org/p/q?x=1#frag").path == "/p/q");
    CHECK(parse_url("//cdn.example.net/x").host == "cdn.example.net");
    CHECK(parse_url("  example.com.  ").host == "example.com");
    CHECK(parse_url("http://[::1]:80/").host == "[::1]");

    CHECK_THROWS_AS(parse_url(""), DataError);
    CHECK_THROWS_AS(parse_url("http://"), DataError);
    CHECK_THROWS_AS(parse_url("http://exa mple.com/"), DataError);
    CHECK_THROWS_AS(parse_url("http://example.com:port/"), DataError);
}

TEST_CASE("extract_metadata variants") {
    const auto doc = url_doc("d1", "https://en.wikipedia.org/wiki/Bill_Gates?utm=1#top");
    const auto key = test_key();
    auto run = [&](MetadataKind k, ExtractInputs in = {}) { return extract_metadata(doc, {k, 0.002}, in).value; };

    CHECK(run(MetadataKind::domain).value == "en.wikipedia.org");
    CHECK(run(MetadataKind::full_url).value == "en.wikipedia.org/wiki/Bill_Gates");
    CHECK(run(MetadataKind::suffix).value == "org");
    CHECK(run(MetadataKind::none).kind == MetadataKind::none);
    CHECK(run(MetadataKind::hashed, {nullptr, &key, nullptr}).value == hash_domain("en.wikipedia.org", key));

    UrlCounter counter;
    for (int i = 0; i < 5; ++i) counter.add(url_doc("x" + std::to_string(i), "https://big.com/" + std::to_string(i)));
    counter.add(doc);
    UrlVocab vocab(counter, 0.5);
    CHECK(run(MetadataKind::top_k, {&vocab, nullptr, nullptr}).value == "unknown");
    UrlVocab all(counter, 1.0);
    CHECK(run(MetadataKind::top_k, {&all, nullptr, nullptr}).value == "en.wikipedia.org");

    TopicTable topics{{"d1", "Technology leader biography"}};
    auto t = extract_metadata(doc, {MetadataKind::topic, 0.002}, {nullptr, nullptr, &topics});
    CHECK(t.value.kind == MetadataKind::topic);
    CHECK(t.value.value == "Technology leader biography");
    auto miss = extract_metadata(url_doc("d2", std::nullopt), {MetadataKind::topic, 0.002}, {nullptr, nullptr, &topics});
    CHECK(miss.value.kind == MetadataKind::none);
    CHECK(miss.diagnostic.has_value());

    auto no_url = extract_metadata(url_doc("d3", std::nullopt), {MetadataKind::domain, 0.002}, {});
    CHECK(no_url.value.kind == MetadataKind::none);
}

TEST_CASE("extract_metadata names missing prerequisites") {
    const auto doc = url_doc("d1", "https://a.com/");
    auto message = [&](MetadataKind k) {
        try {
            extract_metadata(doc, {k, 0.002}, {});
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(MetadataKind::top_k).find("analyze-urls") != std::string::npos);
    CHECK(message(MetadataKind::hashed).find("MECO_HASH_KEY") != std::string::npos);
    CHECK(message(MetadataKind::topic).find("annotate-topics") != std::string::npos);
}

TEST_CASE("metadata kind names") {
    for (auto k : {MetadataKind::none, MetadataKind::domain, MetadataKind::full_url, MetadataKind::suffix,
                   MetadataKind::top_k, MetadataKind::hashed, MetadataKind::topic}) {
        CHECK(metadata_kind_from_string(to_string(k)) == k);
    }
    CHECK(to_string(MetadataKind::full_url) == "full-url");
    CHECK_THROWS_AS(metadata_kind_from_string("bogus"), ConfigError);
    CHECK(is_url_family(MetadataKind::hashed));
    CHECK_FALSE(is_url_family(MetadataKind::topic));
}

TEST_CASE("url vocab small cases") {
    std::vector<Document> docs;
    for (int i = 0; i < 4; ++i) docs.push_back(url_doc(std::to_string(i), "http://a.com/"));
    auto v = build_url_vocab(docs, 0.5);
    CHECK(v.retained_count() == 1);
    CHECK(v.is_retained("a.com"));
    CHECK(v.coverage() == 1.0);

    std::vector<Document> two;
    for (int i = 0; i < 90; ++i) two.push_back(url_doc("a" + std::to_string(i), "http://big.org/"));
    for (int i = 0; i < 10; ++i) two.push_back(url_doc("b" + std::to_string(i), "http://small.org/"));
    auto v2 = build_url_vocab(two, 1.0);
    CHECK(vocab_coverage(v2, 0.5).coverage == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(vocab_coverage(v2, 1.0).coverage == 1.0);
    CHECK_THROWS_AS(vocab_coverage(v2, 0.0), ConfigError);
    CHECK_THROWS_AS(vocab_coverage(v2, 1.5), ConfigError);

    CHECK_THROWS_AS(build_url_vocab({}, 0.5), DataError);
}

TEST_CASE("ties rank lexicographically") {
    std::vector<Document> docs{url_doc("1", "http://b.com/"), url_doc("2", "http://a.com/"),
                               url_doc("3", "http://c.com/"), url_doc("4", "http://c.com/")};
    auto v = build_url_vocab(docs, 2.0 / 3.0);
    REQUIRE(v.ranked().size() == 3);
    CHECK(v.ranked()[0].name == "c.com");
    CHECK(v.ranked()[1].name == "a.com");
    CHECK(v.ranked()[2].name == "b.com");
    CHECK(v.retained_count() == 2);
    CHECK(v.is_retained("a.com"));
    CHECK_FALSE(v.is_retained("b.com"));
}

TEST_CASE("zipf coverage equals a brute-force recount and is monotone") {
    auto docs = testing::zipf_corpus(10000, 3000, 1.1, 9, 0.9);
    auto counts = testing::brute_force_domain_counts(docs);
    auto vocab = build_url_vocab(docs, 0.002);
    CHECK(vocab.ranked().size() == counts.size());
    CHECK(vocab.total() == docs.size());

    for (double f : {0.002, 0.01, 0.1, 0.5, 1.0}) {
        std::vector<std::pair<std::uint64_t, std::string>> order;
        for (const auto& [d, c] : counts) order.push_back({c, d});
        std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        });
        const auto keep = static_cast<std::size_t>(std::ceil(f * static_cast<double>(counts.size()) - 1e-9));
        std::uint64_t covered = 0;
        for (std::size_t i = 0; i < keep; ++i) covered += order[i].first;
        auto cov = vocab_coverage(vocab, f);
        CHECK(cov.retained_count == keep);
        CHECK(cov.retained_documents == covered);
        CHECK(cov.coverage == static_cast<double>(covered) / static_cast<double>(docs.size()));
    }

    double prev = 0.0;
    for (int i = 1; i <= 200; ++i) {
        const double c = vocab_coverage(vocab, i / 200.0).coverage;
        CHECK(c >= prev);
        prev = c;
    }
    std::uint64_t with_url = 0;
    for (const auto& d : docs) with_url += d.url.has_value();
    CHECK(vocab_coverage(vocab, 1.0).coverage == static_cast<double>(with_url) / static_cast<double>(docs.size()));

    auto reloaded = UrlVocab::from_json(vocab.to_json());
    CHECK(reloaded.retained_count() == vocab.retained_count());
    CHECK(reloaded.coverage() == vocab.coverage());
    CHECK(reloaded.to_json() == vocab.to_json());
}

TEST_CASE("hashed domains: frozen values, shape and no collisions") {
    const auto key = test_key();
    // Computed independently with Python's hmac module for key bytes 00..0f.
    CHECK(hash_domain("en.wikipedia.org", key) == "px3dsf0c-v0qq");
    CHECK(hash_domain("www.example.com", key) == "4h67zyq9-d8xf");
    CHECK(hash_domain("a", key) == "7ff1sc1z-pheq");
    CHECK(hash_domain("en.wikipedia.org", key) == hash_domain("en.wikipedia.org", key));
    HashKey other = key;
    other[0] = 1;
    CHECK(hash_domain("en.wikipedia.org", other) != hash_domain("en.wikipedia.org", key));

    const std::regex shape("^[a-z0-9]{8}-[a-z0-9]{4}$");
    std::set<std::string> seen;
    for (int i = 0; i < 10000; ++i) {
        const auto h = hash_domain("site" + std::to_string(i) + ".example.org", key);
        REQUIRE(std::regex_match(h, shape));
        seen.insert(h);
    }
    CHECK(seen.size() == 10000);
}
