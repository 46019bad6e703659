#include <doctest.h>

#include <atomic>
#include <fstream>

#include "support.hpp"
#include "toolforge/util.hpp"

using namespace toolforge;

TEST_SUITE("util") {

TEST_CASE("sha256 matches the FIPS 180-2 test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("fnv1a64 matches the reference offsets") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("unit_interval stays in [0, 1)") {
    for (std::uint64_t k = 0; k < 10000; ++k) {
        const double u = unit_interval(k * 0x9e3779b97f4a7c15ULL);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    CHECK(unit_interval(~0ULL) < 1.0);
}

TEST_CASE("whitespace helpers") {
    CHECK(trim("  a b \n") == "a b");
    CHECK(normalize_whitespace(" a\t\tb\n c  ") == "a b c");
    CHECK(normalize_whitespace("") == "");
    CHECK(padded_id("chain-", 7) == "chain-00007");
    CHECK(padded_id("chain-", 123456) == "chain-123456");
}

TEST_CASE("utf8 validation") {
    CHECK(is_valid_utf8("plain"));
    CHECK(is_valid_utf8("caf\xc3\xa9"));
    CHECK(is_valid_utf8("\xe2\x82\xac"));
    CHECK_FALSE(is_valid_utf8("\xc3"));
    CHECK_FALSE(is_valid_utf8("\xff"));
    CHECK_FALSE(is_valid_utf8("\xe2\x82"));
    CHECK_FALSE(is_valid_utf8("\xc0\xaf")); // overlong
}

TEST_CASE("json extraction") {
    CHECK(strip_code_fence("```json\n{\"a\":1}\n```") == "{\"a\":1}");
    auto lenient = extract_json_object("Sure! {\"a\": {\"b\": \"}\"}} trailing");
    REQUIRE(lenient);
    CHECK((*lenient)["a"]["b"] == "}");
    CHECK_FALSE(extract_json_object("no braces"));
    CHECK(parse_json_object_strict(" {\"a\":1} "));
    CHECK_FALSE(parse_json_object_strict("x {\"a\":1}"));
    CHECK_FALSE(parse_json_object_strict("[1]"));
}

TEST_CASE("jsonl files") {
    tftest::TempDir dir;
    const auto p = dir / "x.jsonl";
    write_jsonl_atomic(p, {json{{"a", 1}}, json{{"a", 2}}});
    auto rows = read_jsonl(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1]["a"] == 2);
    CHECK_FALSE(std::filesystem::exists(dir / "x.jsonl.tmp"));

    std::ofstream(p, std::ios::app) << "{broken\n";
    try {
        read_jsonl(p);
        FAIL("expected ParseFailure");
    } catch (const ParseFailure& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    CHECK(file_sha256(dir / "missing") == "");
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);

    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 5) throw ConfigError("boom");
                                 }),
                    ConfigError);
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

}
