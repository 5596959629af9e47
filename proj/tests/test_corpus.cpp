#include <doctest.h>

#include <sstream>

#include "quantcal/corpus.hpp"

using namespace quantcal;

namespace {

CommentRecord make(const std::string& id, const std::string& community,
                   const std::string& author, const std::string& body,
                   std::int64_t created = 1000, std::int64_t karma = 1) {
    CommentRecord r;
    r.id = id;
    r.community = community;
    r.author = author;
    r.body = body;
    r.created_at = created;
    r.karma = karma;
    return r;
}

const std::string kLongBody =
    "this body is certainly longer than fifty characters in total length";

}  // namespace

TEST_CASE("unicode length counts scalars, not bytes") {
    CHECK(unicode_length("hello") == 5);
    CHECK(unicode_length("") == 0);
    CHECK(unicode_length("caf\xc3\xa9") == 4);            // café
    CHECK(unicode_length("\xe2\x82\xac\xe2\x82\xac") == 2);  // €€
    CHECK(unicode_length("\xf0\x9f\x99\x82") == 1);       // emoji
}

TEST_CASE("json record parsing") {
    const std::string line =
        R"({"id":"c1","subreddit":"news","author":"alice","parent_id":"c0",)"
        R"("created_utc":1584000000,"body":"hello there","score":7,)"
        R"("toxicity":0.25})";
    const auto rec = parse_record_line(line);
    REQUIRE(rec.has_value());
    CHECK(rec->id == "c1");
    CHECK(rec->community == "news");
    CHECK(rec->author == "alice");
    CHECK(rec->parent_id == "c0");
    CHECK(rec->created_at == 1584000000);
    CHECK(rec->karma == 7);
    REQUIRE(rec->toxicity.has_value());
    CHECK(*rec->toxicity == doctest::Approx(0.25));

    // parent_id and toxicity are optional.
    const auto top = parse_record_line(
        R"({"id":"c2","subreddit":"news","author":"bob",)"
        R"("created_utc":1584000001,"body":"hi","score":0})");
    REQUIRE(top.has_value());
    CHECK_FALSE(top->parent_id.has_value());
    CHECK_FALSE(top->toxicity.has_value());

    CHECK_FALSE(parse_record_line("not json").has_value());
    CHECK_FALSE(parse_record_line(R"({"id":"c3"})").has_value());
}

TEST_CASE("filter rules and report counts") {
    FilterConfig cfg;
    cfg.min_community_comments = 3;
    cfg.min_body_chars = 10;
    cfg.excluded_authors = {"AutoModerator"};
    cfg.date_start = 100;
    cfg.date_end = 200;

    std::vector<CommentRecord> recs = {
        make("a1", "big", "u1", "long enough body", 150),
        make("a1", "big", "u1", "duplicate id gets dropped", 150),
        make("a2", "big", "AutoModerator", "bot comment body", 150),
        make("a3", "big", "u2", "short", 150),
        make("a4", "big", "u3", "outside the window", 300),
        make("a5", "big", "u4", "another valid body", 160),
        make("a6", "big", "u5", "third valid body here", 170),
        make("a7", "tiny", "u6", "valid but lonely community", 150),
    };
    const auto corpus = ingest(recs, cfg);

    CHECK(corpus.report.input == 8);
    CHECK(corpus.report.duplicate_id == 1);
    CHECK(corpus.report.excluded_author == 1);
    CHECK(corpus.report.too_short == 1);
    CHECK(corpus.report.out_of_date_range == 1);
    CHECK(corpus.report.small_community == 1);
    CHECK(corpus.report.retained == 3);
    CHECK(corpus.records.size() == 3);
    for (const auto& r : corpus.records) CHECK(r.community == "big");

    // Every input is accounted for exactly once.
    const auto& rep = corpus.report;
    CHECK(rep.input == rep.malformed + rep.duplicate_id + rep.excluded_author +
                           rep.too_short + rep.out_of_date_range +
                           rep.small_community + rep.retained);
}

TEST_CASE("filtering is idempotent") {
    FilterConfig cfg;
    cfg.min_community_comments = 2;
    cfg.min_body_chars = 10;
    std::vector<CommentRecord> recs;
    for (int i = 0; i < 10; ++i)
        recs.push_back(make("c" + std::to_string(i), i < 6 ? "x" : "y", "u",
                            kLongBody));
    recs.push_back(make("solo", "z", "u", kLongBody));
    const auto once = ingest(recs, cfg);
    const auto twice = ingest(once.records, cfg);
    CHECK(once.records.size() == twice.records.size());
    CHECK(twice.report.retained == twice.report.input);
}

TEST_CASE("community size threshold applies after the other filters") {
    // A community at exactly the threshold drops below it once a too-short
    // comment is removed, so the whole community goes.
    FilterConfig cfg;
    cfg.min_community_comments = 2;
    cfg.min_body_chars = 10;
    std::vector<CommentRecord> recs = {
        make("b1", "edge", "u1", kLongBody),
        make("b2", "edge", "u2", "nope"),
        make("b3", "other", "u3", kLongBody),
        make("b4", "other", "u4", kLongBody),
    };
    const auto corpus = ingest(recs, cfg);
    CHECK(corpus.records.size() == 2);
    CHECK(corpus.report.small_community == 1);
    for (const auto& r : corpus.records) CHECK(r.community == "other");
}

TEST_CASE("corpus serialization round-trips") {
    FilterConfig cfg;
    cfg.min_community_comments = 1;
    cfg.min_body_chars = 1;
    std::vector<CommentRecord> recs = {
        make("c1", "news", "alice", "caf\xc3\xa9 body", 5, -2),
        make("c2", "news", "bob", kLongBody, 6, 3),
    };
    recs[0].parent_id = "c0";
    recs[1].toxicity = 0.5;
    auto corpus = ingest(recs, cfg);

    std::ostringstream out;
    write_corpus(out, corpus);
    std::istringstream in(out.str());
    const auto back = read_corpus(in);
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0].id == "c1");
    CHECK(back.records[0].parent_id == "c0");
    CHECK(back.records[0].body == "caf\xc3\xa9 body");
    CHECK(back.records[0].karma == -2);
    CHECK(back.records[1].toxicity.has_value());
    CHECK(*back.records[1].toxicity == doctest::Approx(0.5));
}

TEST_CASE("toxicity attachment from csv") {
    FilterConfig cfg;
    cfg.min_community_comments = 1;
    cfg.min_body_chars = 1;
    auto corpus = ingest({make("c1", "x", "u", "body one"),
                          make("c2", "x", "u", "body two")},
                         cfg);
    std::istringstream csv("id,toxicity\nc1,0.8\nmissing,0.1\n");
    CHECK(attach_toxicity(corpus, csv) == 1);
    REQUIRE(corpus.records[0].toxicity.has_value());
    CHECK(*corpus.records[0].toxicity == doctest::Approx(0.8));
    CHECK_FALSE(corpus.records[1].toxicity.has_value());
}

TEST_CASE("community index covers every record exactly once") {
    FilterConfig cfg;
    cfg.min_community_comments = 1;
    cfg.min_body_chars = 1;
    auto corpus = ingest({make("c1", "x", "u", "aaa"), make("c2", "y", "u", "bbb"),
                          make("c3", "x", "u", "ccc")},
                         cfg);
    const auto idx = community_index(corpus);
    std::size_t total = 0;
    for (const auto& [name, rows] : idx) {
        total += rows.size();
        for (auto row : rows) CHECK(corpus.records[row].community == name);
    }
    CHECK(total == corpus.records.size());
    CHECK(idx.at("x").size() == 2);
}

TEST_CASE("ingest from a stream counts malformed lines") {
    std::istringstream in(
        "# comment header\n"
        R"({"id":"c1","subreddit":"x","author":"u","created_utc":5,)"
        R"("body":"a body that is long enough for the default, no wait","score":1})"
        "\n"
        "garbage line\n");
    FilterConfig cfg;
    cfg.min_community_comments = 1;
    cfg.min_body_chars = 10;
    const auto corpus = ingest(in, cfg);
    CHECK(corpus.report.malformed == 1);
    CHECK(corpus.report.retained == 1);
}
