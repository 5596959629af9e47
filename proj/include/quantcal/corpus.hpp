#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace quantcal {

struct CommentRecord {
    std::string id;
    std::string community;
    std::string author;
    std::optional<std::string> parent_id;  // absent for top-level comments
    std::int64_t created_at = 0;           // unix seconds
    std::string body;
    std::int64_t karma = 0;
    std::optional<double> toxicity;        // in [0,1] when present
};

struct FilterConfig {
    std::int64_t min_community_comments = 1000;
    std::int64_t min_body_chars = 50;
    std::set<std::string> excluded_authors;
    std::int64_t date_start = 0;
    std::int64_t date_end = std::int64_t{1} << 62;
};

struct FilterReport {
    std::int64_t input = 0;
    std::int64_t malformed = 0;
    std::int64_t duplicate_id = 0;
    std::int64_t excluded_author = 0;
    std::int64_t too_short = 0;
    std::int64_t out_of_date_range = 0;
    std::int64_t small_community = 0;
    std::int64_t retained = 0;
};

struct Corpus {
    std::vector<CommentRecord> records;
    FilterReport report;
};

// Unicode scalar count of a UTF-8 string (the "50 characters" rule).
std::int64_t unicode_length(const std::string& utf8);

// Parse one newline-delimited JSON record; nullopt on malformed input.
std::optional<CommentRecord> parse_record_line(const std::string& line);

// Filter order: author exclusion, body length, date range, then the
// community-size threshold on the surviving set.
Corpus ingest(std::istream& in, const FilterConfig& cfg);
Corpus ingest(std::vector<CommentRecord> records, const FilterConfig& cfg);

// Attach toxicity scores from a two-column id,toxicity CSV. Returns the
// number of records that received a score.
std::int64_t attach_toxicity(Corpus& corpus, std::istream& csv);

// community -> indices into corpus.records.
std::map<std::string, std::vector<std::size_t>> community_index(const Corpus& corpus);

// Canonical line-delimited serialization with a schema-version header.
void write_corpus(std::ostream& out, const Corpus& corpus);
Corpus read_corpus(std::istream& in);

void write_filter_report(std::ostream& out, const FilterReport& report);

}  // namespace quantcal
