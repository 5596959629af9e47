#include "quantcal/corpus.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace quantcal {

using nlohmann::json;

std::int64_t unicode_length(const std::string& utf8) {
    std::int64_t n = 0;
    for (unsigned char c : utf8)
        if ((c & 0xC0) != 0x80) ++n;  // skip continuation bytes
    return n;
}

std::optional<CommentRecord> parse_record_line(const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    CommentRecord rec;
    try {
        rec.id = j.at("id").get<std::string>();
        rec.community = j.at("subreddit").get<std::string>();
        rec.author = j.at("author").get<std::string>();
        rec.body = j.at("body").get<std::string>();
        if (j.contains("parent_id") && !j["parent_id"].is_null())
            rec.parent_id = j["parent_id"].get<std::string>();
        if (j.contains("created_utc"))
            rec.created_at = j["created_utc"].get<std::int64_t>();
        if (j.contains("score")) rec.karma = j["score"].get<std::int64_t>();
        if (j.contains("toxicity") && !j["toxicity"].is_null()) {
            double t = j["toxicity"].get<double>();
            if (t < 0.0 || t > 1.0) return std::nullopt;
            rec.toxicity = t;
        }
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (rec.id.empty() || rec.body.empty()) return std::nullopt;
    return rec;
}

Corpus ingest(std::vector<CommentRecord> records, const FilterConfig& cfg) {
    if (cfg.min_community_comments < 0 || cfg.min_body_chars < 0)
        throw std::invalid_argument("ingest: negative filter counts");
    if (cfg.date_start > cfg.date_end)
        throw std::invalid_argument("ingest: date_start > date_end");

    Corpus out;
    out.report.input = static_cast<std::int64_t>(records.size());
    std::unordered_set<std::string> seen;
    std::vector<CommentRecord> survivors;
    for (auto& rec : records) {
        if (!seen.insert(rec.id).second) {
            ++out.report.duplicate_id;
            continue;
        }
        if (cfg.excluded_authors.count(rec.author)) {
            ++out.report.excluded_author;
            continue;
        }
        if (unicode_length(rec.body) < cfg.min_body_chars) {
            ++out.report.too_short;
            continue;
        }
        if (rec.created_at < cfg.date_start || rec.created_at > cfg.date_end) {
            ++out.report.out_of_date_range;
            continue;
        }
        survivors.push_back(std::move(rec));
    }

    // Community threshold applies to the post-filter counts.
    std::unordered_map<std::string, std::int64_t> sizes;
    for (const auto& rec : survivors) ++sizes[rec.community];
    for (auto& rec : survivors) {
        if (sizes[rec.community] < cfg.min_community_comments) {
            ++out.report.small_community;
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    out.report.retained = static_cast<std::int64_t>(out.records.size());
    return out;
}

Corpus ingest(std::istream& in, const FilterConfig& cfg) {
    std::vector<CommentRecord> records;
    std::int64_t malformed = 0, input = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;  // header/comment lines
        ++input;
        auto rec = parse_record_line(line);
        if (!rec) {
            ++malformed;
            continue;
        }
        records.push_back(std::move(*rec));
    }
    Corpus out = ingest(std::move(records), cfg);
    out.report.malformed = malformed;
    out.report.input = input;
    return out;
}

std::int64_t attach_toxicity(Corpus& corpus, std::istream& csv) {
    std::unordered_map<std::string, double> tox;
    std::string line;
    while (std::getline(csv, line)) {
        if (line.empty() || line.rfind("id,", 0) == 0) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("toxicity csv: bad line: " + line);
        double t = std::stod(line.substr(comma + 1));
        if (t < 0.0 || t > 1.0)
            throw std::runtime_error("toxicity csv: score outside [0,1]: " + line);
        tox[line.substr(0, comma)] = t;
    }
    std::int64_t attached = 0;
    for (auto& rec : corpus.records) {
        auto it = tox.find(rec.id);
        if (it != tox.end()) {
            rec.toxicity = it->second;
            ++attached;
        }
    }
    return attached;
}

std::map<std::string, std::vector<std::size_t>> community_index(const Corpus& corpus) {
    std::map<std::string, std::vector<std::size_t>> idx;
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
        idx[corpus.records[i].community].push_back(i);
    return idx;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    out << "#quantcal-corpus v1\n";
    for (const auto& rec : corpus.records) {
        json j;
        j["id"] = rec.id;
        j["subreddit"] = rec.community;
        j["author"] = rec.author;
        if (rec.parent_id)
            j["parent_id"] = *rec.parent_id;
        else
            j["parent_id"] = nullptr;
        j["created_utc"] = rec.created_at;
        j["body"] = rec.body;
        j["score"] = rec.karma;
        if (rec.toxicity) j["toxicity"] = *rec.toxicity;
        out << j.dump() << "\n";
    }
}

Corpus read_corpus(std::istream& in) {
    Corpus out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto rec = parse_record_line(line);
        if (!rec) throw std::runtime_error("corpus file: malformed line: " + line);
        out.records.push_back(std::move(*rec));
    }
    out.report.input = out.report.retained =
        static_cast<std::int64_t>(out.records.size());
    return out;
}

void write_filter_report(std::ostream& out, const FilterReport& r) {
    out << "input=" << r.input << "\n"
        << "malformed=" << r.malformed << "\n"
        << "duplicate_id=" << r.duplicate_id << "\n"
        << "excluded_author=" << r.excluded_author << "\n"
        << "too_short=" << r.too_short << "\n"
        << "out_of_date_range=" << r.out_of_date_range << "\n"
        << "small_community=" << r.small_community << "\n"
        << "retained=" << r.retained << "\n";
}

}  // namespace quantcal
