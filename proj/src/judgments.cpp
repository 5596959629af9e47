#include "quantcal/judgments.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace quantcal {

int aggregate(const RatingRecord& rec, AggregationStrategy strategy) {
    int pos = 0;
    for (int r : rec.ratings) {
        if (r != 0 && r != 1)
            throw std::invalid_argument("aggregate: rating not in {0,1}");
        pos += r;
    }
    switch (strategy) {
        case AggregationStrategy::majority: return pos >= 2 ? 1 : 0;
        case AggregationStrategy::any_one: return pos >= 1 ? 1 : 0;
        case AggregationStrategy::all_three: return pos == 3 ? 1 : 0;
    }
    throw std::logic_error("aggregate: unknown strategy");
}

StratumPrevalence stratum_prevalence(int k, const std::vector<int>& labels) {
    if (labels.empty())
        throw std::invalid_argument("stratum_prevalence: no labels");
    StratumPrevalence out;
    out.k = k;
    out.n = static_cast<std::int64_t>(labels.size());
    std::int64_t pos = 0;
    for (int l : labels) pos += (l != 0);
    out.p = static_cast<double>(pos) / static_cast<double>(out.n);
    out.s = std::sqrt(out.p * (1.0 - out.p) / static_cast<double>(out.n));
    return out;
}

std::array<double, 4> agreement_breakdown(const std::vector<RatingRecord>& recs) {
    if (recs.empty())
        throw std::invalid_argument("agreement_breakdown: no records");
    std::array<double, 4> out{0, 0, 0, 0};
    for (const auto& r : recs)
        out[r.ratings[0] + r.ratings[1] + r.ratings[2]] += 1.0;
    for (double& v : out) v /= static_cast<double>(recs.size());
    return out;
}

double krippendorff_alpha(const std::vector<RatingRecord>& recs) {
    if (recs.size() < 2)
        throw std::invalid_argument("krippendorff_alpha: need >= 2 records");
    // Binary nominal coincidence matrix from 3 raters per unit, m-1 = 2.
    double o01 = 0.0;       // off-diagonal coincidences
    double n0 = 0.0, n1 = 0.0;  // marginal totals
    for (const auto& r : recs) {
        int pos = r.ratings[0] + r.ratings[1] + r.ratings[2];
        int neg = 3 - pos;
        // pairs of unequal values within the unit: pos*neg ordered pairs *2,
        // each weighted 1/(m-1)
        o01 += 2.0 * pos * neg / 2.0;
        n0 += neg;
        n1 += pos;
    }
    const double n = n0 + n1;
    const double d_obs = o01;  // both 0-1 and 1-0 cells, nominal delta = 1
    const double d_exp = 2.0 * n0 * n1 / (n - 1.0);
    if (d_exp == 0.0) return 1.0;  // all ratings identical
    return 1.0 - d_obs / d_exp;
}

AggregationStrategy aggregation_from_string(const std::string& name) {
    if (name == "majority") return AggregationStrategy::majority;
    if (name == "any_one") return AggregationStrategy::any_one;
    if (name == "all_three") return AggregationStrategy::all_three;
    throw std::invalid_argument("unknown aggregation strategy: " + name);
}

std::string to_string(AggregationStrategy s) {
    switch (s) {
        case AggregationStrategy::majority: return "majority";
        case AggregationStrategy::any_one: return "any_one";
        case AggregationStrategy::all_three: return "all_three";
    }
    return "?";
}

std::vector<RatingRecord> parse_ratings_csv(std::istream& in) {
    std::vector<RatingRecord> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("comment_id", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::stringstream ss(line);
        std::string field;
        RatingRecord rec;
        if (!std::getline(ss, rec.comment_id, ','))
            throw std::runtime_error("ratings csv: bad line: " + line);
        for (int i = 0; i < 3; ++i) {
            if (!std::getline(ss, field, ','))
                throw std::runtime_error("ratings csv: record must have 3 ratings: " + line);
            if (field == "0")
                rec.ratings[i] = 0;
            else if (field == "1")
                rec.ratings[i] = 1;
            else
                throw std::runtime_error("ratings csv: rating not 0/1: " + line);
        }
        if (std::getline(ss, field, ','))
            throw std::runtime_error("ratings csv: record must have 3 ratings: " + line);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace quantcal
