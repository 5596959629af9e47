#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace quantcal {

// One comment's three binary political/not-political ratings.
struct RatingRecord {
    std::string comment_id;
    std::array<int, 3> ratings;  // each 0 or 1
};

enum class AggregationStrategy { majority, any_one, all_three };

struct StratumPrevalence {
    int k = 0;
    std::int64_t n = 0;
    double p = 0.0;
    double s = 0.0;  // sqrt(p(1-p)/n)
};

int aggregate(const RatingRecord& rec, AggregationStrategy strategy);

StratumPrevalence stratum_prevalence(int k, const std::vector<int>& labels);

// Proportions of records with exactly 0, 1, 2, 3 positive ratings.
std::array<double, 4> agreement_breakdown(const std::vector<RatingRecord>& recs);

// Nominal-metric Krippendorff's alpha over binary ratings, coincidence
// matrix formulation. All-identical ratings give 1 by convention.
double krippendorff_alpha(const std::vector<RatingRecord>& recs);

AggregationStrategy aggregation_from_string(const std::string& name);
std::string to_string(AggregationStrategy s);

// CSV parsing for rating files: comment_id,r1,r2,r3 per line, optional
// header. Records without exactly 3 binary ratings are rejected.
std::vector<RatingRecord> parse_ratings_csv(std::istream& in);

}  // namespace quantcal
