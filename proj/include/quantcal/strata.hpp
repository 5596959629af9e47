#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace quantcal {

// Number of classifier-output deciles used throughout the pipeline.
inline constexpr int kNumStrata = 10;

// Distribution of a comment set over the classifier-output deciles.
struct StrataProfile {
    std::vector<double> weights;  // size kNumStrata, sums to 1
    std::int64_t total_count = 0;

    // Tolerance admits profiles quoted at 3-decimal precision.
    bool valid(double tol = 5e-3) const;
};

struct AllocationPlan {
    std::vector<std::int64_t> counts;  // size kNumStrata, sums to budget
    std::int64_t budget = 0;
    std::int64_t floor = 50;
};

// Decile index in 1..10. Bins are [0,0.1), [0.1,0.2), ..., [0.9,1.0],
// last bin closed at both ends.
int stratum_of(double p);

// Empirical profile of a score list. Throws on empty input.
StrataProfile profile(const std::vector<double>& scores);

// Anticipated within-stratum standard deviation sqrt(P(1-P)) at the
// stratum midpoint P = (k - 0.5) / 10.
double midpoint_sd(int k);

// Neyman allocation with a per-stratum minimum. Raw shares proportional to
// W_k * S_k; strata below the floor are pinned to the floor and the
// remaining budget rescaled over the unpinned strata, iterating until no
// stratum sits below the floor. Largest-remainder rounding makes the counts
// sum to n exactly. Strata with zero weight get zero.
AllocationPlan neyman_allocate(std::int64_t n, const StrataProfile& w,
                               std::int64_t floor = 50);

// Uniform sample without replacement inside each stratum, reproducible from
// the seed. scores[i] determines the stratum of ids[i]. Throws when a
// stratum holds fewer items than its allocation, naming the stratum.
std::vector<std::vector<std::string>> draw_sample(
    const std::vector<std::string>& ids, const std::vector<double>& scores,
    const AllocationPlan& plan, std::uint64_t seed);

}  // namespace quantcal
