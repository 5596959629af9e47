#include "quantcal/strata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace quantcal {

bool StrataProfile::valid(double tol) const {
    if (weights.size() != kNumStrata || total_count < 0) return false;
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) return false;
        sum += w;
    }
    return std::abs(sum - 1.0) <= tol;
}

int stratum_of(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("stratum_of: probability outside [0,1]");
    // Compare against the decimal boundaries directly; p*10 truncation is
    // off by one ulp for boundary values like 0.3.
    for (int k = 1; k < kNumStrata; ++k)
        if (p < static_cast<double>(k) / 10.0) return k;
    return kNumStrata;
}

StrataProfile profile(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("profile: empty score list");
    StrataProfile out;
    out.weights.assign(kNumStrata, 0.0);
    for (double s : scores) out.weights[stratum_of(s) - 1] += 1.0;
    out.total_count = static_cast<std::int64_t>(scores.size());
    for (double& w : out.weights) w /= static_cast<double>(out.total_count);
    return out;
}

double midpoint_sd(int k) {
    if (k < 1 || k > kNumStrata)
        throw std::invalid_argument("midpoint_sd: stratum out of range");
    const double p = (k - 0.5) / 10.0;
    return std::sqrt(p * (1.0 - p));
}

namespace {

// Largest-remainder rounding of nonnegative reals to integers summing to
// target. Entries flagged fixed keep their value as-is.
std::vector<std::int64_t> largest_remainder(const std::vector<double>& raw,
                                            const std::vector<bool>& fixed,
                                            const std::vector<std::int64_t>& fixed_val,
                                            std::int64_t target) {
    const std::size_t n = raw.size();
    std::vector<std::int64_t> out(n, 0);
    std::int64_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> rema;
    for (std::size_t i = 0; i < n; ++i) {
        if (fixed[i]) {
            out[i] = fixed_val[i];
        } else {
            out[i] = static_cast<std::int64_t>(std::floor(raw[i]));
            rema.emplace_back(raw[i] - std::floor(raw[i]), i);
        }
        assigned += out[i];
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // deterministic tie-break
    });
    std::int64_t leftover = target - assigned;
    for (std::size_t j = 0; leftover > 0 && j < rema.size(); ++j, --leftover)
        out[rema[j].second] += 1;
    return out;
}

}  // namespace

AllocationPlan neyman_allocate(std::int64_t n, const StrataProfile& w,
                               std::int64_t floor) {
    if (!w.valid()) throw std::invalid_argument("neyman_allocate: invalid profile");
    if (floor < 0) throw std::invalid_argument("neyman_allocate: negative floor");
    int active = 0;
    for (double wk : w.weights)
        if (wk > 0.0) ++active;
    if (floor * active > n)
        throw std::invalid_argument("neyman_allocate: floor infeasible for budget");

    std::vector<double> raw(kNumStrata, 0.0);
    double denom = 0.0;
    for (int k = 1; k <= kNumStrata; ++k)
        denom += w.weights[k - 1] * midpoint_sd(k);
    if (denom <= 0.0)
        throw std::invalid_argument("neyman_allocate: degenerate profile");
    for (int k = 1; k <= kNumStrata; ++k)
        raw[k - 1] = static_cast<double>(n) * w.weights[k - 1] * midpoint_sd(k) / denom;

    // Pin strata whose share falls below the floor, rescale the rest, repeat.
    std::vector<bool> pinned(kNumStrata, false);
    std::vector<double> share = raw;
    for (;;) {
        bool changed = false;
        std::int64_t pinned_total = 0;
        double unpinned_raw = 0.0;
        for (int i = 0; i < kNumStrata; ++i) {
            if (w.weights[i] <= 0.0) continue;
            if (pinned[i]) {
                pinned_total += floor;
            } else if (share[i] < static_cast<double>(floor)) {
                pinned[i] = true;
                pinned_total += floor;
                changed = true;
            }
        }
        for (int i = 0; i < kNumStrata; ++i)
            if (w.weights[i] > 0.0 && !pinned[i]) unpinned_raw += raw[i];
        if (!changed) break;
        const double scale =
            unpinned_raw > 0.0
                ? static_cast<double>(n - pinned_total) / unpinned_raw
                : 0.0;
        for (int i = 0; i < kNumStrata; ++i) {
            if (w.weights[i] <= 0.0 || pinned[i]) continue;
            share[i] = raw[i] * scale;
        }
    }

    std::vector<bool> fixed(kNumStrata, false);
    std::vector<std::int64_t> fixed_val(kNumStrata, 0);
    for (int i = 0; i < kNumStrata; ++i) {
        if (w.weights[i] <= 0.0) {
            fixed[i] = true;
            fixed_val[i] = 0;
            share[i] = 0.0;
        } else if (pinned[i]) {
            fixed[i] = true;
            fixed_val[i] = floor;
        }
    }

    AllocationPlan plan;
    plan.budget = n;
    plan.floor = floor;
    plan.counts = largest_remainder(share, fixed, fixed_val, n);
    return plan;
}

std::vector<std::vector<std::string>> draw_sample(
    const std::vector<std::string>& ids, const std::vector<double>& scores,
    const AllocationPlan& plan, std::uint64_t seed) {
    if (ids.size() != scores.size())
        throw std::invalid_argument("draw_sample: ids/scores size mismatch");
    std::vector<std::vector<std::string>> strata(kNumStrata);
    for (std::size_t i = 0; i < ids.size(); ++i)
        strata[stratum_of(scores[i]) - 1].push_back(ids[i]);

    std::vector<std::vector<std::string>> out(kNumStrata);
    for (int k = 0; k < kNumStrata; ++k) {
        const auto need = plan.counts[k];
        auto& pool = strata[k];
        if (static_cast<std::int64_t>(pool.size()) < need)
            throw std::runtime_error("draw_sample: stratum " +
                                     std::to_string(k + 1) +
                                     " holds fewer items than its allocation");
        // Per-stratum derived seed keeps strata independent of each other.
        std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (k + 1));
        // Partial Fisher-Yates: first `need` positions form the sample.
        for (std::int64_t j = 0; j < need; ++j) {
            std::uniform_int_distribution<std::size_t> d(j, pool.size() - 1);
            std::swap(pool[j], pool[d(rng)]);
        }
        out[k].assign(pool.begin(), pool.begin() + need);
    }
    return out;
}

}  // namespace quantcal
