#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "quantcal/strata.hpp"

namespace quantcal {

enum class CalibratorLabel { political, nonpolitical };

// Per-stratum political-prevalence forecasts with standard errors.
struct Calibrator {
    std::array<double, kNumStrata> p{};  // forecasts
    std::array<double, kNumStrata> s{};  // standard errors
    CalibratorLabel label = CalibratorLabel::nonpolitical;
};

struct SubredditEstimate {
    std::string community;
    StrataProfile profile;
    CalibratorLabel calibrator_choice = CalibratorLabel::nonpolitical;
    double diff = 0.0;       // jsd(D, D_pol) - jsd(D, D_nonpol)
    double p_subr = 0.0;     // corrected prevalence
    std::int64_t n_subr = 0; // comment count
};

struct CumulativeEstimate {
    double p = 0.0;
    double s2_pol = 0.0;
    double s2_nonpol = 0.0;
    double s2 = 0.0;
    std::int64_t n = 0;
};

struct SweepPoint {
    double y = 0.0;
    double cumulative_share = 0.0;
    std::int64_t community_count = 0;  // communities with p_subr < y
};

// Base-2 Jensen-Shannon divergence between two strata profiles.
double jsd(const StrataProfile& p, const StrataProfile& q);

// diff <= threshold selects the political calibrator.
std::pair<CalibratorLabel, double> select_calibrator(const StrataProfile& d_subr,
                                                     const StrataProfile& d_pol,
                                                     const StrataProfile& d_nonpol,
                                                     double threshold = 0.0);

// Corrected classify-and-count: sum_k W_k * p_k.
double subreddit_prevalence(const StrataProfile& profile, const Calibrator& cal);

// Convenience: full per-community estimate.
SubredditEstimate estimate_subreddit(const std::string& community,
                                     const StrataProfile& d_subr,
                                     const StrataProfile& d_pol,
                                     const StrataProfile& d_nonpol,
                                     const Calibrator& cal_pol,
                                     const Calibrator& cal_nonpol,
                                     double threshold = 0.0);

// N-weighted mean of per-community prevalences; variance from the
// per-group stratum comment masses and calibrator standard errors.
CumulativeEstimate cumulative_prevalence(const std::vector<SubredditEstimate>& ests,
                                         const Calibrator& cal_pol,
                                         const Calibrator& cal_nonpol);

// Variance per group: sum_k (N_{k,g}/N)^2 * s_{k,g}^2, then summed.
std::array<double, 3> variance_of(
    const std::array<std::int64_t, kNumStrata>& n_pol,
    const std::array<std::int64_t, kNumStrata>& n_nonpol,
    std::int64_t n_total, const Calibrator& cal_pol,
    const Calibrator& cal_nonpol);

// Cumulative share of political comments from communities with p_subr < y,
// for each y in the grid.
std::vector<SweepPoint> threshold_sweep(const std::vector<SubredditEstimate>& ests,
                                        const std::vector<double>& y_grid);

// Drops the m communities with the largest N_subr * p_subr among those
// whose p_subr is below political_cutoff, then reruns the sweep.
std::vector<SweepPoint> exclude_top(const std::vector<SubredditEstimate>& ests,
                                    const std::vector<double>& y_grid,
                                    std::size_t m,
                                    double political_cutoff = 0.25);

// The m excluded community names, largest contributor first.
std::vector<std::string> top_contributors(const std::vector<SubredditEstimate>& ests,
                                          std::size_t m,
                                          double political_cutoff = 0.25);

}  // namespace quantcal
