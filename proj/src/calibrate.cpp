#include "quantcal/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace quantcal {

namespace {

double xlog2x_ratio(double x, double m) {
    // x * log2(x / m), with the 0 * log(0/.) convention.
    if (x <= 0.0) return 0.0;
    return x * std::log2(x / m);
}

}  // namespace

double jsd(const StrataProfile& p, const StrataProfile& q) {
    if (!p.valid() || !q.valid())
        throw std::invalid_argument("jsd: invalid profile");
    double d = 0.0;
    for (int k = 0; k < kNumStrata; ++k) {
        const double m = 0.5 * (p.weights[k] + q.weights[k]);
        d += 0.5 * xlog2x_ratio(p.weights[k], m) +
             0.5 * xlog2x_ratio(q.weights[k], m);
    }
    return std::max(0.0, d);
}

std::pair<CalibratorLabel, double> select_calibrator(const StrataProfile& d_subr,
                                                     const StrataProfile& d_pol,
                                                     const StrataProfile& d_nonpol,
                                                     double threshold) {
    const double diff = jsd(d_subr, d_pol) - jsd(d_subr, d_nonpol);
    const auto choice = diff <= threshold ? CalibratorLabel::political
                                          : CalibratorLabel::nonpolitical;
    return {choice, diff};
}

double subreddit_prevalence(const StrataProfile& profile, const Calibrator& cal) {
    if (!profile.valid())
        throw std::invalid_argument("subreddit_prevalence: invalid profile");
    double p = 0.0;
    for (int k = 0; k < kNumStrata; ++k) p += profile.weights[k] * cal.p[k];
    return p;
}

SubredditEstimate estimate_subreddit(const std::string& community,
                                     const StrataProfile& d_subr,
                                     const StrataProfile& d_pol,
                                     const StrataProfile& d_nonpol,
                                     const Calibrator& cal_pol,
                                     const Calibrator& cal_nonpol,
                                     double threshold) {
    SubredditEstimate est;
    est.community = community;
    est.profile = d_subr;
    est.n_subr = d_subr.total_count;
    auto [choice, diff] = select_calibrator(d_subr, d_pol, d_nonpol, threshold);
    est.calibrator_choice = choice;
    est.diff = diff;
    const auto& cal =
        choice == CalibratorLabel::political ? cal_pol : cal_nonpol;
    est.p_subr = subreddit_prevalence(d_subr, cal);
    return est;
}

std::array<double, 3> variance_of(
    const std::array<std::int64_t, kNumStrata>& n_pol,
    const std::array<std::int64_t, kNumStrata>& n_nonpol,
    std::int64_t n_total, const Calibrator& cal_pol,
    const Calibrator& cal_nonpol) {
    if (n_total <= 0) throw std::invalid_argument("variance_of: N must be > 0");
    double s2_pol = 0.0, s2_nonpol = 0.0;
    for (int k = 0; k < kNumStrata; ++k) {
        const double fp = static_cast<double>(n_pol[k]) / n_total;
        const double fn = static_cast<double>(n_nonpol[k]) / n_total;
        s2_pol += fp * fp * cal_pol.s[k] * cal_pol.s[k];
        s2_nonpol += fn * fn * cal_nonpol.s[k] * cal_nonpol.s[k];
    }
    return {s2_pol, s2_nonpol, s2_pol + s2_nonpol};
}

CumulativeEstimate cumulative_prevalence(const std::vector<SubredditEstimate>& ests,
                                         const Calibrator& cal_pol,
                                         const Calibrator& cal_nonpol) {
    if (ests.empty())
        throw std::invalid_argument("cumulative_prevalence: no estimates");
    CumulativeEstimate out;
    std::array<std::int64_t, kNumStrata> n_pol{}, n_nonpol{};
    double weighted = 0.0;
    for (const auto& e : ests) {
        out.n += e.n_subr;
        weighted += static_cast<double>(e.n_subr) * e.p_subr;
        auto& bucket = e.calibrator_choice == CalibratorLabel::political
                           ? n_pol
                           : n_nonpol;
        for (int k = 0; k < kNumStrata; ++k)
            bucket[k] += static_cast<std::int64_t>(
                std::llround(e.profile.weights[k] * e.n_subr));
    }
    if (out.n <= 0)
        throw std::invalid_argument("cumulative_prevalence: empty communities");
    out.p = weighted / static_cast<double>(out.n);
    const auto v = variance_of(n_pol, n_nonpol, out.n, cal_pol, cal_nonpol);
    out.s2_pol = v[0];
    out.s2_nonpol = v[1];
    out.s2 = v[2];
    return out;
}

std::vector<SweepPoint> threshold_sweep(const std::vector<SubredditEstimate>& ests,
                                        const std::vector<double>& y_grid) {
    if (ests.empty())
        throw std::invalid_argument("threshold_sweep: no estimates");
    double total = 0.0;
    for (const auto& e : ests) total += static_cast<double>(e.n_subr) * e.p_subr;
    std::vector<SweepPoint> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        SweepPoint pt;
        pt.y = y;
        double below = 0.0;
        for (const auto& e : ests) {
            if (e.p_subr < y) {
                below += static_cast<double>(e.n_subr) * e.p_subr;
                ++pt.community_count;
            }
        }
        pt.cumulative_share = total > 0.0 ? below / total : 0.0;
        out.push_back(pt);
    }
    return out;
}

std::vector<std::string> top_contributors(const std::vector<SubredditEstimate>& ests,
                                          std::size_t m,
                                          double political_cutoff) {
    std::vector<const SubredditEstimate*> nonpol;
    for (const auto& e : ests)
        if (e.p_subr < political_cutoff) nonpol.push_back(&e);
    std::sort(nonpol.begin(), nonpol.end(), [](const auto* a, const auto* b) {
        const double va = static_cast<double>(a->n_subr) * a->p_subr;
        const double vb = static_cast<double>(b->n_subr) * b->p_subr;
        if (va != vb) return va > vb;
        return a->community < b->community;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < m && i < nonpol.size(); ++i)
        out.push_back(nonpol[i]->community);
    return out;
}

std::vector<SweepPoint> exclude_top(const std::vector<SubredditEstimate>& ests,
                                    const std::vector<double>& y_grid,
                                    std::size_t m,
                                    double political_cutoff) {
    if (m >= ests.size())
        throw std::invalid_argument("exclude_top: m must be < community count");
    const auto drop = top_contributors(ests, m, political_cutoff);
    std::vector<SubredditEstimate> kept;
    for (const auto& e : ests)
        if (std::find(drop.begin(), drop.end(), e.community) == drop.end())
            kept.push_back(e);
    return threshold_sweep(kept, y_grid);
}

}  // namespace quantcal
