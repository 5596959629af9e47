// Independent IRLS logistic regression on soft binomial cell counts; oracle
// for the mixed model's sigma = 0 path.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "quantcal/toxmodel.hpp"

namespace qc_test {

inline std::array<double, quantcal::kGlmmFixed> irls_oracle(
    const std::vector<quantcal::CellCounts>& cells,
    const std::map<std::string, int>& polsub) {
    using quantcal::kGlmmFixed;
    std::array<double, kGlmmFixed> beta{};
    for (int iter = 0; iter < 200; ++iter) {
        double h[kGlmmFixed][kGlmmFixed] = {};
        double g[kGlmmFixed] = {};
        for (const auto& c : cells) {
            const auto x = quantcal::glmm_design_row(polsub.at(c.community),
                                                     c.polreply, c.cross);
            double eta = 0.0;
            for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * x[j];
            const double mu = 1.0 / (1.0 + std::exp(-eta));
            const double w = c.n * mu * (1.0 - mu);
            for (int j = 0; j < kGlmmFixed; ++j) {
                g[j] += (c.t - c.n * mu) * x[j];
                for (int k = 0; k < kGlmmFixed; ++k) h[j][k] += w * x[j] * x[k];
            }
        }
        // Solve h * d = g, Gaussian elimination with partial pivoting.
        double a[kGlmmFixed][kGlmmFixed + 1];
        for (int j = 0; j < kGlmmFixed; ++j) {
            for (int k = 0; k < kGlmmFixed; ++k) a[j][k] = h[j][k];
            a[j][kGlmmFixed] = g[j];
        }
        for (int col = 0; col < kGlmmFixed; ++col) {
            int piv = col;
            for (int r = col + 1; r < kGlmmFixed; ++r)
                if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
            for (int k = 0; k <= kGlmmFixed; ++k) std::swap(a[col][k], a[piv][k]);
            for (int r = 0; r < kGlmmFixed; ++r) {
                if (r == col || a[col][col] == 0.0) continue;
                const double f = a[r][col] / a[col][col];
                for (int k = 0; k <= kGlmmFixed; ++k) a[r][k] -= f * a[col][k];
            }
        }
        double step = 0.0;
        for (int j = 0; j < kGlmmFixed; ++j) {
            const double d = a[j][kGlmmFixed] / a[j][j];
            beta[j] += d;
            step = std::max(step, std::abs(d));
        }
        if (step < 1e-12) break;
    }
    return beta;
}

}  // namespace qc_test
