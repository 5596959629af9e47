#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace quantcal {

// One reply with soft political probability, toxicity score, and whether it
// crosses partisan lines.
struct ReplyObservation {
    std::string reply_id;
    std::string community;
    double political = 0.0;
    double toxicity = 0.0;
    bool cross = false;
};

// Soft (toxic-and-political, toxic-and-not-political) counts for one reply.
std::pair<double, double> tp_tnp(double toxicity, double political);

// Soft trial/success counts for one (community, polreply, cross) cell.
struct CellCounts {
    std::string community;
    int polreply = 0;
    int cross = 0;
    double n = 0.0;  // soft trials
    double t = 0.0;  // soft successes
};

// Aggregates replies into the 4 cells per community. Cell order within a
// community: (polreply, cross) = (0,0), (0,1), (1,0), (1,1).
std::vector<CellCounts> build_cells(const std::vector<ReplyObservation>& replies);

inline constexpr int kGlmmFixed = 8;  // intercept + 3 mains + 4 interactions

struct GlmmOptions {
    int quad_nodes = 21;       // Gauss-Hermite nodes (>= 15)
    double tol = 1e-8;         // relative log-likelihood change
    int max_iter = 500;
    bool fix_sigma = false;    // freeze sigma_alpha at sigma_value
    double sigma_value = 0.0;
};

struct GlmmFit {
    std::array<double, kGlmmFixed> beta{};
    std::array<double, kGlmmFixed> se{};
    double sigma_alpha = 0.0;
    std::map<std::string, double> alpha;  // posterior modes per community
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Binomial GLMM with a per-community random intercept, soft counts allowed.
// polsub maps each community to its political-subreddit indicator.
GlmmFit fit_glmm(const std::vector<CellCounts>& cells,
                 const std::map<std::string, int>& polsub,
                 const GlmmOptions& opts = {});

// Marginal log-likelihood and gradient w.r.t. (beta[0..7], log sigma) at the
// given parameters, using the same adaptive quadrature as the fitter.
std::pair<double, std::vector<double>> glmm_loglik_and_grad(
    const std::vector<CellCounts>& cells,
    const std::map<std::string, int>& polsub,
    const std::array<double, kGlmmFixed>& beta, double log_sigma,
    int quad_nodes = 21);

// The 8 cell probabilities (polsub, polreply, cross) at alpha = 0, ordered
// with polsub outermost then polreply then cross.
std::array<double, 8> predict_cell_means(const GlmmFit& fit);

// Design row for one cell.
std::array<double, kGlmmFixed> glmm_design_row(int polsub, int polreply,
                                               int cross);

}  // namespace quantcal
