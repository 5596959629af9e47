#include "quantcal/toxmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace quantcal {

std::pair<double, double> tp_tnp(double toxicity, double political) {
    if (toxicity < 0.0 || toxicity > 1.0 || political < 0.0 || political > 1.0)
        throw std::invalid_argument("tp_tnp: probabilities must be in [0,1]");
    return {toxicity * political, toxicity * (1.0 - political)};
}

std::vector<CellCounts> build_cells(const std::vector<ReplyObservation>& replies) {
    std::map<std::string, std::array<CellCounts, 4>> by_community;
    for (const auto& r : replies) {
        auto it = by_community.find(r.community);
        if (it == by_community.end()) {
            std::array<CellCounts, 4> cells;
            for (int polreply = 0; polreply < 2; ++polreply)
                for (int cross = 0; cross < 2; ++cross) {
                    auto& c = cells[polreply * 2 + cross];
                    c.community = r.community;
                    c.polreply = polreply;
                    c.cross = cross;
                }
            it = by_community.emplace(r.community, cells).first;
        }
        auto [tp, tnp] = tp_tnp(r.toxicity, r.political);
        const int cross = r.cross ? 1 : 0;
        auto& pol = it->second[2 + cross];
        auto& nonpol = it->second[cross];
        pol.n += r.political;
        pol.t += tp;
        nonpol.n += 1.0 - r.political;
        nonpol.t += tnp;
    }
    std::vector<CellCounts> out;
    for (auto& [name, cells] : by_community)
        for (auto& c : cells) out.push_back(std::move(c));
    return out;
}

std::array<double, kGlmmFixed> glmm_design_row(int polsub, int polreply,
                                               int cross) {
    return {1.0,
            static_cast<double>(polsub),
            static_cast<double>(polreply),
            static_cast<double>(cross),
            static_cast<double>(polsub * polreply),
            static_cast<double>(polsub * cross),
            static_cast<double>(polreply * cross),
            static_cast<double>(polsub * polreply * cross)};
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log1pexp(double z) {
    if (z > 30.0) return z;
    return std::log1p(std::exp(z));
}

// Gauss-Hermite nodes/weights for \int e^{-x^2} f(x) dx.
std::vector<std::pair<double, double>> gauss_hermite(int n) {
    constexpr double kEps = 1e-14;
    constexpr double kPim4 = 0.7511255444649425;  // pi^{-1/4}
    std::vector<double> x(n), w(n);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) -
                1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        else if (i == 1)
            z -= 1.14 * std::pow(n, 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = kPim4, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 -
                     std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < kEps) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    std::vector<std::pair<double, double>> out(n);
    for (int i = 0; i < n; ++i) out[i] = {x[i], w[i]};
    return out;
}

struct Cell {
    std::array<double, kGlmmFixed> x{};
    double n = 0.0, t = 0.0;
};

struct CommunityData {
    std::string name;
    std::vector<Cell> cells;
};

std::vector<CommunityData> group_cells(const std::vector<CellCounts>& cells,
                                       const std::map<std::string, int>& polsub) {
    std::map<std::string, CommunityData> grouped;
    for (const auto& c : cells) {
        if (c.n < 0.0 || c.t < 0.0 || c.t > c.n + 1e-12)
            throw std::invalid_argument(
                "fit_glmm: cell counts must satisfy 0 <= T <= N");
        if (c.n == 0.0) continue;
        auto it = polsub.find(c.community);
        if (it == polsub.end())
            throw std::invalid_argument("fit_glmm: no polsub flag for " +
                                        c.community);
        auto& g = grouped[c.community];
        g.name = c.community;
        Cell cell;
        cell.x = glmm_design_row(it->second, c.polreply, c.cross);
        cell.n = c.n;
        cell.t = c.t;
        g.cells.push_back(cell);
    }
    std::vector<CommunityData> out;
    out.reserve(grouped.size());
    for (auto& [name, g] : grouped) out.push_back(std::move(g));
    if (out.empty()) throw std::invalid_argument("fit_glmm: no usable cells");
    return out;
}

void check_separation(const std::vector<CommunityData>& data) {
    std::map<std::array<double, kGlmmFixed>, std::pair<double, double>> patterns;
    for (const auto& g : data)
        for (const auto& c : g.cells) {
            auto& p = patterns[c.x];
            p.first += c.n;
            p.second += c.t;
        }
    for (const auto& [x, nt] : patterns) {
        if (nt.first > 0.0 && (nt.second <= 0.0 || nt.second >= nt.first)) {
            throw std::runtime_error(
                "fit_glmm: a cell pattern is perfectly toxic or non-toxic "
                "(separation); check the input data");
        }
    }
}

std::vector<int> active_columns(const std::vector<CommunityData>& data) {
    std::array<bool, kGlmmFixed> seen{};
    // A column is identifiable only if it varies across weighted cells.
    std::array<double, kGlmmFixed> lo{}, hi{};
    lo.fill(1e300);
    hi.fill(-1e300);
    for (const auto& g : data)
        for (const auto& c : g.cells)
            for (int j = 0; j < kGlmmFixed; ++j) {
                lo[j] = std::min(lo[j], c.x[j]);
                hi[j] = std::max(hi[j], c.x[j]);
            }
    std::vector<int> active;
    for (int j = 0; j < kGlmmFixed; ++j) {
        seen[j] = (j == 0) ? true : hi[j] > lo[j];
        if (seen[j]) active.push_back(j);
    }
    return active;
}

// Solve A x = b in place, Gauss-Jordan with partial pivoting.
std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-300)
            throw std::runtime_error("fit_glmm: singular system");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        const double d = a[col][col];
        for (int c = col; c < n; ++c) a[col][c] /= d;
        b[col] /= d;
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    return b;
}

std::vector<std::vector<double>> invert_dense(std::vector<std::vector<double>> a) {
    const int n = static_cast<int>(a.size());
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-300)
            throw std::runtime_error("fit_glmm: singular information matrix");
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        const double d = a[col][col];
        for (int c = 0; c < n; ++c) {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            if (f == 0.0) continue;
            for (int c = 0; c < n; ++c) {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    return inv;
}

// Binomial log-likelihood of one community's cells at random intercept a.
double cells_loglik(const CommunityData& g,
                    const std::array<double, kGlmmFixed>& beta, double a) {
    double ll = 0.0;
    for (const auto& c : g.cells) {
        double eta = a;
        for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * c.x[j];
        ll += c.t * eta - c.n * log1pexp(eta);
    }
    return ll;
}

// First three alpha-derivatives of the cells log-likelihood.
struct AlphaDerivs {
    double g1 = 0.0, g2 = 0.0, g3 = 0.0;
};

AlphaDerivs alpha_derivs(const CommunityData& g,
                         const std::array<double, kGlmmFixed>& beta, double a) {
    AlphaDerivs d;
    for (const auto& c : g.cells) {
        double eta = a;
        for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * c.x[j];
        const double mu = sigmoid(eta);
        const double v = mu * (1.0 - mu);
        d.g1 += c.t - c.n * mu;
        d.g2 -= c.n * v;
        d.g3 -= c.n * v * (1.0 - 2.0 * mu);
    }
    return d;
}

// Posterior mode of the random intercept (joint with the N(0, sigma^2) prior).
double find_mode(const CommunityData& g,
                 const std::array<double, kGlmmFixed>& beta, double sigma) {
    const double inv_s2 = 1.0 / (sigma * sigma);
    double a = 0.0;
    double f = cells_loglik(g, beta, a) - 0.5 * a * a * inv_s2;
    for (int iter = 0; iter < 200; ++iter) {
        const auto d = alpha_derivs(g, beta, a);
        const double grad = d.g1 - a * inv_s2;
        const double hess = d.g2 - inv_s2;  // strictly negative
        double step = -grad / hess;
        if (std::abs(grad) < 1e-12 * (1.0 + std::abs(a))) break;
        // Step-halving keeps the joint density non-decreasing.
        for (int h = 0; h < 60; ++h) {
            const double a_new = a + step;
            const double f_new =
                cells_loglik(g, beta, a_new) - 0.5 * a_new * a_new * inv_s2;
            if (f_new >= f - 1e-15) {
                a = a_new;
                f = f_new;
                break;
            }
            step *= 0.5;
        }
    }
    return a;
}

constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2

// Marginal log-likelihood of one community and its gradient with respect to
// the active betas and log sigma, via adaptive Gauss-Hermite quadrature.
// The quadrature center and scale are differentiated exactly (implicit
// function theorem), so the gradient is the exact gradient of the
// approximated log-likelihood.
double community_loglik_grad(
    const CommunityData& g, const std::array<double, kGlmmFixed>& beta,
    double log_sigma, const std::vector<std::pair<double, double>>& gh,
    const std::vector<int>& active, std::vector<double>* grad_out,
    double* mode_out) {
    const double sigma = std::exp(log_sigma);
    const double inv_s2 = 1.0 / (sigma * sigma);
    const int na = static_cast<int>(active.size());

    const double a_hat = find_mode(g, beta, sigma);
    if (mode_out) *mode_out = a_hat;
    const auto dh = alpha_derivs(g, beta, a_hat);
    const double big_h = -(dh.g2 - inv_s2);  // positive curvature at the mode
    const double tau = 1.0 / std::sqrt(big_h);

    auto joint_f = [&](double a) {
        return cells_loglik(g, beta, a) - 0.5 * a * a * inv_s2 - log_sigma -
               kHalfLog2Pi;
    };
    const double f_hat = joint_f(a_hat);

    // dalpha_hat/dtheta and dH/dtheta per active dimension; theta layout is
    // active betas followed by log sigma.
    std::vector<double> dmode(na + 1, 0.0), d_bigh(na + 1, 0.0);
    {
        // dg1/dbeta_j = -sum N sig' x_j ; dg2/dbeta_j = -sum N sig'' x_j
        std::vector<double> dg1(na + 1, 0.0), dg2(na + 1, 0.0);
        for (const auto& c : g.cells) {
            double eta = a_hat;
            for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * c.x[j];
            const double mu = sigmoid(eta);
            const double v = mu * (1.0 - mu);
            for (int k = 0; k < na; ++k) {
                dg1[k] -= c.n * v * c.x[active[k]];
                dg2[k] -= c.n * v * (1.0 - 2.0 * mu) * c.x[active[k]];
            }
        }
        dg1[na] = 2.0 * a_hat * inv_s2;  // d(-a/sigma^2)/dlog_sigma
        dg2[na] = 2.0 * inv_s2;          // d(-1/sigma^2)/dlog_sigma
        const double joint_g2 = dh.g2 - inv_s2;
        for (int k = 0; k <= na; ++k) {
            dmode[k] = -dg1[k] / joint_g2;
            // H = -(g2_cells + prior); g3 of the prior vanishes
            d_bigh[k] = -(dg2[k] + dh.g3 * dmode[k]);
        }
    }
    std::vector<double> dtau(na + 1, 0.0);
    for (int k = 0; k <= na; ++k)
        dtau[k] = -0.5 * tau / big_h * d_bigh[k];

    const double sqrt2 = std::sqrt(2.0);
    double s_sum = 0.0;
    std::vector<double> s_grad(na + 1, 0.0);
    for (const auto& [xq, wq] : gh) {
        const double a = a_hat + sqrt2 * tau * xq;
        const double fi = joint_f(a);
        const double term = wq * std::exp(xq * xq + fi - f_hat);
        s_sum += term;

        // df/dtheta at this node, including node movement.
        double eta_terms_g1 = -a * inv_s2;  // g1 at node, prior part
        std::vector<double> df(na + 1, 0.0);
        for (const auto& c : g.cells) {
            double eta = a;
            for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * c.x[j];
            const double mu = sigmoid(eta);
            const double resid = c.t - c.n * mu;
            eta_terms_g1 += resid;
            for (int k = 0; k < na; ++k) df[k] += resid * c.x[active[k]];
        }
        df[na] = a * a * inv_s2 - 1.0;  // d joint_f/dlog_sigma, explicit part
        for (int k = 0; k <= na; ++k) {
            const double dnode = dmode[k] + sqrt2 * xq * dtau[k];
            s_grad[k] += term * (df[k] + eta_terms_g1 * dnode);
        }
    }

    const double ll = f_hat + std::log(sqrt2 * tau * s_sum);
    if (grad_out) {
        grad_out->assign(na + 1, 0.0);
        for (int k = 0; k <= na; ++k)
            (*grad_out)[k] = dtau[k] / tau + s_grad[k] / s_sum;
        // f_hat carried theta dependence too: df_hat/dtheta = df/dtheta at the
        // mode (envelope) -- but it cancels against the factored exp(-f_hat)
        // inside s_grad/s_sum only if included consistently. Here s_grad used
        // absolute df at each node, so the factored f_hat cancels exactly.
    }
    return ll;
}

struct FixedFit {
    std::array<double, kGlmmFixed> beta{};
    std::array<double, kGlmmFixed> se{};
    double loglik = 0.0;
    int iterations = 0;
};

// Plain fixed-effects weighted logistic regression (sigma = 0 path).
FixedFit fit_fixed(const std::vector<CommunityData>& data,
                   const std::vector<int>& active, double tol, int max_iter) {
    const int na = static_cast<int>(active.size());
    std::array<double, kGlmmFixed> beta{};
    double prev_ll = -1e300;
    int iters = 0;
    for (; iters < max_iter; ++iters) {
        std::vector<double> grad(na, 0.0);
        std::vector<std::vector<double>> hess(na, std::vector<double>(na, 0.0));
        double ll = 0.0;
        for (const auto& g : data)
            for (const auto& c : g.cells) {
                double eta = 0.0;
                for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * c.x[j];
                const double mu = sigmoid(eta);
                const double v = c.n * mu * (1.0 - mu);
                ll += c.t * eta - c.n * log1pexp(eta);
                for (int r = 0; r < na; ++r) {
                    grad[r] += (c.t - c.n * mu) * c.x[active[r]];
                    for (int s = 0; s <= r; ++s)
                        hess[r][s] += v * c.x[active[r]] * c.x[active[s]];
                }
            }
        for (int r = 0; r < na; ++r)
            for (int s = r + 1; s < na; ++s) hess[r][s] = hess[s][r];
        if (!std::isfinite(ll))
            throw std::runtime_error("fit_glmm: non-finite log-likelihood");
        double gnorm = 0.0;
        for (double gv : grad) gnorm = std::max(gnorm, std::abs(gv));
        if (gnorm < 1e-10 ||
            std::abs(ll - prev_ll) < tol * std::max(1.0, std::abs(ll))) {
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
        const auto step = solve_dense(hess, grad);
        for (int r = 0; r < na; ++r) beta[active[r]] += step[r];
    }

    FixedFit fit;
    fit.beta = beta;
    fit.loglik = prev_ll;
    fit.iterations = iters;
    // Observed information standard errors on the active block.
    std::vector<std::vector<double>> info(na, std::vector<double>(na, 0.0));
    for (const auto& g : data)
        for (const auto& c : g.cells) {
            double eta = 0.0;
            for (int j = 0; j < kGlmmFixed; ++j) eta += beta[j] * c.x[j];
            const double mu = sigmoid(eta);
            const double v = c.n * mu * (1.0 - mu);
            for (int r = 0; r < na; ++r)
                for (int s = 0; s < na; ++s)
                    info[r][s] += v * c.x[active[r]] * c.x[active[s]];
        }
    const auto cov = invert_dense(info);
    for (int r = 0; r < na; ++r)
        fit.se[active[r]] = std::sqrt(std::max(0.0, cov[r][r]));
    return fit;
}

}  // namespace

std::pair<double, std::vector<double>> glmm_loglik_and_grad(
    const std::vector<CellCounts>& cells,
    const std::map<std::string, int>& polsub,
    const std::array<double, kGlmmFixed>& beta, double log_sigma,
    int quad_nodes) {
    const auto data = group_cells(cells, polsub);
    const auto gh = gauss_hermite(quad_nodes);
    std::vector<int> all(kGlmmFixed);
    std::iota(all.begin(), all.end(), 0);
    double ll = 0.0;
    std::vector<double> grad(kGlmmFixed + 1, 0.0);
    std::vector<double> g;
    for (const auto& c : data) {
        ll += community_loglik_grad(c, beta, log_sigma, gh, all, &g, nullptr);
        for (int k = 0; k <= kGlmmFixed; ++k) grad[k] += g[k];
    }
    return {ll, grad};
}

GlmmFit fit_glmm(const std::vector<CellCounts>& cells,
                 const std::map<std::string, int>& polsub,
                 const GlmmOptions& opts) {
    if (opts.quad_nodes < 15)
        throw std::invalid_argument("fit_glmm: need at least 15 quadrature nodes");
    const auto data = group_cells(cells, polsub);
    check_separation(data);
    const auto active = active_columns(data);
    const int na = static_cast<int>(active.size());

    GlmmFit fit;

    if (opts.fix_sigma && opts.sigma_value == 0.0) {
        const auto fx = fit_fixed(data, active, opts.tol, opts.max_iter);
        fit.beta = fx.beta;
        fit.se = fx.se;
        fit.sigma_alpha = 0.0;
        fit.loglik = fx.loglik;
        fit.converged = fx.iterations < opts.max_iter;
        fit.iterations = fx.iterations;
        for (const auto& g : data) fit.alpha[g.name] = 0.0;
        return fit;
    }

    const auto gh = gauss_hermite(opts.quad_nodes);

    // Warm start from the fixed-effects fit.
    std::array<double, kGlmmFixed> beta = fit_fixed(data, active, 1e-8, 100).beta;
    double log_sigma =
        opts.fix_sigma ? std::log(opts.sigma_value) : std::log(0.5);
    const int dim = opts.fix_sigma ? na : na + 1;

    auto eval = [&](const std::vector<double>& theta, std::vector<double>* grad) {
        std::array<double, kGlmmFixed> b = beta;
        for (int k = 0; k < na; ++k) b[active[k]] = theta[k];
        const double ls = opts.fix_sigma ? log_sigma : theta[na];
        double ll = 0.0;
        std::vector<double> gsum(na + 1, 0.0), g;
        for (const auto& c : data) {
            ll += community_loglik_grad(c, b, ls, gh, active, &g, nullptr);
            for (int k = 0; k <= na; ++k) gsum[k] += g[k];
        }
        if (grad) {
            grad->assign(dim, 0.0);
            for (int k = 0; k < dim; ++k) (*grad)[k] = gsum[k];
        }
        return ll;
    };

    // BFGS ascent on (active betas, log sigma).
    std::vector<double> theta(dim, 0.0);
    for (int k = 0; k < na; ++k) theta[k] = beta[active[k]];
    if (!opts.fix_sigma) theta[na] = log_sigma;

    std::vector<std::vector<double>> hinv(dim, std::vector<double>(dim, 0.0));
    for (int i = 0; i < dim; ++i) hinv[i][i] = 1.0;
    std::vector<double> grad;
    double ll = eval(theta, &grad);
    bool converged = false;
    int iter = 0;
    std::ostringstream trace;
    for (; iter < opts.max_iter; ++iter) {
        trace << "iter " << iter << " loglik " << ll << "\n";
        std::vector<double> dir(dim, 0.0);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) dir[i] += hinv[i][j] * grad[j];
        double slope = 0.0;
        for (int i = 0; i < dim; ++i) slope += dir[i] * grad[i];
        if (slope <= 0.0) {  // reset to steepest ascent
            dir = grad;
            slope = 0.0;
            for (double gv : grad) slope += gv * gv;
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) hinv[i][j] = (i == j) ? 1.0 : 0.0;
        }
        double step = 1.0;
        std::vector<double> theta_new(dim);
        double ll_new = -1e300;
        bool ok = false;
        for (int h = 0; h < 60; ++h) {
            for (int i = 0; i < dim; ++i) theta_new[i] = theta[i] + step * dir[i];
            if (!opts.fix_sigma)
                theta_new[na] = std::clamp(theta_new[na], -12.0, 6.0);
            ll_new = eval(theta_new, nullptr);
            if (std::isfinite(ll_new) && ll_new >= ll + 1e-4 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) {  // no ascent step exists; already stationary
            converged = true;
            break;
        }
        std::vector<double> grad_new;
        eval(theta_new, &grad_new);

        // BFGS inverse update (ascent convention).
        std::vector<double> sv(dim), yv(dim);
        for (int i = 0; i < dim; ++i) {
            sv[i] = theta_new[i] - theta[i];
            yv[i] = grad[i] - grad_new[i];  // = -(g_new - g), minimization form
        }
        double sy = 0.0;
        for (int i = 0; i < dim; ++i) sy += sv[i] * yv[i];
        if (sy > 1e-12) {
            std::vector<double> hy(dim, 0.0);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) hy[i] += hinv[i][j] * yv[j];
            double yhy = 0.0;
            for (int i = 0; i < dim; ++i) yhy += yv[i] * hy[i];
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    hinv[i][j] += (sy + yhy) * sv[i] * sv[j] / (sy * sy) -
                                  (hy[i] * sv[j] + sv[i] * hy[j]) / sy;
        }

        const double rel =
            std::abs(ll_new - ll) / std::max(1.0, std::abs(ll_new));
        theta = theta_new;
        grad = grad_new;
        ll = ll_new;
        if (rel < opts.tol) {
            double gmax = 0.0;
            for (double gv : grad) gmax = std::max(gmax, std::abs(gv));
            if (gmax < 1e-4 * std::max(1.0, std::abs(ll))) {
                converged = true;
                break;
            }
        }
    }
    if (!converged && iter >= opts.max_iter)
        throw std::runtime_error("fit_glmm: no convergence within " +
                                 std::to_string(opts.max_iter) +
                                 " iterations\n" + trace.str());

    for (int k = 0; k < na; ++k) beta[active[k]] = theta[k];
    if (!opts.fix_sigma) log_sigma = theta[na];
    fit.beta = beta;
    fit.sigma_alpha = std::exp(log_sigma);
    fit.loglik = ll;
    fit.converged = true;
    fit.iterations = iter;
    for (const auto& g : data)
        fit.alpha[g.name] = find_mode(g, beta, fit.sigma_alpha);

    // Observed information via central differences of the analytic gradient.
    {
        std::vector<std::vector<double>> info(dim, std::vector<double>(dim, 0.0));
        for (int k = 0; k < dim; ++k) {
            const double h = 1e-5 * (1.0 + std::abs(theta[k]));
            std::vector<double> tp = theta, tm = theta, gp, gm;
            tp[k] += h;
            tm[k] -= h;
            eval(tp, &gp);
            eval(tm, &gm);
            for (int j = 0; j < dim; ++j)
                info[j][k] = -(gp[j] - gm[j]) / (2.0 * h);
        }
        // Symmetrize before inversion.
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) {
                const double v = 0.5 * (info[i][j] + info[j][i]);
                info[i][j] = info[j][i] = v;
            }
        try {
            const auto cov = invert_dense(info);
            for (int k = 0; k < na; ++k)
                fit.se[active[k]] = std::sqrt(std::max(0.0, cov[k][k]));
        } catch (const std::runtime_error&) {
            fit.se.fill(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return fit;
}

std::array<double, 8> predict_cell_means(const GlmmFit& fit) {
    if (!fit.converged)
        throw std::invalid_argument("predict_cell_means: fit did not converge");
    std::array<double, 8> out{};
    int i = 0;
    for (int polsub = 0; polsub < 2; ++polsub)
        for (int polreply = 0; polreply < 2; ++polreply)
            for (int cross = 0; cross < 2; ++cross) {
                const auto x = glmm_design_row(polsub, polreply, cross);
                double eta = 0.0;
                for (int j = 0; j < kGlmmFixed; ++j) eta += fit.beta[j] * x[j];
                out[i++] = sigmoid(eta);
            }
    return out;
}

}  // namespace quantcal
