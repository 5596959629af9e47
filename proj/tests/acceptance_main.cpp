// Acceptance gate: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code 0 iff all pass.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "glmm_oracle.hpp"
#include "pipeline_fixture.hpp"
#include "quantcal/calibrate.hpp"
#include "quantcal/judgments.hpp"
#include "quantcal/pipeline.hpp"
#include "quantcal/strata.hpp"
#include "quantcal/synth.hpp"
#include "quantcal/toxmodel.hpp"

using namespace quantcal;

namespace {

int failures = 0;

void report(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("criterion %d (%s): %s%s%s\n", idx, name, ok ? "PASS" : "FAIL",
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++failures;
}

StrataProfile make_profile(const std::vector<double>& w) {
    StrataProfile p;
    p.weights = w;
    p.total_count = 1000000;
    return p;
}

const std::vector<double> kPolW = {0.004, 0.007, 0.017, 0.047, 0.145,
                                   0.165, 0.129, 0.116, 0.119, 0.252};
const std::vector<double> kNonpolW = {0.148, 0.117, 0.150, 0.199, 0.242,
                                      0.083, 0.026, 0.013, 0.008, 0.012};

// --- 1: Neyman allocation vs the published sampling table -------------------
void criterion1() {
    const auto pol = neyman_allocate(2000, make_profile(kPolW), 50);
    const std::vector<std::int64_t> pol_expected = {50,  50,  50,  107, 346,
                                                    394, 295, 241, 204, 263};
    bool ok = pol.counts == pol_expected;

    const auto nonpol = neyman_allocate(8000, make_profile(kNonpolW), 50);
    const std::vector<std::int64_t> nonpol_expected = {
        615, 797, 1239, 1810, 2296, 788, 237, 107, 61, 50};
    std::int64_t max_dev = 0, total = 0;
    for (int k = 0; k < 10; ++k) {
        max_dev = std::max(max_dev,
                           std::abs(nonpol.counts[k] - nonpol_expected[k]));
        total += nonpol.counts[k];
    }
    ok = ok && max_dev <= 8 && total == 8000;
    report(1, "neyman allocation", ok,
           "political column exact, non-political max deviation " +
               std::to_string(max_dev));
}

// --- 2: per-stratum standard errors to 3 decimals ---------------------------
void criterion2() {
    struct Row { double p; int n; double s; };
    const std::vector<Row> rows = {
        {0.180, 50, 0.054},   {0.160, 50, 0.052},  {0.240, 50, 0.060},
        {0.187, 107, 0.038},  {0.237, 346, 0.023}, {0.475, 394, 0.025},
        {0.695, 295, 0.027},  {0.821, 241, 0.025}, {0.917, 204, 0.019},
        {0.970, 263, 0.011},  {0.021, 615, 0.006}, {0.024, 797, 0.005},
        {0.023, 1239, 0.004}, {0.031, 1810, 0.004}, {0.057, 2296, 0.005},
        {0.189, 788, 0.014},  {0.485, 237, 0.032}, {0.757, 107, 0.041},
        {0.869, 61, 0.043},   {0.980, 50, 0.020}};
    double worst = 0.0;
    for (const auto& r : rows) {
        std::vector<int> labels(r.n, 0);
        const auto ones = static_cast<std::size_t>(std::llround(r.p * r.n));
        for (std::size_t i = 0; i < ones; ++i) labels[i] = 1;
        const auto sp = stratum_prevalence(1, labels);
        worst = std::max(worst, std::abs(sp.s - r.s));
    }
    report(2, "standard errors", worst < 5e-4,
           "max deviation from published values " + std::to_string(worst));
}

// --- 3: JSD of the two strata profiles --------------------------------------
void criterion3() {
    const double d = jsd(make_profile(kPolW), make_profile(kNonpolW));
    report(3, "profile jsd", std::abs(d - 0.40) <= 0.01,
           "jsd = " + std::to_string(d));
}

// --- 4: aggregation strategies on the agreement-pattern fixture -------------
void criterion4() {
    std::vector<RatingRecord> recs;
    int next = 0;
    auto push = [&](int count, int a, int b, int c) {
        for (int i = 0; i < count; ++i)
            recs.push_back({"c" + std::to_string(next++), {a, b, c}});
    };
    push(6685, 0, 0, 0);
    push(1459, 1, 0, 0);
    push(775, 1, 1, 0);
    push(1081, 1, 1, 1);

    auto prevalence = [&](AggregationStrategy s) {
        double pos = 0.0;
        for (const auto& r : recs) pos += aggregate(r, s);
        return 100.0 * pos / recs.size();
    };
    const double strict = prevalence(AggregationStrategy::all_three);
    const double maj = prevalence(AggregationStrategy::majority);
    const double loose = prevalence(AggregationStrategy::any_one);
    const bool ok = std::abs(strict - 10.81) <= 0.01 &&
                    std::abs(maj - 18.56) <= 0.01 &&
                    std::abs(loose - 33.15) <= 0.01 && strict < maj &&
                    maj < loose;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "all_three %.2f%%, majority %.2f%%, any_one %.2f%%",
                  strict, maj, loose);
    report(4, "label aggregation", ok, buf);
}

// --- 5: coverage of the corrected estimator over synthetic corpora ----------
SynthSpec coverage_spec(std::uint64_t seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.rater_accuracy = 1.0;
    spec.score_pol.given_political = {0.01, 0.01, 0.02, 0.03, 0.05,
                                      0.08, 0.10, 0.15, 0.25, 0.30};
    spec.score_pol.given_nonpolitical = {0.05, 0.10, 0.15, 0.20, 0.20,
                                         0.12, 0.08, 0.05, 0.03, 0.02};
    // Deliberately miscalibrated upward for non-political comments, so the
    // naive classify-and-count overestimates.
    spec.score_nonpol.given_political = {0.02, 0.03, 0.05, 0.10, 0.15,
                                         0.20, 0.20, 0.15, 0.07, 0.03};
    spec.score_nonpol.given_nonpolitical = {0.10, 0.15, 0.18, 0.15, 0.12,
                                            0.10, 0.08, 0.06, 0.04, 0.02};
    std::mt19937_64 rng(seed ^ 0xabcdef12ULL);
    std::uniform_int_distribution<std::int64_t> size(1500, 2500);
    std::uniform_real_distribution<double> pol_prev(0.55, 0.75);
    std::uniform_real_distribution<double> nonpol_prev(0.03, 0.10);
    for (int i = 0; i < 10; ++i) {
        SynthCommunity c;
        c.name = "pol" + std::to_string(i);
        c.comment_count = size(rng);
        c.true_prevalence = pol_prev(rng);
        c.group = SynthGroup::pol;
        spec.communities.push_back(c);
    }
    for (int i = 0; i < 40; ++i) {
        SynthCommunity c;
        c.name = "np" + std::to_string(i);
        c.comment_count = size(rng);
        c.true_prevalence = nonpol_prev(rng);
        c.group = SynthGroup::nonpol;
        spec.communities.push_back(c);
    }
    return spec;
}

void criterion5() {
    const auto start = std::chrono::steady_clock::now();
    const int runs = 200;
    int covered = 0;
    double sum_corr = 0.0, sum_naive = 0.0;
    for (int run = 0; run < runs; ++run) {
        const auto spec = coverage_spec(900 + run);
        const auto corpus = generate(spec);
        EstimationConfig cfg;
        cfg.budget_pol = 2000;
        cfg.budget_nonpol = 8000;
        cfg.floor = 50;
        cfg.seed = 5000 + run;
        cfg.perfect_raters = true;
        const auto rep = evaluate_pipeline(corpus, spec, cfg);
        covered += rep.ci_covers_truth;
        sum_corr += std::abs(rep.corrected_error);
        sum_naive += std::abs(rep.naive_error);
    }
    const double coverage = static_cast<double>(covered) / runs;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    const bool ok =
        coverage >= 0.90 && sum_corr / runs < sum_naive / runs && secs < 300.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "coverage %.3f, mean |corrected err| %.5f vs naive %.5f, %.1fs",
                  coverage, sum_corr / runs, sum_naive / runs, secs);
    report(5, "estimator coverage", ok, buf);
}

// --- 6: mixed-model correctness ---------------------------------------------
void criterion6() {
    bool ok = true;
    std::string detail;

    // (a) sigma = 0 equals plain logistic regression on the same cells.
    {
        GlmmTruth truth;
        truth.beta = {-1.2, 0.4, 0.6, -0.3, 0.2, 0.0, 0.1, -0.2};
        truth.sigma_alpha = 0.0;
        truth.replies_per_cell = 400;
        auto [cells, polsub] = generate_glmm_cells(truth, 40, 99);
        GlmmOptions opts;
        opts.fix_sigma = true;
        opts.sigma_value = 0.0;
        const auto fit = fit_glmm(cells, polsub, opts);
        const auto oracle = qc_test::irls_oracle(cells, polsub);
        double dmax = 0.0;
        for (int j = 0; j < kGlmmFixed; ++j)
            dmax = std::max(dmax, std::abs(fit.beta[j] - oracle[j]));
        const bool sub = fit.converged && dmax < 1e-3;
        ok = ok && sub;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "a:%s(%.1e)", sub ? "ok" : "FAIL", dmax);
        detail += buf;
    }

    // (b) simulation recovery: each beta within 3 SE in >= 95% of runs.
    {
        GlmmTruth truth;
        truth.beta = {-2.0, 0.0, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0};
        truth.sigma_alpha = 0.3;
        truth.replies_per_cell = 500;
        const int reps = 100;
        std::array<int, kGlmmFixed> within{};
        int converged = 0;
        for (int rep = 0; rep < reps; ++rep) {
            auto [cells, polsub] =
                generate_glmm_cells(truth, 200, 7000 + rep);
            const auto fit = fit_glmm(cells, polsub);
            if (!fit.converged) continue;
            ++converged;
            for (int j = 0; j < kGlmmFixed; ++j)
                if (std::abs(fit.beta[j] - truth.beta[j]) <= 3.0 * fit.se[j])
                    ++within[j];
        }
        bool sub = converged == reps;
        double worst = 1.0;
        for (int j = 0; j < kGlmmFixed; ++j) {
            const double rate = static_cast<double>(within[j]) / reps;
            worst = std::min(worst, rate);
            sub = sub && rate >= 0.95;
        }
        ok = ok && sub;
        char buf[48];
        std::snprintf(buf, sizeof(buf), " b:%s(min %.2f)", sub ? "ok" : "FAIL",
                      worst);
        detail += buf;
    }

    // (c) analytic gradient vs central finite differences, 1e-5 relative.
    {
        GlmmTruth truth;
        truth.beta = {-1.5, 0.3, 0.7, 0.2, -0.4, 0.1, 0.0, 0.2};
        truth.sigma_alpha = 0.4;
        truth.replies_per_cell = 200;
        auto [cells, polsub] = generate_glmm_cells(truth, 12, 21);
        const std::array<double, kGlmmFixed> beta = {-1.3, 0.25, 0.6, 0.15,
                                                     -0.3, 0.05, 0.02, 0.1};
        const double ls = std::log(0.35);
        const auto [ll, grad] = glmm_loglik_and_grad(cells, polsub, beta, ls);
        const double h = 1e-5;
        double worst = 0.0;
        for (int j = 0; j <= kGlmmFixed; ++j) {
            auto bp = beta, bm = beta;
            double lp = ls, lm = ls;
            if (j < kGlmmFixed) {
                bp[j] += h;
                bm[j] -= h;
            } else {
                lp += h;
                lm -= h;
            }
            const double fd =
                (glmm_loglik_and_grad(cells, polsub, bp, lp).first -
                 glmm_loglik_and_grad(cells, polsub, bm, lm).first) /
                (2 * h);
            worst = std::max(worst, std::abs(grad[j] - fd) /
                                        std::max(1.0, std::abs(fd)));
        }
        const bool sub = worst <= 1e-5;
        ok = ok && sub;
        char buf[48];
        std::snprintf(buf, sizeof(buf), " c:%s(%.1e)", sub ? "ok" : "FAIL",
                      worst);
        detail += buf;
    }

    // (d) intercept-only closed form.
    {
        std::vector<CellCounts> cells;
        std::map<std::string, int> polsub;
        for (int i = 0; i < 4; ++i) {
            CellCounts c;
            c.community = "c" + std::to_string(i);
            c.n = 100.0;
            c.t = 25.0;
            cells.push_back(c);
            polsub[c.community] = 0;
        }
        GlmmOptions opts;
        opts.fix_sigma = true;
        opts.sigma_value = 0.0;
        const auto fit = fit_glmm(cells, polsub, opts);
        const bool sub = std::abs(fit.beta[0] - (-1.0986)) <= 1e-3;
        ok = ok && sub;
        char buf[48];
        std::snprintf(buf, sizeof(buf), " d:%s(%.4f)", sub ? "ok" : "FAIL",
                      fit.beta[0]);
        detail += buf;
    }

    report(6, "glmm correctness", ok, detail);
}

// --- 7: TP/TNP conservation on a 10,000-reply fixture -----------------------
void criterion7() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> comm(0, 19);
    std::bernoulli_distribution coin(0.5);
    std::vector<ReplyObservation> replies;
    double tox_total = 0.0;
    for (int i = 0; i < 10000; ++i) {
        ReplyObservation r;
        r.reply_id = "r" + std::to_string(i);
        r.community = "c" + std::to_string(comm(rng));
        r.political = u(rng);
        r.toxicity = u(rng);
        r.cross = coin(rng);
        tox_total += r.toxicity;
        replies.push_back(std::move(r));
    }
    const auto cells = build_cells(replies);
    double n_sum = 0.0, t_sum = 0.0;
    std::map<std::tuple<std::string, int, int>, std::pair<double, double>> oracle;
    for (const auto& r : replies) {
        auto [tp, tnp] = tp_tnp(r.toxicity, r.political);
        auto& pol = oracle[{r.community, 1, r.cross ? 1 : 0}];
        pol.first += r.political;
        pol.second += tp;
        auto& non = oracle[{r.community, 0, r.cross ? 1 : 0}];
        non.first += 1.0 - r.political;
        non.second += tnp;
    }
    bool cells_match = true;
    for (const auto& c : cells) {
        n_sum += c.n;
        t_sum += c.t;
        const auto it = oracle.find({c.community, c.polreply, c.cross});
        if (it == oracle.end() ||
            std::abs(c.n - it->second.first) > 1e-9 ||
            std::abs(c.t - it->second.second) > 1e-9)
            cells_match = false;
    }
    const bool ok = std::abs(n_sum - 10000.0) <= 1e-9 &&
                    std::abs(t_sum - tox_total) <= 1e-9 && cells_match;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "|dN| %.2e, |dT| %.2e, oracle %s",
                  std::abs(n_sum - 10000.0), std::abs(t_sum - tox_total),
                  cells_match ? "ok" : "FAIL");
    report(7, "cell conservation", ok, buf);
}

// --- 8: sweep monotonicity ---------------------------------------------------
void criterion8() {
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> size(50, 50000);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SubredditEstimate> ests;
        const int m = 2 + trial % 40;
        for (int i = 0; i < m; ++i) {
            SubredditEstimate e;
            e.community = "s" + std::to_string(i);
            e.p_subr = u(rng);
            e.n_subr = size(rng);
            ests.push_back(std::move(e));
        }
        std::vector<double> grid;
        for (int i = 1; i <= 100; ++i) grid.push_back(i / 100.0);
        grid.push_back(1.01);
        const auto sweep = threshold_sweep(ests, grid);
        for (std::size_t i = 1; i < sweep.size(); ++i)
            ok = ok &&
                 sweep[i].cumulative_share >= sweep[i - 1].cumulative_share;
        ok = ok && std::abs(sweep.back().cumulative_share - 1.0) == 0.0;
    }
    report(8, "sweep monotonicity", ok,
           "non-decreasing and terminal share exactly 1.0 on 50 fixtures");
}

// --- 9: end-to-end determinism ----------------------------------------------
void criterion9() {
    qc_test::PipelineFixture fx("acceptance");
    const auto cfg = load_config(fx.dir / "config.json");
    const std::filesystem::path ws_a = fx.dir / "ws_a";
    const std::filesystem::path ws_b = fx.dir / "ws_b";
    qc_test::run_all_stages(cfg, ws_a);
    qc_test::run_all_stages(cfg, ws_b);
    bool ok = true;
    int files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(ws_a)) {
        const auto name = entry.path().filename().string();
        ok = ok && qc_test::slurp(entry.path()) == qc_test::slurp(ws_b / name);
        ++files;
    }
    ok = ok && files > 20;
    report(9, "pipeline determinism", ok,
           std::to_string(files) + " artifacts byte-identical across replays");
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    if (failures) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
