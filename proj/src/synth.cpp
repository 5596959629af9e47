#include "quantcal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace quantcal {

using nlohmann::json;

namespace {

void check_histogram(const std::array<double, kNumStrata>& h, const char* what) {
    double sum = 0.0;
    for (double v : h) {
        if (!(v >= 0.0))
            throw std::invalid_argument(std::string("synth: negative mass in ") + what);
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument(std::string("synth: histogram does not sum to 1: ") + what);
}

int draw_bin(const std::array<double, kNumStrata>& h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng);
    for (int k = 0; k < kNumStrata; ++k) {
        r -= h[k];
        if (r < 0.0) return k;
    }
    return kNumStrata - 1;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

SynthCorpus generate(const SynthSpec& spec) {
    if (spec.communities.empty())
        throw std::invalid_argument("synth: no communities in spec");
    check_histogram(spec.score_pol.given_political, "score_pol.given_political");
    check_histogram(spec.score_pol.given_nonpolitical, "score_pol.given_nonpolitical");
    check_histogram(spec.score_nonpol.given_political, "score_nonpol.given_political");
    check_histogram(spec.score_nonpol.given_nonpolitical, "score_nonpol.given_nonpolitical");

    SynthCorpus out;
    std::int64_t total_pol = 0;
    for (std::size_t ci = 0; ci < spec.communities.size(); ++ci) {
        const auto& comm = spec.communities[ci];
        if (comm.comment_count <= 0)
            throw std::invalid_argument("synth: comment_count must be > 0");
        if (comm.true_prevalence < 0.0 || comm.true_prevalence > 1.0)
            throw std::invalid_argument("synth: prevalence outside [0,1]");
        // Per-community derived seed so generation order is irrelevant.
        std::mt19937_64 rng(spec.seed ^ (0x9e3779b97f4a7c15ULL * (ci + 1)));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const auto& model =
            comm.group == SynthGroup::pol ? spec.score_pol : spec.score_nonpol;
        std::int64_t pol_here = 0;
        for (std::int64_t i = 0; i < comm.comment_count; ++i) {
            SynthComment c;
            c.id = comm.name + "-" + std::to_string(i);
            c.community = comm.name;
            c.political = u(rng) < comm.true_prevalence;
            pol_here += c.political;
            const auto& hist =
                c.political ? model.given_political : model.given_nonpolitical;
            const int bin = draw_bin(hist, rng);
            double frac = u(rng);
            if (frac >= 1.0) frac = 0.0;
            c.score = (bin + frac) / 10.0;
            out.comments.push_back(std::move(c));
        }
        out.truth.community_prevalence[comm.name] =
            static_cast<double>(pol_here) / comm.comment_count;
        out.truth.total_comments += comm.comment_count;
        total_pol += pol_here;
    }
    out.truth.cumulative_prevalence =
        static_cast<double>(total_pol) / out.truth.total_comments;
    return out;
}

std::vector<RatingRecord> simulate_ratings(const std::vector<SynthComment>& sample,
                                           double rater_accuracy,
                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<RatingRecord> out;
    out.reserve(sample.size());
    for (const auto& c : sample) {
        RatingRecord rec;
        rec.comment_id = c.id;
        for (int r = 0; r < 3; ++r) {
            const bool correct = u(rng) < rater_accuracy;
            rec.ratings[r] = (c.political == correct) ? 1 : 0;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::pair<std::vector<CellCounts>, std::map<std::string, int>>
generate_glmm_cells(const GlmmTruth& truth, int communities, std::uint64_t seed) {
    if (communities < 2)
        throw std::invalid_argument("generate_glmm_cells: need >= 2 communities");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<CellCounts> cells;
    std::map<std::string, int> polsub;
    for (int s = 0; s < communities; ++s) {
        const std::string name = "c" + std::to_string(s);
        const int pol = s % 2;  // half political, half not
        polsub[name] = pol;
        const double alpha = truth.sigma_alpha * normal(rng);
        for (int polreply = 0; polreply < 2; ++polreply)
            for (int cross = 0; cross < 2; ++cross) {
                const auto x = glmm_design_row(pol, polreply, cross);
                double eta = alpha;
                for (int j = 0; j < kGlmmFixed; ++j) eta += truth.beta[j] * x[j];
                const double p = sigmoid(eta);
                std::binomial_distribution<std::int64_t> binom(
                    truth.replies_per_cell, p);
                CellCounts c;
                c.community = name;
                c.polreply = polreply;
                c.cross = cross;
                c.n = static_cast<double>(truth.replies_per_cell);
                c.t = static_cast<double>(binom(rng));
                cells.push_back(std::move(c));
            }
    }
    return {std::move(cells), std::move(polsub)};
}

EstimationRun run_estimation(const SynthCorpus& corpus, const SynthSpec& spec,
                             const EstimationConfig& cfg) {
    // Pooled scores per group and per community.
    std::vector<double> scores_pol, scores_nonpol;
    std::vector<std::string> ids_pol, ids_nonpol;
    std::map<std::string, SynthGroup> group_of;
    for (const auto& c : spec.communities) group_of[c.name] = c.group;
    std::map<std::string, std::vector<double>> by_community;
    std::map<std::string, const SynthComment*> by_id;
    for (const auto& c : corpus.comments) {
        by_community[c.community].push_back(c.score);
        by_id[c.id] = &c;
        if (group_of.at(c.community) == SynthGroup::pol) {
            scores_pol.push_back(c.score);
            ids_pol.push_back(c.id);
        } else {
            scores_nonpol.push_back(c.score);
            ids_nonpol.push_back(c.id);
        }
    }
    if (scores_pol.empty() || scores_nonpol.empty())
        throw std::invalid_argument("run_estimation: both groups must be populated");

    const StrataProfile d_pol = profile(scores_pol);
    const StrataProfile d_nonpol = profile(scores_nonpol);

    EstimationRun run;
    auto build_calibrator = [&](const std::vector<std::string>& ids,
                                const std::vector<double>& scores,
                                const StrataProfile& prof, std::int64_t budget,
                                CalibratorLabel label, std::uint64_t seed) {
        const auto plan = neyman_allocate(budget, prof, cfg.floor);
        const auto sample = draw_sample(ids, scores, plan, seed);
        Calibrator cal;
        cal.label = label;
        for (int k = 0; k < kNumStrata; ++k) {
            if (sample[k].empty()) {
                cal.p[k] = 0.0;
                cal.s[k] = 0.0;
                continue;
            }
            std::vector<SynthComment> drawn;
            for (const auto& id : sample[k]) drawn.push_back(*by_id.at(id));
            std::vector<int> labels;
            if (cfg.perfect_raters) {
                for (const auto& c : drawn) labels.push_back(c.political ? 1 : 0);
            } else {
                const auto ratings = simulate_ratings(
                    drawn, cfg.rater_accuracy, seed ^ 0xabcdef1234567ULL);
                for (const auto& r : ratings)
                    labels.push_back(aggregate(r, cfg.aggregation));
            }
            const auto prev = stratum_prevalence(k + 1, labels);
            cal.p[k] = prev.p;
            cal.s[k] = prev.s;
        }
        return cal;
    };

    run.cal_pol = build_calibrator(ids_pol, scores_pol, d_pol, cfg.budget_pol,
                                   CalibratorLabel::political, cfg.seed + 17);
    run.cal_nonpol =
        build_calibrator(ids_nonpol, scores_nonpol, d_nonpol, cfg.budget_nonpol,
                         CalibratorLabel::nonpolitical, cfg.seed + 31);

    for (const auto& [name, scores] : by_community) {
        const auto prof = profile(scores);
        run.estimates.push_back(estimate_subreddit(name, prof, d_pol, d_nonpol,
                                                   run.cal_pol, run.cal_nonpol,
                                                   cfg.calibrator_threshold));
    }
    run.cumulative =
        cumulative_prevalence(run.estimates, run.cal_pol, run.cal_nonpol);

    std::int64_t above = 0;
    for (const auto& c : corpus.comments) above += c.score > 0.5;
    run.naive_estimate =
        static_cast<double>(above) / static_cast<double>(corpus.comments.size());
    return run;
}

PipelineReport evaluate_pipeline(const SynthCorpus& corpus, const SynthSpec& spec,
                                 const EstimationConfig& cfg) {
    const auto run = run_estimation(corpus, spec, cfg);
    PipelineReport rep;
    rep.truth = corpus.truth.cumulative_prevalence;
    rep.corrected = run.cumulative.p;
    rep.naive = run.naive_estimate;
    rep.corrected_error = rep.corrected - rep.truth;
    rep.naive_error = rep.naive - rep.truth;
    rep.stderr_corrected = std::sqrt(run.cumulative.s2);
    rep.ci_covers_truth =
        std::abs(rep.corrected_error) <= 1.96 * rep.stderr_corrected;
    return rep;
}

SynthSpec parse_synth_spec(std::istream& in) {
    json j;
    in >> j;
    SynthSpec spec;
    spec.seed = j.value("seed", 1ULL);
    spec.rater_accuracy = j.value("rater_accuracy", 0.9);
    auto read_hist = [](const json& arr) {
        if (!arr.is_array() || arr.size() != kNumStrata)
            throw std::runtime_error("synth spec: histogram must have 10 bins");
        std::array<double, kNumStrata> h{};
        for (int k = 0; k < kNumStrata; ++k) h[k] = arr[k].get<double>();
        return h;
    };
    spec.score_pol.given_political = read_hist(j.at("score_pol").at("given_political"));
    spec.score_pol.given_nonpolitical =
        read_hist(j.at("score_pol").at("given_nonpolitical"));
    spec.score_nonpol.given_political =
        read_hist(j.at("score_nonpol").at("given_political"));
    spec.score_nonpol.given_nonpolitical =
        read_hist(j.at("score_nonpol").at("given_nonpolitical"));
    for (const auto& c : j.at("communities")) {
        SynthCommunity comm;
        comm.name = c.at("name").get<std::string>();
        comm.comment_count = c.at("comment_count").get<std::int64_t>();
        comm.true_prevalence = c.at("true_prevalence").get<double>();
        const std::string g = c.at("group").get<std::string>();
        if (g == "pol")
            comm.group = SynthGroup::pol;
        else if (g == "nonpol")
            comm.group = SynthGroup::nonpol;
        else
            throw std::runtime_error("synth spec: group must be pol or nonpol");
        spec.communities.push_back(std::move(comm));
    }
    if (j.contains("glmm_truth")) {
        GlmmTruth t;
        const auto& gt = j["glmm_truth"];
        const auto& b = gt.at("beta");
        if (!b.is_array() || b.size() != kGlmmFixed)
            throw std::runtime_error("synth spec: beta must have 8 entries");
        for (int k = 0; k < kGlmmFixed; ++k) t.beta[k] = b[k].get<double>();
        t.sigma_alpha = gt.at("sigma_alpha").get<double>();
        t.replies_per_cell = gt.value("replies_per_cell", std::int64_t{500});
        spec.glmm_truth = t;
    }
    return spec;
}

void write_truth_ledger(std::ostream& out, const TruthLedger& truth) {
    out << "community,true_prevalence\n";
    out.precision(17);
    for (const auto& [name, p] : truth.community_prevalence)
        out << name << "," << p << "\n";
    out << "__cumulative__," << truth.cumulative_prevalence << "\n";
}

}  // namespace quantcal
