#include "quantcal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "quantcal/partisan.hpp"
#include "quantcal/strata.hpp"
#include "quantcal/synth.hpp"
#include "quantcal/textclf.hpp"
#include "quantcal/toxmodel.hpp"

namespace quantcal {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
    if (political_cutoff < 0.0 || political_cutoff > 1.0)
        throw std::invalid_argument("config: political_cutoff outside [0,1]");
    if (calibrator_threshold < 0.0 || calibrator_threshold > 1.0)
        throw std::invalid_argument("config: calibrator_threshold outside [0,1]");
    if (floor < 0) throw std::invalid_argument("config: floor negative");
    if (budget_pol < 10 * floor)
        throw std::invalid_argument("config: budget_pol below 10*floor");
    if (budget_nonpol < 10 * floor)
        throw std::invalid_argument("config: budget_nonpol below 10*floor");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    if (synth_runs < 1) throw std::invalid_argument("config: synth_runs must be >= 1");
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    json j;
    in >> j;
    PipelineConfig cfg;
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        cfg.raw_path = p.value("raw", "");
        cfg.toxicity_path = p.value("toxicity", "");
        cfg.ratings_pol_path = p.value("ratings_pol", "");
        cfg.ratings_nonpol_path = p.value("ratings_nonpol", "");
        cfg.seed_lists_path = p.value("seed_lists", "");
        cfg.synth_spec_path = p.value("synth_spec", "");
    }
    for (const auto& c : j.value("political_communities", json::array()))
        cfg.political_communities.insert(c.get<std::string>());
    if (j.contains("filter")) {
        const auto& f = j["filter"];
        cfg.filter.min_community_comments =
            f.value("min_community_comments", std::int64_t{1000});
        cfg.filter.min_body_chars = f.value("min_body_chars", std::int64_t{50});
        for (const auto& a : f.value("excluded_authors", json::array()))
            cfg.filter.excluded_authors.insert(a.get<std::string>());
        cfg.filter.date_start = f.value("date_start", std::int64_t{0});
        cfg.filter.date_end = f.value("date_end", std::int64_t{1} << 62);
    }
    cfg.political_cutoff = j.value("political_cutoff", 0.25);
    cfg.calibrator_threshold = j.value("calibrator_threshold", 0.0);
    if (j.contains("aggregation"))
        cfg.aggregation = aggregation_from_string(j["aggregation"].get<std::string>());
    cfg.budget_pol = j.value("budget_pol", std::int64_t{2000});
    cfg.budget_nonpol = j.value("budget_nonpol", std::int64_t{8000});
    cfg.floor = j.value("floor", std::int64_t{50});
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    cfg.vocab_min_count = j.value("vocab_min_count", 5);
    cfg.exclude_top_m = j.value("exclude_top_m", std::size_t{10});
    cfg.synth_runs = j.value("synth_runs", 200);
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.threads = j.value("threads", 1);
    cfg.validate();
    return cfg;
}

namespace {

std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Canonical config fingerprint.
std::string config_hash(const PipelineConfig& cfg) {
    std::ostringstream ss;
    ss << cfg.raw_path << "|" << cfg.toxicity_path << "|"
       << cfg.ratings_pol_path << "|" << cfg.ratings_nonpol_path << "|"
       << cfg.seed_lists_path << "|" << cfg.synth_spec_path << "|";
    for (const auto& c : cfg.political_communities) ss << c << ",";
    ss << "|" << cfg.filter.min_community_comments << "|"
       << cfg.filter.min_body_chars << "|";
    for (const auto& a : cfg.filter.excluded_authors) ss << a << ",";
    ss << "|" << cfg.filter.date_start << "|" << cfg.filter.date_end << "|"
       << cfg.political_cutoff << "|" << cfg.calibrator_threshold << "|"
       << to_string(cfg.aggregation) << "|" << cfg.budget_pol << "|"
       << cfg.budget_nonpol << "|" << cfg.floor << "|"
       << (cfg.lambda ? std::to_string(*cfg.lambda) : "cv") << "|"
       << cfg.vocab_min_count << "|" << cfg.exclude_top_m << "|"
       << cfg.synth_runs << "|" << cfg.seed;
    return to_hex(fnv1a(ss.str()));
}

// Which stage produces which workspace artifact.
const std::map<std::string, std::string>& producers() {
    static const std::map<std::string, std::string> map = {
        {"corpus.jsonl", "ingest"},
        {"filter_report.txt", "ingest"},
        {"model.txt", "train-clf"},
        {"cv_metrics.txt", "train-clf"},
        {"scores.csv", "score"},
        {"profile_pol.csv", "stratify"},
        {"profile_nonpol.csv", "stratify"},
        {"plan_pol.csv", "allocate"},
        {"plan_nonpol.csv", "allocate"},
        {"sample_pol.txt", "sample-for-rating"},
        {"sample_nonpol.txt", "sample-for-rating"},
        {"calibrator_pol.csv", "build-calibrators"},
        {"calibrator_nonpol.csv", "build-calibrators"},
        {"estimates.csv", "estimate"},
        {"cumulative.txt", "estimate"},
        {"jsd_pairs.csv", "estimate"},
        {"sweep.csv", "sweep"},
        {"sweep_excluded.csv", "exclude-top"},
        {"excluded_communities.txt", "exclude-top"},
        {"leanings.csv", "leanings"},
        {"cells.csv", "tox-cells"},
        {"glmm_fit.txt", "tox-fit"},
        {"interaction_plot.csv", "tox-fit"},
        {"synth_report.txt", "synth-validate"},
        {"synth_truth.csv", "synth-validate"},
    };
    return map;
}

class Stage {
public:
    Stage(std::string name, const PipelineConfig& cfg, fs::path ws)
        : name_(std::move(name)),
          cfg_(cfg),
          ws_(std::move(ws)),
          cfg_hash_(config_hash(cfg)),
          lock_(ws_ / ".lock") {
        fs::create_directories(ws_);
        if (fs::exists(lock_))
            throw std::runtime_error(name_ + ": workspace locked by another run (" +
                                     lock_.string() + ")");
        std::ofstream(lock_) << name_ << "\n";
    }
    ~Stage() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }

    const PipelineConfig& cfg() const { return cfg_; }
    const std::string& hash() const { return cfg_hash_; }

    fs::path artifact(const std::string& file) {
        const fs::path p = ws_ / file;
        if (!fs::exists(p)) {
            auto it = producers().find(file);
            const std::string hint =
                it != producers().end() ? " (run stage " + it->second + " first)" : "";
            throw std::runtime_error(name_ + ": missing upstream artifact " + file +
                                     hint);
        }
        // Stale-input detection against the producing stage's manifest.
        auto it = producers().find(file);
        if (it != producers().end()) {
            const fs::path mpath = ws_ / (it->second + ".manifest.json");
            if (fs::exists(mpath)) {
                json m = json::parse(read_all(mpath));
                if (m.contains("outputs") && m["outputs"].contains(file)) {
                    const std::string recorded = m["outputs"][file];
                    if (recorded != to_hex(fnv1a(read_all(p))))
                        throw std::runtime_error(
                            name_ + ": stale input " + file +
                            " does not match its producing manifest");
                }
            }
        }
        inputs_[file] = to_hex(fnv1a(read_all(p)));
        return p;
    }

    fs::path external(const std::string& path, const char* what) {
        if (path.empty())
            throw std::runtime_error(name_ + ": config is missing required path " +
                                     what);
        if (!fs::exists(path))
            throw std::runtime_error(name_ + ": input not found: " + path);
        inputs_[path] = to_hex(fnv1a(read_all(path)));
        return path;
    }

    void write(const std::string& file, const std::string& content,
               bool config_header = true) {
        std::ofstream out(ws_ / file, std::ios::binary);
        if (config_header) out << "#config=" << cfg_hash_ << "\n";
        out << content;
        out.close();
        outputs_[file] = to_hex(fnv1a(read_all(ws_ / file)));
    }

    void finish() {
        json m;
        m["stage"] = name_;
        m["config_hash"] = cfg_hash_;
        m["seed"] = cfg_.seed;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        std::ofstream(ws_ / (name_ + ".manifest.json")) << m.dump(2) << "\n";
    }

private:
    std::string name_;
    const PipelineConfig& cfg_;
    fs::path ws_;
    std::string cfg_hash_;
    fs::path lock_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

Corpus load_corpus(const fs::path& p) {
    std::ifstream in(p);
    return read_corpus(in);
}

std::map<std::string, double> load_scores(const fs::path& p) {
    std::ifstream in(p);
    std::map<std::string, double> scores;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("id,", 0) == 0) continue;
        const auto comma = line.rfind(',');
        scores[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    }
    return scores;
}

std::string format_profile(const StrataProfile& prof) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "#total=" << prof.total_count << "\n" << "stratum,value\n";
    for (int k = 0; k < kNumStrata; ++k)
        ss << (k + 1) << "," << prof.weights[k] << "\n";
    return ss.str();
}

StrataProfile load_profile(const fs::path& p) {
    std::ifstream in(p);
    StrataProfile prof;
    prof.weights.assign(kNumStrata, 0.0);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("#total=", 0) == 0) {
            prof.total_count = std::stoll(line.substr(7));
            continue;
        }
        if (line.empty() || line[0] == '#' || line.rfind("stratum", 0) == 0)
            continue;
        const auto comma = line.find(',');
        const int k = std::stoi(line.substr(0, comma));
        prof.weights.at(k - 1) = std::stod(line.substr(comma + 1));
    }
    return prof;
}

AllocationPlan load_plan(const fs::path& p, const PipelineConfig& cfg) {
    std::ifstream in(p);
    AllocationPlan plan;
    plan.counts.assign(kNumStrata, 0);
    plan.floor = cfg.floor;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("stratum", 0) == 0)
            continue;
        const auto comma = line.find(',');
        const int k = std::stoi(line.substr(0, comma));
        plan.counts.at(k - 1) = std::stoll(line.substr(comma + 1));
        plan.budget += plan.counts[k - 1];
    }
    return plan;
}

std::string format_calibrator(const Calibrator& cal) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "stratum,p,s,label\n";
    const std::string label =
        cal.label == CalibratorLabel::political ? "political" : "nonpolitical";
    for (int k = 0; k < kNumStrata; ++k)
        ss << (k + 1) << "," << cal.p[k] << "," << cal.s[k] << "," << label << "\n";
    return ss.str();
}

Calibrator load_calibrator(const fs::path& p) {
    std::ifstream in(p);
    Calibrator cal;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("stratum", 0) == 0)
            continue;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        const int k = std::stoi(field);
        std::getline(ss, field, ',');
        cal.p.at(k - 1) = std::stod(field);
        std::getline(ss, field, ',');
        cal.s.at(k - 1) = std::stod(field);
        std::getline(ss, field, ',');
        cal.label = field == "political" ? CalibratorLabel::political
                                         : CalibratorLabel::nonpolitical;
    }
    return cal;
}

struct EstimateRow {
    std::string community;
    std::int64_t n = 0;
    double diff = 0.0;
    std::string choice;
    double p_subr = 0.0;
};

std::vector<EstimateRow> load_estimates(const fs::path& p) {
    std::ifstream in(p);
    std::vector<EstimateRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("community,", 0) == 0)
            continue;
        std::stringstream ss(line);
        EstimateRow r;
        std::string field;
        std::getline(ss, r.community, ',');
        std::getline(ss, field, ',');
        r.n = std::stoll(field);
        std::getline(ss, field, ',');
        r.diff = std::stod(field);
        std::getline(ss, r.choice, ',');
        std::getline(ss, field, ',');
        r.p_subr = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<SubredditEstimate> estimates_from_rows(const std::vector<EstimateRow>& rows) {
    std::vector<SubredditEstimate> ests;
    for (const auto& r : rows) {
        SubredditEstimate e;
        e.community = r.community;
        e.n_subr = r.n;
        e.diff = r.diff;
        e.calibrator_choice = r.choice == "political"
                                  ? CalibratorLabel::political
                                  : CalibratorLabel::nonpolitical;
        e.p_subr = r.p_subr;
        ests.push_back(std::move(e));
    }
    return ests;
}

std::string format_sweep(const std::vector<SweepPoint>& pts) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "y,cumulative_share,community_count\n";
    for (const auto& pt : pts)
        ss << pt.y << "," << pt.cumulative_share << "," << pt.community_count
           << "\n";
    return ss.str();
}

std::vector<double> default_y_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 100; ++i) grid.push_back(i / 100.0);
    grid.push_back(1.01);  // everything sits below the final threshold
    return grid;
}

SeedLists load_seed_lists(const fs::path& p) {
    std::ifstream in(p);
    SeedLists lists;
    std::string line;
    std::set<std::string>* cur = nullptr;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line == "[left]") {
            cur = &lists.left_communities;
        } else if (line == "[right]") {
            cur = &lists.right_communities;
        } else {
            if (!cur)
                throw std::runtime_error("seed lists: entry before [left]/[right]");
            cur->insert(line);
        }
    }
    return lists;
}

void stage_ingest(Stage& st) {
    const auto raw = st.external(st.cfg().raw_path, "paths.raw");
    std::ifstream in(raw);
    Corpus corpus = ingest(in, st.cfg().filter);
    if (!st.cfg().toxicity_path.empty()) {
        std::ifstream tox(st.external(st.cfg().toxicity_path, "paths.toxicity"));
        attach_toxicity(corpus, tox);
    }
    std::ostringstream body;
    write_corpus(body, corpus);
    st.write("corpus.jsonl", body.str());
    std::ostringstream rep;
    write_filter_report(rep, corpus.report);
    st.write("filter_report.txt", rep.str());
}

void stage_train(Stage& st) {
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    if (st.cfg().political_communities.empty())
        throw std::runtime_error("train-clf: config field political_communities is empty");
    std::vector<std::string> pos, neg;
    for (const auto& rec : corpus.records)
        (st.cfg().political_communities.count(rec.community) ? pos : neg)
            .push_back(rec.body);
    TrainOptions opts;
    opts.min_count = st.cfg().vocab_min_count;
    double best_lambda;
    CvMetrics best_cv{};
    if (st.cfg().lambda) {
        best_lambda = *st.cfg().lambda;
        opts.lambda = best_lambda;
        best_cv = cross_validate(pos, neg, 5, opts);
    } else {
        best_lambda = 0.1;
        double best_acc = -1.0;
        for (double lam : {0.1, 1.0, 10.0}) {
            opts.lambda = lam;
            const auto cv = cross_validate(pos, neg, 5, opts);
            if (cv.accuracy > best_acc) {
                best_acc = cv.accuracy;
                best_lambda = lam;
                best_cv = cv;
            }
        }
    }
    opts.lambda = best_lambda;
    const ProxyModel model = train(pos, neg, opts);
    std::ostringstream m;
    save_model(m, model);
    st.write("model.txt", m.str());
    std::ostringstream cv;
    cv.precision(17);
    cv << "lambda=" << best_lambda << "\naccuracy=" << best_cv.accuracy
       << "\nfalse_positive_rate=" << best_cv.false_positive_rate
       << "\nfalse_negative_rate=" << best_cv.false_negative_rate
       << "\nfolds=" << best_cv.folds
       << "\nnonzero_weights=" << model.nonzero_count() << "\n";
    st.write("cv_metrics.txt", cv.str());
}

void stage_score(Stage& st) {
    std::ifstream min(st.artifact("model.txt"));
    std::string first;
    std::getline(min, first);  // #config header
    ProxyModel model = first.rfind("bias ", 0) == 0
                           ? (min.seekg(0), load_model(min))
                           : load_model(min);
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    std::ostringstream out;
    out.precision(17);
    out << "id,probability\n";
    for (const auto& rec : corpus.records)
        out << rec.id << "," << predict_proba(model, rec.body) << "\n";
    st.write("scores.csv", out.str());
}

void stage_stratify(Stage& st) {
    const auto scores = load_scores(st.artifact("scores.csv"));
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    std::vector<double> pol, nonpol;
    for (const auto& rec : corpus.records) {
        const double s = scores.at(rec.id);
        (st.cfg().political_communities.count(rec.community) ? pol : nonpol)
            .push_back(s);
    }
    st.write("profile_pol.csv", format_profile(profile(pol)));
    st.write("profile_nonpol.csv", format_profile(profile(nonpol)));
}

void stage_allocate(Stage& st) {
    const auto prof_pol = load_profile(st.artifact("profile_pol.csv"));
    const auto prof_nonpol = load_profile(st.artifact("profile_nonpol.csv"));
    auto fmt = [](const AllocationPlan& plan) {
        std::ostringstream ss;
        ss << "stratum,value\n";
        for (int k = 0; k < kNumStrata; ++k)
            ss << (k + 1) << "," << plan.counts[k] << "\n";
        return ss.str();
    };
    st.write("plan_pol.csv",
             fmt(neyman_allocate(st.cfg().budget_pol, prof_pol, st.cfg().floor)));
    st.write("plan_nonpol.csv",
             fmt(neyman_allocate(st.cfg().budget_nonpol, prof_nonpol,
                                 st.cfg().floor)));
}

void stage_sample(Stage& st) {
    const auto scores = load_scores(st.artifact("scores.csv"));
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    const auto plan_pol = load_plan(st.artifact("plan_pol.csv"), st.cfg());
    const auto plan_nonpol = load_plan(st.artifact("plan_nonpol.csv"), st.cfg());
    std::vector<std::string> ids_pol, ids_nonpol;
    std::vector<double> sc_pol, sc_nonpol;
    for (const auto& rec : corpus.records) {
        const bool pol = st.cfg().political_communities.count(rec.community) > 0;
        (pol ? ids_pol : ids_nonpol).push_back(rec.id);
        (pol ? sc_pol : sc_nonpol).push_back(scores.at(rec.id));
    }
    auto fmt = [](const std::vector<std::vector<std::string>>& sample) {
        std::ostringstream ss;
        for (const auto& stratum : sample)
            for (const auto& id : stratum) ss << id << "\n";
        return ss.str();
    };
    st.write("sample_pol.txt",
             fmt(draw_sample(ids_pol, sc_pol, plan_pol, st.cfg().seed + 17)));
    st.write("sample_nonpol.txt",
             fmt(draw_sample(ids_nonpol, sc_nonpol, plan_nonpol,
                             st.cfg().seed + 31)));
}

void stage_build_calibrators(Stage& st) {
    const auto scores = load_scores(st.artifact("scores.csv"));
    auto build = [&](const fs::path& ratings_path, CalibratorLabel label) {
        std::ifstream in(ratings_path);
        const auto records = parse_ratings_csv(in);
        std::array<std::vector<int>, kNumStrata> labels;
        for (const auto& rec : records) {
            auto it = scores.find(rec.comment_id);
            if (it == scores.end())
                throw std::runtime_error("build-calibrators: rated comment " +
                                         rec.comment_id + " has no score");
            labels[stratum_of(it->second) - 1].push_back(
                aggregate(rec, st.cfg().aggregation));
        }
        Calibrator cal;
        cal.label = label;
        for (int k = 0; k < kNumStrata; ++k) {
            if (labels[k].empty()) continue;
            const auto prev = stratum_prevalence(k + 1, labels[k]);
            cal.p[k] = prev.p;
            cal.s[k] = prev.s;
        }
        return cal;
    };
    const auto cal_pol =
        build(st.external(st.cfg().ratings_pol_path, "paths.ratings_pol"),
              CalibratorLabel::political);
    const auto cal_nonpol =
        build(st.external(st.cfg().ratings_nonpol_path, "paths.ratings_nonpol"),
              CalibratorLabel::nonpolitical);
    st.write("calibrator_pol.csv", format_calibrator(cal_pol));
    st.write("calibrator_nonpol.csv", format_calibrator(cal_nonpol));
}

void stage_estimate(Stage& st) {
    const auto scores = load_scores(st.artifact("scores.csv"));
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    const auto d_pol = load_profile(st.artifact("profile_pol.csv"));
    const auto d_nonpol = load_profile(st.artifact("profile_nonpol.csv"));
    const auto cal_pol = load_calibrator(st.artifact("calibrator_pol.csv"));
    const auto cal_nonpol = load_calibrator(st.artifact("calibrator_nonpol.csv"));

    std::map<std::string, std::vector<double>> by_community;
    for (const auto& rec : corpus.records)
        by_community[rec.community].push_back(scores.at(rec.id));

    std::vector<SubredditEstimate> ests;
    std::ostringstream jsd_rows;
    jsd_rows.precision(17);
    jsd_rows << "community,jsd_pol,jsd_nonpol\n";
    for (const auto& [name, sc] : by_community) {
        const auto prof = profile(sc);
        ests.push_back(estimate_subreddit(name, prof, d_pol, d_nonpol, cal_pol,
                                          cal_nonpol,
                                          st.cfg().calibrator_threshold));
        jsd_rows << name << "," << jsd(prof, d_pol) << "," << jsd(prof, d_nonpol)
                 << "\n";
    }
    const auto cum = cumulative_prevalence(ests, cal_pol, cal_nonpol);

    std::ostringstream rows;
    rows.precision(17);
    rows << "community,N,diff,choice,p_subr\n";
    for (const auto& e : ests)
        rows << e.community << "," << e.n_subr << "," << e.diff << ","
             << (e.calibrator_choice == CalibratorLabel::political
                     ? "political"
                     : "nonpolitical")
             << "," << e.p_subr << "\n";
    st.write("estimates.csv", rows.str());

    std::ostringstream cumout;
    cumout.precision(17);
    cumout << "p=" << cum.p << "\ns2_pol=" << cum.s2_pol
           << "\ns2_nonpol=" << cum.s2_nonpol << "\ns2=" << cum.s2
           << "\ns=" << std::sqrt(cum.s2) << "\nN=" << cum.n << "\n";
    st.write("cumulative.txt", cumout.str());
    st.write("jsd_pairs.csv", jsd_rows.str());
}

void stage_sweep(Stage& st) {
    const auto rows = load_estimates(st.artifact("estimates.csv"));
    st.write("sweep.csv",
             format_sweep(threshold_sweep(estimates_from_rows(rows),
                                          default_y_grid())));
}

void stage_exclude_top(Stage& st) {
    const auto rows = load_estimates(st.artifact("estimates.csv"));
    const auto ests = estimates_from_rows(rows);
    const auto excluded =
        top_contributors(ests, st.cfg().exclude_top_m, st.cfg().political_cutoff);
    st.write("sweep_excluded.csv",
             format_sweep(exclude_top(ests, default_y_grid(),
                                      st.cfg().exclude_top_m,
                                      st.cfg().political_cutoff)));
    std::ostringstream ex;
    for (const auto& name : excluded) ex << name << "\n";
    st.write("excluded_communities.txt", ex.str());
}

void stage_leanings(Stage& st) {
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    const SeedLists lists =
        st.cfg().seed_lists_path.empty()
            ? SeedLists::defaults()
            : load_seed_lists(
                  st.external(st.cfg().seed_lists_path, "paths.seed_lists"));
    const auto activity = accumulate(corpus, lists);
    std::ostringstream out;
    out << "user,leaning\n";
    for (const auto& [user, act] : activity)
        out << user << "," << to_string(classify_leaning(act)) << "\n";
    st.write("leanings.csv", out.str());
}

void stage_tox_cells(Stage& st) {
    const Corpus corpus = load_corpus(st.artifact("corpus.jsonl"));
    const auto scores = load_scores(st.artifact("scores.csv"));
    const auto cal_pol = load_calibrator(st.artifact("calibrator_pol.csv"));
    const auto cal_nonpol = load_calibrator(st.artifact("calibrator_nonpol.csv"));
    const auto est_rows = load_estimates(st.artifact("estimates.csv"));

    std::map<std::string, Leaning> leaning;
    {
        std::ifstream in(st.artifact("leanings.csv"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("user,", 0) == 0)
                continue;
            const auto comma = line.rfind(',');
            const std::string who = line.substr(0, comma);
            const std::string val = line.substr(comma + 1);
            leaning[who] = val == "left"    ? Leaning::Left
                           : val == "right" ? Leaning::Right
                                            : Leaning::Unknown;
        }
    }
    std::map<std::string, const EstimateRow*> est_of;
    for (const auto& r : est_rows) est_of[r.community] = &r;

    std::map<std::string, const CommentRecord*> by_id;
    for (const auto& rec : corpus.records) by_id[rec.id] = &rec;

    std::vector<ReplyObservation> replies;
    for (const auto& rec : corpus.records) {
        if (!rec.parent_id || !rec.toxicity) continue;
        auto pit = by_id.find(*rec.parent_id);
        if (pit == by_id.end()) continue;
        const auto la = leaning.find(rec.author);
        const auto lp = leaning.find(pit->second->author);
        if (la == leaning.end() || lp == leaning.end()) continue;
        if (la->second == Leaning::Unknown || lp->second == Leaning::Unknown)
            continue;
        auto eit = est_of.find(rec.community);
        if (eit == est_of.end())
            throw std::runtime_error("tox-cells: no estimate for community " +
                                     rec.community);
        const auto& cal = eit->second->choice == "political" ? cal_pol : cal_nonpol;
        ReplyObservation obs;
        obs.reply_id = rec.id;
        obs.community = rec.community;
        obs.political = cal.p[stratum_of(scores.at(rec.id)) - 1];
        obs.toxicity = *rec.toxicity;
        obs.cross = la->second != lp->second;
        replies.push_back(std::move(obs));
    }
    const auto cells = build_cells(replies);
    std::ostringstream out;
    out.precision(17);
    out << "community,polsub,polreply,cross,N,T\n";
    for (const auto& c : cells) {
        const int polsub =
            est_of.at(c.community)->p_subr >= st.cfg().political_cutoff ? 1 : 0;
        out << c.community << "," << polsub << "," << c.polreply << ","
            << c.cross << "," << c.n << "," << c.t << "\n";
    }
    st.write("cells.csv", out.str());
}

void stage_tox_fit(Stage& st) {
    std::ifstream in(st.artifact("cells.csv"));
    std::vector<CellCounts> cells;
    std::map<std::string, int> polsub;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("community,", 0) == 0)
            continue;
        std::stringstream ss(line);
        std::string field;
        CellCounts c;
        std::getline(ss, c.community, ',');
        std::getline(ss, field, ',');
        polsub[c.community] = std::stoi(field);
        std::getline(ss, field, ',');
        c.polreply = std::stoi(field);
        std::getline(ss, field, ',');
        c.cross = std::stoi(field);
        std::getline(ss, field, ',');
        c.n = std::stod(field);
        std::getline(ss, field, ',');
        c.t = std::stod(field);
        cells.push_back(std::move(c));
    }
    const auto fit = fit_glmm(cells, polsub);
    std::ostringstream out;
    out.precision(10);
    static const char* names[] = {"intercept", "polsub",        "polreply",
                                  "cross",     "polsub:polreply", "polsub:cross",
                                  "polreply:cross", "polsub:polreply:cross"};
    out << "coefficient,estimate,std_error\n";
    for (int j = 0; j < kGlmmFixed; ++j)
        out << names[j] << "," << fit.beta[j] << "," << fit.se[j] << "\n";
    out << "sigma_alpha," << fit.sigma_alpha << ",\n";
    out << "loglik," << fit.loglik << ",\n";
    out << "converged," << (fit.converged ? 1 : 0) << ",\n";
    st.write("glmm_fit.txt", out.str());

    const auto means = predict_cell_means(fit);
    std::ostringstream plot;
    plot.precision(10);
    plot << "polsub,polreply,cross,probability\n";
    int i = 0;
    for (int ps = 0; ps < 2; ++ps)
        for (int pr = 0; pr < 2; ++pr)
            for (int cr = 0; cr < 2; ++cr)
                plot << ps << "," << pr << "," << cr << "," << means[i++] << "\n";
    st.write("interaction_plot.csv", plot.str());
}

void stage_synth_validate(Stage& st) {
    std::ifstream in(st.external(st.cfg().synth_spec_path, "paths.synth_spec"));
    SynthSpec spec = parse_synth_spec(in);
    int covered = 0;
    double sum_corr = 0.0, sum_naive = 0.0;
    std::ostringstream rows;
    rows.precision(10);
    rows << "run,truth,corrected,naive,stderr,covered\n";
    SynthCorpus last;
    for (int run = 0; run < st.cfg().synth_runs; ++run) {
        spec.seed = st.cfg().seed + static_cast<std::uint64_t>(run) * 1000003ULL;
        const auto corpus = generate(spec);
        EstimationConfig ecfg;
        ecfg.budget_pol = st.cfg().budget_pol;
        ecfg.budget_nonpol = st.cfg().budget_nonpol;
        ecfg.floor = st.cfg().floor;
        ecfg.calibrator_threshold = st.cfg().calibrator_threshold;
        ecfg.aggregation = st.cfg().aggregation;
        ecfg.seed = spec.seed + 7;
        ecfg.rater_accuracy = spec.rater_accuracy;
        ecfg.perfect_raters = spec.rater_accuracy >= 1.0;
        const auto rep = evaluate_pipeline(corpus, spec, ecfg);
        covered += rep.ci_covers_truth;
        sum_corr += std::abs(rep.corrected_error);
        sum_naive += std::abs(rep.naive_error);
        rows << run << "," << rep.truth << "," << rep.corrected << ","
             << rep.naive << "," << rep.stderr_corrected << ","
             << (rep.ci_covers_truth ? 1 : 0) << "\n";
        if (run + 1 == st.cfg().synth_runs) last = corpus;
    }
    const double runs = st.cfg().synth_runs;
    std::ostringstream out;
    out.precision(10);
    out << "runs=" << st.cfg().synth_runs << "\ncoverage=" << covered / runs
        << "\nmean_abs_corrected_error=" << sum_corr / runs
        << "\nmean_abs_naive_error=" << sum_naive / runs << "\n"
        << rows.str();
    st.write("synth_report.txt", out.str());
    std::ostringstream truth;
    write_truth_ledger(truth, last.truth);
    st.write("synth_truth.csv", truth.str());
}

void stage_report(Stage& st) {
    const std::string sweep = read_all(st.artifact("sweep.csv"));
    const auto rows = load_estimates(st.artifact("estimates.csv"));
    std::array<std::int64_t, 100> hist{};
    for (const auto& r : rows) {
        int bin = static_cast<int>(r.p_subr * 100.0);
        bin = std::clamp(bin, 0, 99);
        ++hist[bin];
    }
    std::ostringstream h;
    h << "p_percent,community_count\n";
    for (int i = 0; i < 100; ++i) h << i << "," << hist[i] << "\n";
    st.write("report_figure3_curve.csv", sweep.substr(sweep.find('\n') + 1));
    st.write("report_figure3_histogram.csv", h.str());
    const fs::path plot = st.artifact("interaction_plot.csv");
    const std::string plot_data = read_all(plot);
    st.write("report_figure4.csv", plot_data.substr(plot_data.find('\n') + 1));
}

}  // namespace

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "ingest",        "train-clf",  "score",
        "stratify",      "allocate",   "sample-for-rating",
        "build-calibrators", "estimate",   "sweep",
        "exclude-top",   "leanings",   "tox-cells",
        "tox-fit",       "synth-validate", "report"};
    return names;
}

std::string hash_file(const fs::path& path) { return to_hex(fnv1a(read_all(path))); }
std::string hash_string(const std::string& data) { return to_hex(fnv1a(data)); }

void run_stage(const std::string& stage, const PipelineConfig& cfg,
               const fs::path& workspace) {
    cfg.validate();
    Stage st(stage, cfg, workspace);
    if (stage == "ingest")
        stage_ingest(st);
    else if (stage == "train-clf")
        stage_train(st);
    else if (stage == "score")
        stage_score(st);
    else if (stage == "stratify")
        stage_stratify(st);
    else if (stage == "allocate")
        stage_allocate(st);
    else if (stage == "sample-for-rating")
        stage_sample(st);
    else if (stage == "build-calibrators")
        stage_build_calibrators(st);
    else if (stage == "estimate")
        stage_estimate(st);
    else if (stage == "sweep")
        stage_sweep(st);
    else if (stage == "exclude-top")
        stage_exclude_top(st);
    else if (stage == "leanings")
        stage_leanings(st);
    else if (stage == "tox-cells")
        stage_tox_cells(st);
    else if (stage == "tox-fit")
        stage_tox_fit(st);
    else if (stage == "synth-validate")
        stage_synth_validate(st);
    else if (stage == "report")
        stage_report(st);
    else
        throw std::invalid_argument("unknown stage: " + stage);
    st.finish();
}

}  // namespace quantcal
