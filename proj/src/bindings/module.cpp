// Python bindings for the main pipeline operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "quantcal/calibrate.hpp"
#include "quantcal/judgments.hpp"
#include "quantcal/partisan.hpp"
#include "quantcal/strata.hpp"
#include "quantcal/synth.hpp"
#include "quantcal/textclf.hpp"
#include "quantcal/toxmodel.hpp"

namespace py = pybind11;
using namespace quantcal;

namespace {

StrataProfile profile_from_weights(const std::vector<double>& weights,
                                   std::int64_t total) {
    StrataProfile p;
    p.weights = weights;
    p.total_count = total;
    if (!p.valid()) throw std::invalid_argument("invalid strata profile");
    return p;
}

Calibrator make_calibrator(const std::vector<double>& p,
                           const std::vector<double>& s,
                           const std::string& label) {
    if (p.size() != kNumStrata || s.size() != kNumStrata)
        throw std::invalid_argument("calibrator needs 10 forecasts and errors");
    Calibrator c;
    std::copy(p.begin(), p.end(), c.p.begin());
    std::copy(s.begin(), s.end(), c.s.begin());
    c.label = label == "political" ? CalibratorLabel::political
                                   : CalibratorLabel::nonpolitical;
    return c;
}

}  // namespace

PYBIND11_MODULE(_quantcal, m) {
    m.doc() = "Calibrated prevalence estimation and cross-partisan toxicity "
              "modeling primitives";

    py::class_<StrataProfile>(m, "StrataProfile")
        .def(py::init(&profile_from_weights), py::arg("weights"),
             py::arg("total_count") = 0)
        .def_readonly("weights", &StrataProfile::weights)
        .def_readonly("total_count", &StrataProfile::total_count);

    m.def("stratum_of", &stratum_of, py::arg("p"));
    m.def("profile", &profile, py::arg("scores"));
    m.def("midpoint_sd", &midpoint_sd, py::arg("k"));
    m.def(
        "neyman_allocate",
        [](std::int64_t n, const StrataProfile& w, std::int64_t floor) {
            return neyman_allocate(n, w, floor).counts;
        },
        py::arg("n"), py::arg("profile"), py::arg("floor") = 50);

    m.def("jsd", &jsd, py::arg("p"), py::arg("q"));
    m.def(
        "select_calibrator",
        [](const StrataProfile& d, const StrataProfile& dp,
           const StrataProfile& dn, double t) {
            auto [choice, diff] = select_calibrator(d, dp, dn, t);
            return py::make_tuple(
                choice == CalibratorLabel::political ? "political" : "nonpolitical",
                diff);
        },
        py::arg("d_subr"), py::arg("d_pol"), py::arg("d_nonpol"),
        py::arg("threshold") = 0.0);
    m.def(
        "subreddit_prevalence",
        [](const StrataProfile& prof, const std::vector<double>& p) {
            return subreddit_prevalence(prof, make_calibrator(
                                                  p, std::vector<double>(10, 0.0),
                                                  "political"));
        },
        py::arg("profile"), py::arg("forecasts"));

    m.def(
        "aggregate",
        [](const std::string& id, const std::vector<int>& ratings,
           const std::string& strategy) {
            if (ratings.size() != 3)
                throw std::invalid_argument("exactly 3 ratings required");
            RatingRecord rec{id, {ratings[0], ratings[1], ratings[2]}};
            return aggregate(rec, aggregation_from_string(strategy));
        },
        py::arg("comment_id"), py::arg("ratings"), py::arg("strategy"));
    m.def(
        "krippendorff_alpha",
        [](const std::vector<std::vector<int>>& ratings) {
            std::vector<RatingRecord> recs;
            for (std::size_t i = 0; i < ratings.size(); ++i) {
                if (ratings[i].size() != 3)
                    throw std::invalid_argument("exactly 3 ratings per record");
                recs.push_back({std::to_string(i),
                                {ratings[i][0], ratings[i][1], ratings[i][2]}});
            }
            return krippendorff_alpha(recs);
        },
        py::arg("ratings"));

    m.def("tp_tnp", &tp_tnp, py::arg("toxicity"), py::arg("political"));

    m.def("tokenize", &tokenize, py::arg("text"));
    m.def("ngrams", &ngrams, py::arg("text"));

    py::class_<ProxyModel>(m, "ProxyModel")
        .def_readonly("bias", &ProxyModel::bias)
        .def("nonzero_count", &ProxyModel::nonzero_count);
    m.def(
        "train_classifier",
        [](const std::vector<std::string>& pos,
           const std::vector<std::string>& neg, double lam, int min_count) {
            TrainOptions opts;
            opts.lambda = lam;
            opts.min_count = min_count;
            return train(pos, neg, opts);
        },
        py::arg("positives"), py::arg("negatives"), py::arg("lam") = 1.0,
        py::arg("min_count") = 5);
    m.def("predict_proba", &predict_proba, py::arg("model"), py::arg("text"));

    py::class_<GlmmFit>(m, "GlmmFit")
        .def_property_readonly(
            "beta",
            [](const GlmmFit& f) {
                return std::vector<double>(f.beta.begin(), f.beta.end());
            })
        .def_property_readonly(
            "se",
            [](const GlmmFit& f) {
                return std::vector<double>(f.se.begin(), f.se.end());
            })
        .def_readonly("sigma_alpha", &GlmmFit::sigma_alpha)
        .def_readonly("loglik", &GlmmFit::loglik)
        .def_readonly("converged", &GlmmFit::converged);
    m.def(
        "fit_glmm",
        [](const std::vector<py::tuple>& cell_rows,
           const std::map<std::string, int>& polsub, int quad_nodes) {
            std::vector<CellCounts> cells;
            for (const auto& row : cell_rows) {
                CellCounts c;
                c.community = row[0].cast<std::string>();
                c.polreply = row[1].cast<int>();
                c.cross = row[2].cast<int>();
                c.n = row[3].cast<double>();
                c.t = row[4].cast<double>();
                cells.push_back(std::move(c));
            }
            GlmmOptions opts;
            opts.quad_nodes = quad_nodes;
            return fit_glmm(cells, polsub, opts);
        },
        py::arg("cells"), py::arg("polsub"), py::arg("quad_nodes") = 21);
    m.def(
        "predict_cell_means",
        [](const GlmmFit& fit) {
            const auto a = predict_cell_means(fit);
            return std::vector<double>(a.begin(), a.end());
        },
        py::arg("fit"));

    m.def(
        "classify_leaning",
        [](std::int64_t left_n, std::int64_t right_n,
           std::optional<double> left_mean, std::optional<double> right_mean) {
            UserActivity a;
            a.left_comments = left_n;
            a.right_comments = right_n;
            a.left_mean_karma = left_mean;
            a.right_mean_karma = right_mean;
            return to_string(classify_leaning(a));
        },
        py::arg("left_comments"), py::arg("right_comments"),
        py::arg("left_mean_karma") = std::nullopt,
        py::arg("right_mean_karma") = std::nullopt);
}
