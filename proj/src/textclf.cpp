#include "quantcal/textclf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace quantcal {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double log1pexp(double z) {
    if (z > 30.0) return z;
    return std::log1p(std::exp(z));
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> toks;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            toks.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) toks.push_back(std::move(cur));
    return toks;
}

std::vector<std::string> ngrams(const std::string& text) {
    const auto toks = tokenize(text);
    std::vector<std::string> out;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i)
        out.push_back(toks[i] + " " + toks[i + 1]);
    for (std::size_t i = 0; i + 2 < toks.size(); ++i)
        out.push_back(toks[i] + " " + toks[i + 1] + " " + toks[i + 2]);
    return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& positives,
                            const std::vector<std::string>& negatives,
                            int min_count) {
    std::unordered_map<std::string, int> counts;
    for (const auto* corp : {&positives, &negatives})
        for (const auto& text : *corp)
            for (auto& g : ngrams(text)) ++counts[g];
    // Sorted insertion keeps ids deterministic across runs.
    std::vector<std::string> kept;
    for (const auto& [g, c] : counts)
        if (c >= min_count) kept.push_back(g);
    std::sort(kept.begin(), kept.end());
    Vocabulary vocab;
    for (auto& g : kept) {
        vocab.ids.emplace(g, vocab.size());
        vocab.names.push_back(std::move(g));
    }
    return vocab;
}

FeatureVector featurize(const std::string& text, const Vocabulary& vocab) {
    FeatureVector fv;
    for (const auto& g : ngrams(text)) {
        auto it = vocab.ids.find(g);
        if (it != vocab.ids.end()) ++fv[it->second];
    }
    return fv;
}

double predict_proba_features(const ProxyModel& model, const FeatureVector& fv) {
    double z = model.bias;
    for (const auto& [id, count] : fv) {
        auto it = model.weights.find(id);
        if (it != model.weights.end()) z += it->second * count;
    }
    return sigmoid(z);
}

double predict_proba(const ProxyModel& model, const std::string& text) {
    return predict_proba_features(model, featurize(text, model.vocab));
}

std::pair<double, std::vector<double>> logistic_loss_and_grad(
    const std::vector<FeatureVector>& x, const std::vector<int>& y,
    const std::vector<double>& dense_w, double bias) {
    const std::size_t n = x.size();
    if (n == 0 || y.size() != n)
        throw std::invalid_argument("logistic_loss_and_grad: bad inputs");
    std::vector<double> grad(dense_w.size() + 1, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = bias;
        for (const auto& [id, c] : x[i]) z += dense_w[id] * c;
        loss += log1pexp(z) - y[i] * z;
        const double r = sigmoid(z) - y[i];
        for (const auto& [id, c] : x[i]) grad[id] += r * c;
        grad.back() += r;
    }
    const double inv = 1.0 / static_cast<double>(n);
    loss *= inv;
    for (double& g : grad) g *= inv;
    return {loss, grad};
}

ProxyModel train_featurized(const std::vector<FeatureVector>& x,
                            const std::vector<int>& y, Vocabulary vocab,
                            const TrainOptions& opts) {
    const std::size_t n = x.size();
    if (n == 0 || y.size() != n)
        throw std::invalid_argument("train: empty or mismatched training set");
    const bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
    const bool has_neg = std::find(y.begin(), y.end(), 0) != y.end();
    if (!has_pos || !has_neg)
        throw std::invalid_argument("train: both classes must be present");

    const int d = vocab.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    // Per-coordinate curvature bound 0.25 * mean(x_j^2).
    std::vector<double> lip(d, 0.0);
    for (const auto& fv : x)
        for (const auto& [id, c] : fv)
            lip[id] += 0.25 * static_cast<double>(c) * c * inv_n;

    std::vector<double> w(d, 0.0);
    double bias = 0.0;
    std::vector<double> eta(n, 0.0);  // cached linear predictor

    auto objective = [&]() {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            obj += log1pexp(eta[i]) - y[i] * eta[i];
        obj *= inv_n;
        for (double wj : w) obj += opts.lambda * std::abs(wj);
        return obj;
    };

    // Inverted index: coordinate -> (row, count)
    std::vector<std::vector<std::pair<std::size_t, int>>> cols(d);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [id, c] : x[i]) cols[id].emplace_back(i, c);

    double prev_obj = objective();
    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        // Bias, unpenalized.
        {
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += sigmoid(eta[i]) - y[i];
            g *= inv_n;
            const double step = g / 0.25;
            bias -= step;
            for (double& e : eta) e -= step;
        }
        for (int j = 0; j < d; ++j) {
            if (cols[j].empty() || lip[j] <= 0.0) continue;
            double g = 0.0;
            for (const auto& [i, c] : cols[j]) g += (sigmoid(eta[i]) - y[i]) * c;
            g *= inv_n;
            const double wj_new =
                soft_threshold(w[j] - g / lip[j], opts.lambda / lip[j]);
            const double delta = wj_new - w[j];
            if (delta != 0.0) {
                for (const auto& [i, c] : cols[j]) eta[i] += delta * c;
                w[j] = wj_new;
            }
        }
        const double obj = objective();
        if (!std::isfinite(obj))
            throw std::runtime_error("train: non-finite objective at epoch " +
                                     std::to_string(epoch));
        if (obj > prev_obj + 1e-12)
            throw std::logic_error("train: objective increased at epoch " +
                                   std::to_string(epoch));
        if (std::abs(prev_obj - obj) <
            opts.tol * std::max(1.0, std::abs(prev_obj)))
            break;
        prev_obj = obj;
    }

    ProxyModel model;
    model.bias = bias;
    model.lambda = opts.lambda;
    model.vocab = std::move(vocab);
    for (int j = 0; j < d; ++j)
        if (w[j] != 0.0) model.weights[j] = w[j];
    return model;
}

ProxyModel train(const std::vector<std::string>& positives,
                 const std::vector<std::string>& negatives,
                 const TrainOptions& opts) {
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("train: both classes must be nonempty");
    Vocabulary vocab = build_vocabulary(positives, negatives, opts.min_count);
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (const auto& t : positives) {
        x.push_back(featurize(t, vocab));
        y.push_back(1);
    }
    for (const auto& t : negatives) {
        x.push_back(featurize(t, vocab));
        y.push_back(0);
    }
    return train_featurized(x, y, std::move(vocab), opts);
}

CvMetrics cross_validate(const std::vector<std::string>& positives,
                         const std::vector<std::string>& negatives, int k,
                         const TrainOptions& opts) {
    if (k < 2) throw std::invalid_argument("cross_validate: k must be >= 2");
    if (static_cast<int>(positives.size()) < k ||
        static_cast<int>(negatives.size()) < k)
        throw std::invalid_argument("cross_validate: each class needs >= k examples");

    std::int64_t correct = 0, total = 0, fp = 0, fn = 0, npos = 0, nneg = 0;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<std::string> tr_pos, tr_neg, te_pos, te_neg;
        for (std::size_t i = 0; i < positives.size(); ++i)
            (static_cast<int>(i % k) == fold ? te_pos : tr_pos).push_back(positives[i]);
        for (std::size_t i = 0; i < negatives.size(); ++i)
            (static_cast<int>(i % k) == fold ? te_neg : tr_neg).push_back(negatives[i]);
        ProxyModel model = train(tr_pos, tr_neg, opts);
        for (const auto& t : te_pos) {
            ++npos;
            ++total;
            if (predict_proba(model, t) > 0.5)
                ++correct;
            else
                ++fn;
        }
        for (const auto& t : te_neg) {
            ++nneg;
            ++total;
            if (predict_proba(model, t) > 0.5)
                ++fp;
            else
                ++correct;
        }
    }
    CvMetrics m;
    m.folds = k;
    m.accuracy = static_cast<double>(correct) / total;
    m.false_positive_rate = nneg ? static_cast<double>(fp) / nneg : 0.0;
    m.false_negative_rate = npos ? static_cast<double>(fn) / npos : 0.0;
    return m;
}

void save_model(std::ostream& out, const ProxyModel& model) {
    out.precision(17);
    out << "bias " << model.bias << "\n";
    for (const auto& [id, wt] : model.weights)
        out << model.vocab.names[id] << "\t" << wt << "\n";
}

ProxyModel load_model(std::istream& in) {
    ProxyModel model;
    std::string line;
    if (!std::getline(in, line) || line.rfind("bias ", 0) != 0)
        throw std::runtime_error("model file: missing bias line");
    model.bias = std::stod(line.substr(5));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("model file: bad line: " + line);
        const std::string gram = line.substr(0, tab);
        const double wt = std::stod(line.substr(tab + 1));
        const int id = model.vocab.size();
        model.vocab.ids.emplace(gram, id);
        model.vocab.names.push_back(gram);
        model.weights[id] = wt;
    }
    return model;
}

}  // namespace quantcal
