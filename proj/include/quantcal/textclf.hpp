#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace quantcal {

// Sparse n-gram count vector, keyed by dense vocabulary id.
using FeatureVector = std::map<int, int>;

struct Vocabulary {
    std::unordered_map<std::string, int> ids;
    std::vector<std::string> names;  // id -> n-gram

    int size() const { return static_cast<int>(names.size()); }
};

// Lowercase tokens split on non-alphanumeric runs.
std::vector<std::string> tokenize(const std::string& text);

// Space-joined word bigrams and trigrams. Fewer than 2 tokens yields none.
std::vector<std::string> ngrams(const std::string& text);

// Vocabulary over both corpora; n-grams seen fewer than min_count times
// in total are dropped.
Vocabulary build_vocabulary(const std::vector<std::string>& positives,
                            const std::vector<std::string>& negatives,
                            int min_count = 5);

FeatureVector featurize(const std::string& text, const Vocabulary& vocab);

struct ProxyModel {
    std::map<int, double> weights;  // sparse, L1-induced
    double bias = 0.0;
    Vocabulary vocab;
    double lambda = 1.0;

    int nonzero_count() const { return static_cast<int>(weights.size()); }
};

struct CvMetrics {
    double accuracy = 0.0;
    double false_positive_rate = 0.0;
    double false_negative_rate = 0.0;
    int folds = 0;
};

struct TrainOptions {
    double lambda = 1.0;
    int max_epochs = 200;
    double tol = 1e-6;  // relative objective change
    int min_count = 5;  // vocabulary pruning threshold
};

// L1-penalized logistic regression by cyclic coordinate descent with
// soft-thresholding. Objective is mean logistic loss + lambda * ||w||_1.
// Positives are labeled 1. Throws on single-class input or non-finite loss.
ProxyModel train(const std::vector<std::string>& positives,
                 const std::vector<std::string>& negatives,
                 const TrainOptions& opts = {});

// Featurized variant used internally and by cross-validation.
ProxyModel train_featurized(const std::vector<FeatureVector>& x,
                            const std::vector<int>& y, Vocabulary vocab,
                            const TrainOptions& opts);

double predict_proba(const ProxyModel& model, const std::string& text);
double predict_proba_features(const ProxyModel& model, const FeatureVector& fv);

// Mean unpenalized logistic loss and its gradient; grad.back() is the bias
// component, the rest follow the dense weight layout.
std::pair<double, std::vector<double>> logistic_loss_and_grad(
    const std::vector<FeatureVector>& x, const std::vector<int>& y,
    const std::vector<double>& dense_w, double bias);

// Stratified k-fold cross-validation with a 0.5 decision threshold.
CvMetrics cross_validate(const std::vector<std::string>& positives,
                         const std::vector<std::string>& negatives, int k = 5,
                         const TrainOptions& opts = {});

void save_model(std::ostream& out, const ProxyModel& model);
ProxyModel load_model(std::istream& in);

}  // namespace quantcal
