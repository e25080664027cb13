#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "engae/io.hpp"
#include "engae/model.hpp"

namespace engae {

enum class LossKind { mse, bce, weighted_bce };

LossKind loss_from_name(const std::string& s);
std::string loss_name(LossKind l);

struct TrainConfig {
    double lr = 1e-3;
    double decay = 0.99;  // per-epoch learning-rate factor
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 7;
    LossKind loss = LossKind::mse;
    double weight_pos = 0.0;  // 0 = derive from the class counts

    void validate() const;
};

struct ScoreEntry {
    std::string id;
    double score = 0.0;
    Label label = Label::engaged;
};

using ScoreSet = std::vector<ScoreEntry>;

// Autoencoder training on engaged samples only; a disengaged sample in the
// training set is a protocol violation. Returns the per-epoch mean MSE.
std::vector<double> train_ae(Model& model, const std::vector<LoadedSample>& samples,
                             const TrainConfig& cfg);

// Classifier training; requires both classes. Returns per-epoch mean loss.
// For weighted_bce with weight_pos == 0 the weight is N_neg / N_pos.
std::vector<double> train_bc(Model& model, const std::vector<LoadedSample>& samples,
                             const TrainConfig& cfg);

// Higher score = more disengaged: reconstruction MSE for AEs, predicted
// disengagement probability for classifiers.
ScoreSet score(Model& model, const std::vector<LoadedSample>& samples);

enum class ThresholdMethod { max, percentile, mean_plus_k_std };

struct ThresholdSpec {
    ThresholdMethod method = ThresholdMethod::percentile;
    double param = 99.0;  // percentile q, or k for mean_plus_k_std

    static ThresholdSpec parse(const std::string& text);
    std::string to_string() const;
};

// Chooses a threshold from engaged (normal) scores only; any disengaged entry
// is a protocol violation.
double select_threshold(const ScoreSet& normal_scores, const ThresholdSpec& spec);

// q-th percentile with linear interpolation between closest ranks.
double percentile(std::vector<double> values, double q);

// Mann-Whitney form: P(score_pos > score_neg) + 0.5 * P(tie), via midranks.
double roc_auc(const ScoreSet& scores);

// Trapezoidal integration of the ROC curve; agrees with roc_auc to 1e-12.
double roc_auc_trapezoid(const ScoreSet& scores);

// Average precision with descending-score tie blocks processed as one step.
double pr_auc(const ScoreSet& scores);

struct Confusion {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
};

// Predicted disengaged iff score > threshold (strict).
Confusion confusion(const ScoreSet& scores, double threshold);

struct CurvePoint {
    double x = 0.0, y = 0.0;
};

std::vector<CurvePoint> roc_curve(const ScoreSet& scores);        // (fpr, tpr)
std::vector<CurvePoint> pr_curve(const ScoreSet& scores);         // (recall, precision)

struct EvalReport {
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    double pr_baseline = 0.0;
    double threshold = 0.0;
    std::string threshold_method;
    Confusion conf;
    ScoreSet scores;
    std::string config_digest;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
};

EvalReport evaluate(Model& model, const std::vector<LoadedSample>& test_samples,
                    double threshold, const std::string& threshold_method,
                    const std::string& config_digest);

// FNV-1a hex digest used to stamp reports with their configuration.
std::string digest(const std::string& text);

}  // namespace engae
