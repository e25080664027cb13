#include "engae/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "engae/adam.hpp"
#include "engae/losses.hpp"
#include "engae/rng.hpp"

namespace engae {

LossKind loss_from_name(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "bce") return LossKind::bce;
    if (s == "weighted_bce") return LossKind::weighted_bce;
    throw ConfigError("unknown loss: " + s);
}

std::string loss_name(LossKind l) {
    switch (l) {
        case LossKind::mse: return "mse";
        case LossKind::bce: return "bce";
        case LossKind::weighted_bce: return "weighted_bce";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be > 0");
    if (decay <= 0.0 || decay > 1.0) throw ConfigError("TrainConfig: decay must be in (0, 1]");
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
}

namespace {

// Deterministic Fisher-Yates shuffle of sample indices.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
}

AdamConfig adam_config(const TrainConfig& cfg) {
    AdamConfig ac;
    ac.lr = cfg.lr;
    ac.decay = cfg.decay;
    return ac;
}

}  // namespace

std::vector<double> train_ae(Model& model, const std::vector<LoadedSample>& samples,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw InputError("train_ae: empty training set");
    for (const auto& s : samples)
        if (s.label != Label::engaged)
            throw ProtocolError("train_ae: disengaged sample '" + s.id +
                                "' in the training set");
    if (!arch_is_ae(model.config().arch))
        throw ConfigError("train_ae: model is not an autoencoder");

    Adam opt(model.params(), adam_config(cfg));
    Rng rng(Rng::derive_seed(cfg.seed, 0x7a11));
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> history;
    history.reserve(cfg.epochs);

    model.set_mode(Mode::train);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_epoch(epoch);
        shuffle_indices(idx, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, idx.size());
            opt.zero_grad();
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const SeqTensor& x = samples[idx[i]].tensor;
                SeqTensor xhat = model.forward_ae(x);
                epoch_loss += mse_loss(x, xhat);
                SeqTensor g = mse_loss_grad(x, xhat);
                for (double& v : g.data()) v *= inv_batch;
                model.backward(g);
            }
            opt.step();
        }
        history.push_back(epoch_loss / static_cast<double>(idx.size()));
    }
    model.set_mode(Mode::eval);
    return history;
}

std::vector<double> train_bc(Model& model, const std::vector<LoadedSample>& samples,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw InputError("train_bc: empty training set");
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& s : samples)
        (s.label == Label::disengaged ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw ProtocolError("train_bc: both classes must be present (" +
                         std::to_string(n_neg) + " engaged, " +
                         std::to_string(n_pos) + " disengaged)");
    if (arch_is_ae(model.config().arch))
        throw ConfigError("train_bc: model is not a classifier");
    if (cfg.loss == LossKind::mse)
        throw ConfigError("train_bc: classifiers train with bce or weighted_bce");

    double weight_pos = 1.0;
    if (cfg.loss == LossKind::weighted_bce)
        weight_pos = cfg.weight_pos > 0.0
                         ? cfg.weight_pos
                         : static_cast<double>(n_neg) / static_cast<double>(n_pos);

    Adam opt(model.params(), adam_config(cfg));
    Rng rng(Rng::derive_seed(cfg.seed, 0x7a12));
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> history;
    history.reserve(cfg.epochs);

    model.set_mode(Mode::train);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_epoch(epoch);
        shuffle_indices(idx, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, idx.size());
            opt.zero_grad();
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const LoadedSample& s = samples[idx[i]];
                int y = s.label == Label::disengaged ? 1 : 0;
                double p = model.forward_bc(s.tensor);
                epoch_loss += bce_loss(p, y, weight_pos);
                model.backward_bc(bce_loss_grad(p, y, weight_pos) * inv_batch);
            }
            opt.step();
        }
        history.push_back(epoch_loss / static_cast<double>(idx.size()));
    }
    model.set_mode(Mode::eval);
    return history;
}

ScoreSet score(Model& model, const std::vector<LoadedSample>& samples) {
    model.set_mode(Mode::eval);
    const bool ae = arch_is_ae(model.config().arch);
    ScoreSet out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        ScoreEntry e;
        e.id = s.id;
        e.label = s.label;
        if (ae) {
            SeqTensor xhat = model.forward_ae(s.tensor);
            e.score = reconstruction_error(s.tensor, xhat);
        } else {
            e.score = model.forward_bc(s.tensor);
        }
        out.push_back(std::move(e));
    }
    return out;
}

ThresholdSpec ThresholdSpec::parse(const std::string& text) {
    ThresholdSpec spec;
    auto paren = text.find('(');
    std::string name = text.substr(0, paren);
    double arg = 0.0;
    bool has_arg = false;
    if (paren != std::string::npos) {
        auto close = text.find(')', paren);
        if (close == std::string::npos)
            throw ConfigError("threshold method: missing ')': " + text);
        try {
            arg = std::stod(text.substr(paren + 1, close - paren - 1));
        } catch (const std::exception&) {
            throw ConfigError("threshold method argument is not a number: " + text);
        }
        has_arg = true;
    }
    if (name == "max") {
        spec.method = ThresholdMethod::max;
        spec.param = 0.0;
    } else if (name == "percentile") {
        spec.method = ThresholdMethod::percentile;
        spec.param = has_arg ? arg : 99.0;
        if (spec.param < 0.0 || spec.param > 100.0)
            throw ConfigError("percentile must be in [0, 100]");
    } else if (name == "mean_plus_k_std") {
        spec.method = ThresholdMethod::mean_plus_k_std;
        spec.param = has_arg ? arg : 3.0;
    } else {
        throw ConfigError("unknown threshold method: " + text);
    }
    return spec;
}

std::string ThresholdSpec::to_string() const {
    switch (method) {
        case ThresholdMethod::max: return "max";
        case ThresholdMethod::percentile: {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "percentile(%g)", param);
            return buf;
        }
        case ThresholdMethod::mean_plus_k_std: {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "mean_plus_k_std(%g)", param);
            return buf;
        }
    }
    return "?";
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw InputError("percentile: empty set");
    if (q < 0.0 || q > 100.0) throw ConfigError("percentile must be in [0, 100]");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values.front();
    double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double select_threshold(const ScoreSet& normal_scores, const ThresholdSpec& spec) {
    if (normal_scores.empty()) throw InputError("select_threshold: empty score set");
    std::vector<double> vals;
    vals.reserve(normal_scores.size());
    for (const auto& e : normal_scores) {
        if (e.label != Label::engaged)
            throw ProtocolError("select_threshold: disengaged score '" + e.id +
                                "' offered for normal-only threshold selection");
        vals.push_back(e.score);
    }
    switch (spec.method) {
        case ThresholdMethod::max:
            return *std::max_element(vals.begin(), vals.end());
        case ThresholdMethod::percentile:
            return percentile(std::move(vals), spec.param);
        case ThresholdMethod::mean_plus_k_std: {
            double m = std::accumulate(vals.begin(), vals.end(), 0.0) /
                       static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - m) * (v - m);
            var /= static_cast<double>(vals.size());
            return m + spec.param * std::sqrt(var);
        }
    }
    throw ConfigError("select_threshold: bad method");
}

namespace {

void check_scores(const ScoreSet& scores, bool need_both) {
    std::size_t pos = 0, neg = 0;
    for (const auto& e : scores) {
        if (!std::isfinite(e.score))
            throw InputError("score set: non-finite score for '" + e.id + "'");
        (e.label == Label::disengaged ? pos : neg)++;
    }
    if (need_both && (pos == 0 || neg == 0))
        throw InputError("score set: both classes required");
}

// Entries sorted by descending score, grouped into tie blocks.
struct TieBlock {
    double score;
    std::size_t pos, neg;
};

std::vector<TieBlock> tie_blocks_desc(const ScoreSet& scores) {
    ScoreSet sorted = scores;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoreEntry& a, const ScoreEntry& b) { return a.score > b.score; });
    std::vector<TieBlock> blocks;
    for (const auto& e : sorted) {
        if (blocks.empty() || blocks.back().score != e.score)
            blocks.push_back({e.score, 0, 0});
        (e.label == Label::disengaged ? blocks.back().pos : blocks.back().neg)++;
    }
    return blocks;
}

}  // namespace

double roc_auc(const ScoreSet& scores) {
    check_scores(scores, true);
    // midrank formulation of the Mann-Whitney U statistic
    ScoreSet sorted = scores;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoreEntry& a, const ScoreEntry& b) { return a.score < b.score; });
    const std::size_t n = sorted.size();
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && sorted[j].score == sorted[i].score) ++j;
        double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (sorted[t].label == Label::disengaged) {
                rank_sum_pos += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    double u = rank_sum_pos - static_cast<double>(n_pos) *
                                  (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<CurvePoint> roc_curve(const ScoreSet& scores) {
    check_scores(scores, true);
    auto blocks = tie_blocks_desc(scores);
    std::size_t total_pos = 0, total_neg = 0;
    for (const auto& b : blocks) {
        total_pos += b.pos;
        total_neg += b.neg;
    }
    std::vector<CurvePoint> pts;
    pts.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (const auto& b : blocks) {
        tp += b.pos;
        fp += b.neg;
        pts.push_back({static_cast<double>(fp) / static_cast<double>(total_neg),
                       static_cast<double>(tp) / static_cast<double>(total_pos)});
    }
    return pts;
}

double roc_auc_trapezoid(const ScoreSet& scores) {
    auto pts = roc_curve(scores);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].x - pts[i - 1].x) * (pts[i].y + pts[i - 1].y) / 2.0;
    return area;
}

double pr_auc(const ScoreSet& scores) {
    check_scores(scores, false);
    std::size_t total_pos = 0;
    for (const auto& e : scores)
        if (e.label == Label::disengaged) ++total_pos;
    if (total_pos == 0) throw InputError("pr_auc: no positive samples");
    auto blocks = tie_blocks_desc(scores);
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    for (const auto& b : blocks) {
        double recall_prev = static_cast<double>(tp) / static_cast<double>(total_pos);
        tp += b.pos;
        seen += b.pos + b.neg;
        double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - recall_prev) * precision;
    }
    return ap;
}

std::vector<CurvePoint> pr_curve(const ScoreSet& scores) {
    check_scores(scores, false);
    std::size_t total_pos = 0;
    for (const auto& e : scores)
        if (e.label == Label::disengaged) ++total_pos;
    if (total_pos == 0) throw InputError("pr_curve: no positive samples");
    auto blocks = tie_blocks_desc(scores);
    std::vector<CurvePoint> pts;
    std::size_t tp = 0, seen = 0;
    pts.push_back({0.0, 1.0});
    for (const auto& b : blocks) {
        tp += b.pos;
        seen += b.pos + b.neg;
        pts.push_back({static_cast<double>(tp) / static_cast<double>(total_pos),
                       static_cast<double>(tp) / static_cast<double>(seen)});
    }
    return pts;
}

Confusion confusion(const ScoreSet& scores, double threshold) {
    Confusion c;
    for (const auto& e : scores) {
        bool pred_pos = e.score > threshold;  // strict
        bool is_pos = e.label == Label::disengaged;
        if (pred_pos && is_pos) ++c.tp;
        else if (pred_pos) ++c.fp;
        else if (is_pos) ++c.fn;
        else ++c.tn;
    }
    return c;
}

std::string digest(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["auc_roc"] = auc_roc;
    j["auc_pr"] = auc_pr;
    j["pr_baseline"] = pr_baseline;
    j["threshold"] = threshold;
    j["threshold_method"] = threshold_method;
    j["confusion"] = {{"tn", conf.tn}, {"fp", conf.fp}, {"fn", conf.fn}, {"tp", conf.tp}};
    auto arr = nlohmann::json::array();
    for (const auto& e : scores)
        arr.push_back({{"id", e.id}, {"score", e.score}, {"label", label_name(e.label)}});
    j["scores"] = arr;
    j["config_digest"] = config_digest;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("report json: ") + e.what());
    }
    EvalReport r;
    try {
        r.auc_roc = j.at("auc_roc").get<double>();
        r.auc_pr = j.at("auc_pr").get<double>();
        r.pr_baseline = j.at("pr_baseline").get<double>();
        r.threshold = j.at("threshold").get<double>();
        r.threshold_method = j.at("threshold_method").get<std::string>();
        const auto& c = j.at("confusion");
        r.conf = {c.at("tn").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                  c.at("fn").get<std::size_t>(), c.at("tp").get<std::size_t>()};
        for (const auto& e : j.at("scores")) {
            r.scores.push_back({e.at("id").get<std::string>(),
                                e.at("score").get<double>(),
                                label_from_name(e.at("label").get<std::string>())});
        }
        r.config_digest = j.at("config_digest").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report json: ") + e.what());
    }
    return r;
}

EvalReport evaluate(Model& model, const std::vector<LoadedSample>& test_samples,
                    double threshold, const std::string& threshold_method,
                    const std::string& config_digest) {
    EvalReport r;
    r.scores = score(model, test_samples);
    r.auc_roc = roc_auc(r.scores);
    r.auc_pr = pr_auc(r.scores);
    std::size_t pos = 0;
    for (const auto& e : r.scores)
        if (e.label == Label::disengaged) ++pos;
    r.pr_baseline = static_cast<double>(pos) / static_cast<double>(r.scores.size());
    r.threshold = threshold;
    r.threshold_method = threshold_method;
    r.conf = confusion(r.scores, threshold);
    r.config_digest = config_digest;
    return r;
}

}  // namespace engae
