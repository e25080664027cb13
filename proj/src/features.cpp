#include "engae/features.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace engae {

FeatureMode feature_mode_from_name(const std::string& s) {
    if (s == "behavioral") return FeatureMode::behavioral;
    if (s == "behavioral+affect") return FeatureMode::behavioral_affect;
    throw ConfigError("unknown feature mode: " + s +
                      " (expected behavioral or behavioral+affect)");
}

std::string feature_mode_name(FeatureMode m) {
    return m == FeatureMode::behavioral ? "behavioral" : "behavioral+affect";
}

const std::vector<std::string>& frame_feature_columns(FeatureMode mode) {
    static const std::vector<std::string> all = {
        "valence", "arousal", "au45", "gaze_x", "gaze_y",
        "head_x", "head_y", "head_z", "pitch", "yaw", "roll"};
    static const std::vector<std::string> behav(all.begin() + 2, all.end());
    return mode == FeatureMode::behavioral ? behav : all;
}

SeqTensor select_features(const FrameSeries& series, FeatureMode mode) {
    const std::size_t skip = (mode == FeatureMode::behavioral) ? 2 : 0;
    const std::size_t n = 11 - skip;
    SeqTensor out(series.length(), n);
    for (std::size_t t = 0; t < series.length(); ++t) {
        auto row = series.frames[t].model_row();
        for (std::size_t c = 0; c < n; ++c) out(t, c) = row[c + skip];
    }
    return out;
}

std::vector<double> velocity(const std::vector<double>& x, double fps) {
    if (x.size() < 3) throw InputError("velocity: series must have length >= 3");
    std::vector<double> v(x.size() - 1);
    for (std::size_t i = 0; i + 1 < x.size(); ++i) v[i] = (x[i + 1] - x[i]) * fps;
    return v;
}

std::vector<double> acceleration(const std::vector<double>& x, double fps) {
    std::vector<double> v = velocity(x, fps);
    std::vector<double> a(v.size() - 1);
    for (std::size_t i = 0; i + 1 < v.size(); ++i) a[i] = (v[i + 1] - v[i]) * fps;
    return a;
}

double blink_rate(const std::vector<double>& eye_closure, double threshold) {
    if (eye_closure.empty()) throw InputError("blink_rate: empty series");
    if (eye_closure.size() < 3) return 0.0;
    std::size_t peaks = 0;
    for (std::size_t i = 1; i + 1 < eye_closure.size(); ++i) {
        if (eye_closure[i] > threshold && eye_closure[i] > eye_closure[i - 1] &&
            eye_closure[i] >= eye_closure[i + 1])
            ++peaks;
    }
    return static_cast<double>(peaks) / static_cast<double>(eye_closure.size());
}

namespace {

double mean_of(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

// Population standard deviation.
double std_of(const std::vector<double>& x) {
    double m = mean_of(x), s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

const std::vector<std::string>& segment_feature_columns(FeatureMode mode) {
    static const auto build = [](bool affect) {
        std::vector<std::string> cols;
        if (affect)
            cols = {"mean_valence", "std_valence", "mean_arousal", "std_arousal"};
        cols.push_back("blink_rate");
        for (const char* sig : {"gaze_x", "gaze_y", "head_x", "head_y", "head_z",
                                "pitch", "yaw", "roll"}) {
            for (const char* stat : {"mean_vel_", "std_vel_", "mean_acc_", "std_acc_"})
                cols.push_back(std::string(stat) + sig);
        }
        return cols;
    };
    static const std::vector<std::string> full = build(true);
    static const std::vector<std::string> behav = build(false);
    return mode == FeatureMode::behavioral ? behav : full;
}

SegmentFeatures segment_features(const FrameSeries& series, double blink_threshold,
                                 FeatureMode mode) {
    if (series.length() < 3)
        throw InputError("segment_features: series must have length >= 3");
    const std::size_t T = series.length();
    auto column = [&](auto getter) {
        std::vector<double> col(T);
        for (std::size_t t = 0; t < T; ++t) col[t] = getter(series.frames[t]);
        return col;
    };

    SegmentFeatures out;
    out.mode = mode;
    auto& v = out.values;
    if (mode == FeatureMode::behavioral_affect) {
        auto val = column([](const FrameFeatures& f) { return f.valence; });
        auto aro = column([](const FrameFeatures& f) { return f.arousal; });
        v.push_back(mean_of(val));
        v.push_back(std_of(val));
        v.push_back(mean_of(aro));
        v.push_back(std_of(aro));
    }
    v.push_back(blink_rate(column([](const FrameFeatures& f) { return f.au45; }),
                           blink_threshold));

    const std::vector<std::vector<double>> signals = {
        column([](const FrameFeatures& f) { return f.gaze_x; }),
        column([](const FrameFeatures& f) { return f.gaze_y; }),
        column([](const FrameFeatures& f) { return f.head_x; }),
        column([](const FrameFeatures& f) { return f.head_y; }),
        column([](const FrameFeatures& f) { return f.head_z; }),
        column([](const FrameFeatures& f) { return f.pitch; }),
        column([](const FrameFeatures& f) { return f.yaw; }),
        column([](const FrameFeatures& f) { return f.roll; })};
    for (const auto& sig : signals) {
        auto vel = velocity(sig, series.fps);
        auto acc = acceleration(sig, series.fps);
        v.push_back(mean_of(vel));
        v.push_back(std_of(vel));
        v.push_back(mean_of(acc));
        v.push_back(std_of(acc));
    }
    return out;
}

std::size_t window_count(std::size_t T, std::size_t w, std::size_t stride) {
    if (w > T) return 0;
    return (T - w) / stride + 1;
}

std::vector<FrameSeries> window(const FrameSeries& series, double window_s,
                                double overlap) {
    if (overlap < 0.0 || overlap >= 1.0)
        throw InputError("window: overlap must be in [0, 1)");
    if (series.fps <= 0.0) throw InputError("window: fps must be > 0");
    const std::size_t w = static_cast<std::size_t>(std::llround(window_s * series.fps));
    if (w == 0 || w > series.length())
        throw InputError("window: window of " + std::to_string(w) +
                         " frames does not fit series of length " +
                         std::to_string(series.length()));
    std::size_t stride =
        static_cast<std::size_t>(std::llround(static_cast<double>(w) * (1.0 - overlap)));
    if (stride == 0) stride = 1;

    std::vector<FrameSeries> out;
    const std::size_t count = window_count(series.length(), w, stride);
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        FrameSeries win;
        win.fps = series.fps;
        win.id = series.id + "#w" + std::to_string(i);
        auto begin = series.frames.begin() + static_cast<std::ptrdiff_t>(i * stride);
        win.frames.assign(begin, begin + static_cast<std::ptrdiff_t>(w));
        out.push_back(std::move(win));
    }
    return out;
}

ImputeResult impute(const FrameSeries& series, double min_confidence) {
    ImputeResult res;
    res.series = series;
    auto& frames = res.series.frames;
    std::size_t first_valid = frames.size();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].confidence >= min_confidence) {
            first_valid = i;
            break;
        }
    }
    if (first_valid == frames.size())
        throw InputError("impute: no frame meets the confidence threshold");
    for (std::size_t i = 0; i < first_valid; ++i) {
        frames[i] = frames[first_valid];
        ++res.imputed;
    }
    for (std::size_t i = first_valid + 1; i < frames.size(); ++i) {
        if (frames[i].confidence < min_confidence) {
            frames[i] = frames[i - 1];
            ++res.imputed;
        }
    }
    return res;
}

// ------------------------------------------------------------------ Normalizer

Normalizer Normalizer::fit(const std::vector<SeqTensor>& tensors,
                           const std::vector<std::string>& columns) {
    if (tensors.empty()) throw InputError("Normalizer::fit: no tensors");
    const std::size_t C = tensors.front().cols();
    if (columns.size() != C)
        throw InputError("Normalizer::fit: column-name count mismatch");
    Normalizer nz;
    nz.feature_order = columns;
    nz.mean.assign(C, 0.0);
    nz.std.assign(C, 0.0);
    std::size_t rows = 0;
    for (const auto& t : tensors) {
        if (t.cols() != C) throw InputError("Normalizer::fit: inconsistent widths");
        rows += t.rows();
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (std::size_t c = 0; c < C; ++c) nz.mean[c] += t(r, c);
    }
    for (std::size_t c = 0; c < C; ++c) nz.mean[c] /= static_cast<double>(rows);
    for (const auto& t : tensors)
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (std::size_t c = 0; c < C; ++c) {
                double d = t(r, c) - nz.mean[c];
                nz.std[c] += d * d;
            }
    for (std::size_t c = 0; c < C; ++c) {
        nz.std[c] = std::sqrt(nz.std[c] / static_cast<double>(rows));
        if (nz.std[c] < 1e-12) nz.std[c] = 1.0;  // constant feature
    }
    return nz;
}

SeqTensor Normalizer::apply(const SeqTensor& x) const {
    if (x.cols() != mean.size())
        throw InputError("Normalizer::apply: width mismatch");
    SeqTensor out = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            out(r, c) = (x(r, c) - mean[c]) / std[c];
    return out;
}

std::string Normalizer::to_json() const {
    nlohmann::json j;
    j["mean"] = mean;
    j["std"] = std;
    j["feature_order"] = feature_order;
    return j.dump(2);
}

Normalizer Normalizer::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("normalizer json: ") + e.what());
    }
    Normalizer nz;
    try {
        nz.mean = j.at("mean").get<std::vector<double>>();
        nz.std = j.at("std").get<std::vector<double>>();
        nz.feature_order = j.at("feature_order").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("normalizer json: ") + e.what());
    }
    if (nz.mean.size() != nz.std.size() || nz.mean.size() != nz.feature_order.size())
        throw FormatError("normalizer json: inconsistent field lengths");
    return nz;
}

}  // namespace engae
