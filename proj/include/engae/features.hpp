#pragma once

#include <array>
#include <string>
#include <vector>

#include "engae/tensor.hpp"

namespace engae {

// One video frame's extracted behavioral + affect values. The 11 model-facing
// features are everything except confidence; valence and arousal lie in
// [-1, 1], au45 is the eye-closure intensity on the 0-5 scale, gaze and head
// rotation are radians, head location is millimeters.
struct FrameFeatures {
    double confidence = 1.0;
    double valence = 0.0;
    double arousal = 0.0;
    double au45 = 0.0;
    double gaze_x = 0.0;
    double gaze_y = 0.0;
    double head_x = 0.0;
    double head_y = 0.0;
    double head_z = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
    double roll = 0.0;

    std::array<double, 11> model_row() const {
        return {valence, arousal, au45, gaze_x, gaze_y,
                head_x, head_y, head_z, pitch, yaw, roll};
    }
};

struct FrameSeries {
    std::string id;
    double fps = 30.0;
    std::vector<FrameFeatures> frames;

    std::size_t length() const { return frames.size(); }
};

enum class FeatureMode { behavioral, behavioral_affect };

FeatureMode feature_mode_from_name(const std::string& s);
std::string feature_mode_name(FeatureMode m);

// Fixed model-facing column order; behavioral mode drops valence and arousal.
const std::vector<std::string>& frame_feature_columns(FeatureMode mode);

// Frame series -> T x n tensor (n = 11 or 9).
SeqTensor select_features(const FrameSeries& series, FeatureMode mode);

// First difference scaled by the sample rate (units/s); length T-1.
std::vector<double> velocity(const std::vector<double>& x, double fps);
// First difference of the velocity (units/s^2); length T-2.
std::vector<double> acceleration(const std::vector<double>& x, double fps);

// Fraction of frames that are strict-left / weak-right local maxima above the
// threshold: x[i] > thr, x[i] > x[i-1], x[i] >= x[i+1].
double blink_rate(const std::vector<double>& eye_closure, double threshold);

constexpr double kDefaultBlinkThreshold = 1.0;

// The 37 per-window statistics in declared order: mean/std of valence and
// arousal, blink rate, then mean/std of velocity and acceleration for each of
// gaze_x, gaze_y, head_x, head_y, head_z, pitch, yaw, roll.
struct SegmentFeatures {
    std::vector<double> values;       // 37 (behavioral+affect) or 33 (behavioral)
    FeatureMode mode = FeatureMode::behavioral_affect;
};

const std::vector<std::string>& segment_feature_columns(FeatureMode mode);

SegmentFeatures segment_features(const FrameSeries& series,
                                 double blink_threshold = kDefaultBlinkThreshold,
                                 FeatureMode mode = FeatureMode::behavioral_affect);

// Fixed-length windows of w = round(window_s * fps) frames with stride
// s = round(w * (1 - overlap)); the trailing remainder is dropped.
std::vector<FrameSeries> window(const FrameSeries& series, double window_s,
                                double overlap);

std::size_t window_count(std::size_t T, std::size_t w, std::size_t stride);

struct ImputeResult {
    FrameSeries series;
    std::size_t imputed = 0;
};

// Replaces rows with confidence below min_confidence by the previous valid
// row (the first valid row for a leading gap).
ImputeResult impute(const FrameSeries& series, double min_confidence);

// Per-feature z-score statistics, fitted on engaged training data only.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::string> feature_order;

    static Normalizer fit(const std::vector<SeqTensor>& tensors,
                          const std::vector<std::string>& columns);
    SeqTensor apply(const SeqTensor& x) const;

    std::string to_json() const;
    static Normalizer from_json(const std::string& text);
};

}  // namespace engae
