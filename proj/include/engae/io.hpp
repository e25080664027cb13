#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "engae/features.hpp"
#include "engae/synth.hpp"

namespace engae {

// Frame-feature CSV: header
// frame,confidence,valence,arousal,au45,gaze_x,gaze_y,head_x,head_y,head_z,pitch,yaw,roll
// one row per frame, decimal-point reals at 9 significant digits, LF endings.
FrameSeries read_frame_csv(const std::string& path, double fps = 30.0);
void write_frame_csv(const std::string& path, const FrameSeries& series);

// Segment-feature CSV: the declared 37- (or 33-) column header, one data row
// per window.
void write_segment_csv(const std::string& path,
                       const std::vector<SegmentFeatures>& rows);

// JSON-lines manifest: {"id":…,"path":…,"label":…,"split":…,"anomaly_types":[…]}
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

enum class FeatureLevel { frame, segment };

FeatureLevel feature_level_from_name(const std::string& s);
std::string feature_level_name(FeatureLevel l);

struct LoadedSample {
    std::string id;
    SeqTensor tensor;
    Label label = Label::engaged;
    bool normalized = false;
};

struct LoadOptions {
    FeatureMode mode = FeatureMode::behavioral_affect;
    FeatureLevel level = FeatureLevel::frame;
    double fps = 30.0;
    double min_confidence = 0.5;
    double blink_threshold = kDefaultBlinkThreshold;
    double window_s = 10.0;   // segment-level windowing
    double overlap = 0.5;
};

// Loads every sample of one split as a feature tensor: frame level gives one
// T x n tensor per sample, segment level windows each recording and stacks
// per-window statistics into a (num_windows x 37|33) tensor.
std::vector<LoadedSample> load_split(const std::vector<ManifestEntry>& manifest,
                                     const std::string& manifest_dir,
                                     const std::string& split,
                                     const LoadOptions& opts);

// Applies z-scoring in place; a second application is rejected.
void normalize_samples(std::vector<LoadedSample>& samples, const Normalizer& nz);

void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace engae
