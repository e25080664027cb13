#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "engae/features.hpp"

namespace engae {

enum class AnomalyType { gaze_away, high_blink, negative_affect, head_motion, eye_closure };

std::string anomaly_name(AnomalyType a);
AnomalyType anomaly_from_name(const std::string& s);

struct SynthConfig {
    std::uint64_t seed = 7;
    double fps = 30.0;
    double duration_s = 10.0;
    std::set<AnomalyType> anomaly_types = {AnomalyType::gaze_away,
                                           AnomalyType::negative_affect,
                                           AnomalyType::high_blink};
    double anomaly_intensity = 0.8;  // in [0, 1]
    double noise_std = 1.0;          // global jitter scale

    void validate() const;
};

enum class Label { engaged, disengaged };

std::string label_name(Label l);
Label label_from_name(const std::string& s);

struct LabeledSample {
    FrameSeries series;
    Label label = Label::engaged;
    std::vector<AnomalyType> anomalies;  // empty for engaged samples
};

// Engaged baseline: positive low-fluctuation affect, small gaze/head jitter,
// sparse physiological blinks.
LabeledSample gen_engaged(const SynthConfig& cfg);

// Engaged baseline plus the configured anomalies scaled by intensity.
// With intensity 0 the output equals the engaged sample for the same seed.
LabeledSample gen_disengaged(const SynthConfig& cfg);

struct ManifestEntry {
    std::string id;
    std::string path;
    Label label = Label::engaged;
    std::string split;  // train | val | test
    std::vector<AnomalyType> anomalies;
};

struct DatasetCounts {
    std::size_t engaged_train = 400;
    std::size_t engaged_test = 100;
    std::size_t disengaged_test = 100;
    std::size_t disengaged_train = 0;  // only for classifier baselines
};

// Writes one frame-feature CSV per sample plus a JSON-lines manifest under
// out_dir; per-sample seeds derive deterministically from cfg.seed.
std::vector<ManifestEntry> gen_dataset(const SynthConfig& cfg,
                                       const DatasetCounts& counts,
                                       const std::string& out_dir);

}  // namespace engae
