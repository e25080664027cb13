#include "engae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "engae/io.hpp"
#include "engae/rng.hpp"

namespace engae {

std::string anomaly_name(AnomalyType a) {
    switch (a) {
        case AnomalyType::gaze_away: return "gaze_away";
        case AnomalyType::high_blink: return "high_blink";
        case AnomalyType::negative_affect: return "negative_affect";
        case AnomalyType::head_motion: return "head_motion";
        case AnomalyType::eye_closure: return "eye_closure";
    }
    return "?";
}

AnomalyType anomaly_from_name(const std::string& s) {
    if (s == "gaze_away") return AnomalyType::gaze_away;
    if (s == "high_blink") return AnomalyType::high_blink;
    if (s == "negative_affect") return AnomalyType::negative_affect;
    if (s == "head_motion") return AnomalyType::head_motion;
    if (s == "eye_closure") return AnomalyType::eye_closure;
    throw ConfigError("unknown anomaly type: " + s);
}

std::string label_name(Label l) {
    return l == Label::engaged ? "engaged" : "disengaged";
}

Label label_from_name(const std::string& s) {
    if (s == "engaged") return Label::engaged;
    if (s == "disengaged") return Label::disengaged;
    throw FormatError("unknown label: " + s);
}

void SynthConfig::validate() const {
    if (fps <= 0.0) throw ConfigError("SynthConfig: fps must be > 0");
    if (duration_s <= 0.0) throw ConfigError("SynthConfig: duration must be > 0");
    if (anomaly_intensity < 0.0 || anomaly_intensity > 1.0)
        throw ConfigError("SynthConfig: anomaly_intensity must be in [0, 1]");
    if (noise_std < 0.0) throw ConfigError("SynthConfig: noise_std must be >= 0");
}

namespace {

// First-order autoregressive jitter with stationary standard deviation `std`.
std::vector<double> ar1_noise(Rng& rng, std::size_t T, double std) {
    constexpr double phi = 0.95;
    const double innov = std * std::sqrt(1.0 - phi * phi);
    std::vector<double> x(T, 0.0);
    double v = rng.normal(0.0, std);
    for (std::size_t t = 0; t < T; ++t) {
        x[t] = v;
        v = phi * v + rng.normal(0.0, innov);
    }
    return x;
}

void add_blink(std::vector<double>& au45, std::size_t center, double height) {
    // 5-frame triangular peak
    const std::size_t T = au45.size();
    for (int off = -2; off <= 2; ++off) {
        std::ptrdiff_t i = static_cast<std::ptrdiff_t>(center) + off;
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(T)) continue;
        double w = 1.0 - std::abs(off) / 3.0;
        au45[static_cast<std::size_t>(i)] =
            std::max(au45[static_cast<std::size_t>(i)], height * w);
    }
}

struct Channels {
    std::vector<double> valence, arousal, au45, gaze_x, gaze_y;
    std::vector<double> head_x, head_y, head_z, pitch, yaw, roll;
};

Channels engaged_baseline(const SynthConfig& cfg, std::size_t T) {
    Rng rng(Rng::derive_seed(cfg.seed, 0xba5e));
    const double ns = cfg.noise_std;
    Channels ch;
    ch.valence = ar1_noise(rng, T, 0.05 * ns);
    ch.arousal = ar1_noise(rng, T, 0.05 * ns);
    for (auto& v : ch.valence) v += 0.3;
    for (auto& v : ch.arousal) v += 0.25;
    ch.gaze_x = ar1_noise(rng, T, 0.03 * ns);
    ch.gaze_y = ar1_noise(rng, T, 0.03 * ns);
    ch.head_x = ar1_noise(rng, T, 5.0 * ns);
    ch.head_y = ar1_noise(rng, T, 5.0 * ns);
    ch.head_z = ar1_noise(rng, T, 5.0 * ns);
    ch.pitch = ar1_noise(rng, T, 0.03 * ns);
    ch.yaw = ar1_noise(rng, T, 0.03 * ns);
    ch.roll = ar1_noise(rng, T, 0.03 * ns);

    // resting eyelid level plus sparse physiological blinks
    ch.au45 = ar1_noise(rng, T, 0.03 * ns);
    for (auto& v : ch.au45) v = std::abs(v) + 0.05;
    std::size_t next = 60 + rng.below(80);
    while (next < T) {
        add_blink(ch.au45, next, 1.8 + rng.uniform() * 0.8);
        next += 100 + rng.below(100);
    }
    return ch;
}

void inject(Channels& ch, AnomalyType type, const SynthConfig& cfg, std::size_t T) {
    Rng rng(Rng::derive_seed(cfg.seed, 0xa0 + static_cast<std::uint64_t>(type)));
    const double s = cfg.anomaly_intensity;
    auto ramp = [](std::size_t t, std::size_t start, std::size_t len) {
        if (t < start || t >= start + len) return 0.0;
        std::size_t edge = std::max<std::size_t>(len / 10, 1);
        double up = std::min(1.0, static_cast<double>(t - start + 1) / edge);
        double down = std::min(1.0, static_cast<double>(start + len - t) / edge);
        return std::min(up, down);
    };
    switch (type) {
        case AnomalyType::gaze_away: {
            std::size_t start = T / 10 + rng.below(T / 4 + 1);
            std::size_t len = T / 3 + rng.below(T / 5 + 1);
            double sx = rng.uniform() < 0.5 ? -1.0 : 1.0;
            double sy = rng.uniform() < 0.5 ? -1.0 : 1.0;
            for (std::size_t t = 0; t < T; ++t) {
                double r = ramp(t, start, len) * s;
                ch.gaze_x[t] += r * 0.5 * sx;
                ch.gaze_y[t] += r * 0.35 * sy;
                ch.yaw[t] += r * 0.8 * sx;
                ch.pitch[t] += r * 0.3 * sy;
            }
            break;
        }
        case AnomalyType::high_blink: {
            std::size_t extra = static_cast<std::size_t>(std::llround(s * T / 20.0));
            for (std::size_t i = 0; i < extra; ++i)
                add_blink(ch.au45, rng.below(T), 1.5 + rng.uniform());
            break;
        }
        case AnomalyType::negative_affect: {
            std::size_t onset = std::max<std::size_t>(T / 10, 1);
            for (std::size_t t = 0; t < T; ++t) {
                double r = std::min(1.0, static_cast<double>(t + 1) / onset) * s;
                ch.valence[t] -= r * 0.9;
                ch.arousal[t] -= r * 0.5;
            }
            break;
        }
        case AnomalyType::head_motion: {
            for (auto* sig : {&ch.pitch, &ch.yaw, &ch.roll}) {
                double freq = 0.2 + 0.3 * rng.uniform();
                double phase = rng.uniform() * 6.283185307179586;
                for (std::size_t t = 0; t < T; ++t)
                    (*sig)[t] += s * 0.5 *
                                 std::sin(6.283185307179586 * freq * t / cfg.fps + phase);
            }
            for (auto* sig : {&ch.head_x, &ch.head_y, &ch.head_z}) {
                double freq = 0.15 + 0.25 * rng.uniform();
                double phase = rng.uniform() * 6.283185307179586;
                for (std::size_t t = 0; t < T; ++t)
                    (*sig)[t] += s * 40.0 *
                                 std::sin(6.283185307179586 * freq * t / cfg.fps + phase);
            }
            break;
        }
        case AnomalyType::eye_closure: {
            std::size_t len = static_cast<std::size_t>(cfg.fps) +
                              rng.below(static_cast<std::uint64_t>(2 * cfg.fps) + 1);
            std::size_t start = rng.below(std::max<std::size_t>(T - len, 1));
            for (std::size_t t = 0; t < T; ++t) {
                double r = ramp(t, start, len) * s;
                ch.au45[t] = std::max(ch.au45[t], r * 3.0);
            }
            break;
        }
    }
}

LabeledSample assemble(const SynthConfig& cfg, const Channels& ch, std::size_t T) {
    LabeledSample sample;
    sample.series.fps = cfg.fps;
    sample.series.frames.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        FrameFeatures& f = sample.series.frames[t];
        f.confidence = 1.0;
        f.valence = std::clamp(ch.valence[t], -1.0, 1.0);
        f.arousal = std::clamp(ch.arousal[t], -1.0, 1.0);
        f.au45 = std::max(ch.au45[t], 0.0);
        f.gaze_x = ch.gaze_x[t];
        f.gaze_y = ch.gaze_y[t];
        f.head_x = ch.head_x[t];
        f.head_y = ch.head_y[t];
        f.head_z = ch.head_z[t];
        f.pitch = ch.pitch[t];
        f.yaw = ch.yaw[t];
        f.roll = ch.roll[t];
    }
    return sample;
}

}  // namespace

LabeledSample gen_engaged(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t T = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fps));
    Channels ch = engaged_baseline(cfg, T);
    LabeledSample s = assemble(cfg, ch, T);
    s.label = Label::engaged;
    return s;
}

LabeledSample gen_disengaged(const SynthConfig& cfg) {
    cfg.validate();
    if (cfg.anomaly_types.empty())
        throw ConfigError("gen_disengaged: at least one anomaly type is required");
    const std::size_t T = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fps));
    Channels ch = engaged_baseline(cfg, T);
    LabeledSample s;
    for (AnomalyType a : cfg.anomaly_types) {
        inject(ch, a, cfg, T);
        s.anomalies.push_back(a);
    }
    LabeledSample out = assemble(cfg, ch, T);
    out.label = Label::disengaged;
    out.anomalies = std::move(s.anomalies);
    return out;
}

std::vector<ManifestEntry> gen_dataset(const SynthConfig& cfg,
                                       const DatasetCounts& counts,
                                       const std::string& out_dir) {
    cfg.validate();
    if ((counts.disengaged_test > 0 || counts.disengaged_train > 0) &&
        cfg.anomaly_types.empty())
        throw ConfigError("gen_dataset: disengaged samples need at least one anomaly type");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::vector<ManifestEntry> manifest;
    std::size_t index = 0;
    auto emit = [&](Label label, const std::string& split) {
        SynthConfig sample_cfg = cfg;
        sample_cfg.seed = Rng::derive_seed(cfg.seed, index);
        LabeledSample sample;
        if (label == Label::engaged) {
            sample = gen_engaged(sample_cfg);
        } else {
            // draw 1-3 anomaly types from the configured set
            Rng pick(Rng::derive_seed(cfg.seed, 0x7000 + index));
            std::vector<AnomalyType> pool(cfg.anomaly_types.begin(),
                                          cfg.anomaly_types.end());
            std::size_t want = std::min<std::size_t>(pool.size(), 1 + pick.below(3));
            // deterministic partial Fisher-Yates
            for (std::size_t i = 0; i < want; ++i)
                std::swap(pool[i], pool[i + pick.below(pool.size() - i)]);
            sample_cfg.anomaly_types.clear();
            sample_cfg.anomaly_types.insert(pool.begin(), pool.begin() +
                                            static_cast<std::ptrdiff_t>(want));
            sample = gen_disengaged(sample_cfg);
        }
        ManifestEntry e;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "s%05zu", index);
        e.id = idbuf;
        sample.series.id = e.id;
        e.path = e.id + ".csv";
        e.label = label;
        e.split = split;
        e.anomalies = sample.anomalies;
        write_frame_csv((fs::path(out_dir) / e.path).string(), sample.series);
        manifest.push_back(std::move(e));
        ++index;
    };

    for (std::size_t i = 0; i < counts.engaged_train; ++i) emit(Label::engaged, "train");
    for (std::size_t i = 0; i < counts.disengaged_train; ++i)
        emit(Label::disengaged, "train");
    for (std::size_t i = 0; i < counts.engaged_test; ++i) emit(Label::engaged, "test");
    for (std::size_t i = 0; i < counts.disengaged_test; ++i)
        emit(Label::disengaged, "test");

    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
    return manifest;
}

}  // namespace engae
