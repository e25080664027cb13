#include "engae/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace engae {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFrameCsvHeader = {
    "frame", "confidence", "valence", "arousal", "au45", "gaze_x", "gaze_y",
    "head_x", "head_y", "head_z", "pitch", "yaw", "roll"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_real(const std::string& cell, const std::string& path,
                  std::size_t line_no, const std::string& column) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": non-numeric value '" + cell + "' in column " + column);
    if (!std::isfinite(v))
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": non-finite value in column " + column);
    return v;
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw FormatError("cannot open for writing: " + tmp);
        f << content;
        if (!f) throw FormatError("write failure: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw FormatError("cannot rename into place: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

FrameSeries read_frame_csv(const std::string& path, double fps) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() != kFrameCsvHeader.size()) {
        throw FormatError(path + ": expected " +
                          std::to_string(kFrameCsvHeader.size()) + " columns, got " +
                          std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] != kFrameCsvHeader[c])
            throw FormatError(path + ": unexpected column '" + header[c] +
                              "' (expected '" + kFrameCsvHeader[c] + "')");

    FrameSeries series;
    series.fps = fps;
    series.id = fs::path(path).stem().string();
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != kFrameCsvHeader.size())
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": wrong cell count " + std::to_string(cells.size()));
        FrameFeatures ff;
        std::size_t c = 0;
        parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;  // frame index
        ff.confidence = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.valence = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.arousal = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.au45 = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.gaze_x = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.gaze_y = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.head_x = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.head_y = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.head_z = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.pitch = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.yaw = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]); ++c;
        ff.roll = parse_real(cells[c], path, line_no, kFrameCsvHeader[c]);
        series.frames.push_back(ff);
    }
    if (series.frames.empty()) throw FormatError(path + ": no data rows");
    return series;
}

void write_frame_csv(const std::string& path, const FrameSeries& series) {
    std::ostringstream out;
    for (std::size_t c = 0; c < kFrameCsvHeader.size(); ++c)
        out << (c ? "," : "") << kFrameCsvHeader[c];
    out << "\n";
    for (std::size_t t = 0; t < series.frames.size(); ++t) {
        const FrameFeatures& f = series.frames[t];
        out << t << "," << format_real(f.confidence) << "," << format_real(f.valence)
            << "," << format_real(f.arousal) << "," << format_real(f.au45) << ","
            << format_real(f.gaze_x) << "," << format_real(f.gaze_y) << ","
            << format_real(f.head_x) << "," << format_real(f.head_y) << ","
            << format_real(f.head_z) << "," << format_real(f.pitch) << ","
            << format_real(f.yaw) << "," << format_real(f.roll) << "\n";
    }
    write_text_atomic(path, out.str());
}

void write_segment_csv(const std::string& path,
                       const std::vector<SegmentFeatures>& rows) {
    if (rows.empty()) throw InputError("write_segment_csv: no rows");
    const auto& cols = segment_feature_columns(rows.front().mode);
    std::ostringstream out;
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << "\n";
    for (const auto& seg : rows) {
        if (cols.size() != seg.values.size())
            throw InputError("write_segment_csv: value count does not match schema");
        for (std::size_t c = 0; c < seg.values.size(); ++c)
            out << (c ? "," : "") << format_real(seg.values[c]);
        out << "\n";
    }
    write_text_atomic(path, out.str());
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": malformed json: " + e.what());
        }
        ManifestEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.path = j.at("path").get<std::string>();
            e.label = label_from_name(j.at("label").get<std::string>());
            e.split = j.at("split").get<std::string>();
            for (const auto& a : j.at("anomaly_types"))
                e.anomalies.push_back(anomaly_from_name(a.get<std::string>()));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + ex.what());
        }
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": unknown split '" + e.split + "'");
        if (!seen.insert(e.id).second)
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": duplicate id '" + e.id + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ostringstream out;
    for (const auto& e : entries) {
        nlohmann::json j;
        j["id"] = e.id;
        j["path"] = e.path;
        j["label"] = label_name(e.label);
        j["split"] = e.split;
        auto arr = nlohmann::json::array();
        for (AnomalyType a : e.anomalies) arr.push_back(anomaly_name(a));
        j["anomaly_types"] = arr;
        out << j.dump() << "\n";
    }
    write_text_atomic(path, out.str());
}

FeatureLevel feature_level_from_name(const std::string& s) {
    if (s == "frame") return FeatureLevel::frame;
    if (s == "segment") return FeatureLevel::segment;
    throw ConfigError("unknown feature level: " + s + " (expected frame or segment)");
}

std::string feature_level_name(FeatureLevel l) {
    return l == FeatureLevel::frame ? "frame" : "segment";
}

std::vector<LoadedSample> load_split(const std::vector<ManifestEntry>& manifest,
                                     const std::string& manifest_dir,
                                     const std::string& split,
                                     const LoadOptions& opts) {
    std::vector<LoadedSample> out;
    for (const auto& e : manifest) {
        if (e.split != split) continue;
        fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path)
                                                    : fs::path(manifest_dir) / e.path;
        FrameSeries series = read_frame_csv(p.string(), opts.fps);
        series = impute(series, opts.min_confidence).series;
        LoadedSample s;
        s.id = e.id;
        s.label = e.label;
        if (opts.level == FeatureLevel::frame) {
            s.tensor = select_features(series, opts.mode);
        } else {
            auto windows = window(series, opts.window_s, opts.overlap);
            if (windows.empty())
                throw InputError(e.id + ": shorter than one window");
            const std::size_t width = segment_feature_columns(opts.mode).size();
            SeqTensor t(windows.size(), width);
            for (std::size_t w = 0; w < windows.size(); ++w) {
                auto seg = segment_features(windows[w], opts.blink_threshold, opts.mode);
                for (std::size_t c = 0; c < width; ++c) t(w, c) = seg.values[c];
            }
            s.tensor = std::move(t);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void normalize_samples(std::vector<LoadedSample>& samples, const Normalizer& nz) {
    for (auto& s : samples) {
        if (s.normalized)
            throw ProtocolError("sample " + s.id + " is already normalized");
        s.tensor = nz.apply(s.tensor);
        s.normalized = true;
    }
}

}  // namespace engae
