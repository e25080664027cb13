// engae: disengagement-detection experiment pipeline.
// Subcommands: synth, features, train, score, eval, grid.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "engae/detect.hpp"
#include "engae/io.hpp"
#include "engae/synth.hpp"

namespace fs = std::filesystem;
using namespace engae;

namespace {

struct ModelFlags {
    std::string arch = "tcn_ae";
    std::size_t levels = 8, hidden = 24, kernel = 8, pool = 4, bottleneck = 64;
    std::size_t seq_len = 0;  // 0 = infer from the training data
    double dropout = 0.05;
    std::string upsample = "nearest";
    bool ff_per_frame = false;
};

struct TrainFlags {
    double lr = 1e-3, decay = 0.99;
    std::size_t epochs = 100, batch = 32;
    std::uint64_t seed = 7;
    std::string loss;  // empty = mse for AEs, bce for classifiers
    double weight_pos = 0.0;
};

struct DataFlags {
    std::string manifest;
    std::string level = "frame";
    std::string features = "behavioral+affect";
    double fps = 30.0;
    double min_confidence = 0.5;
    double blink_threshold = kDefaultBlinkThreshold;
    double window_s = 10.0;
    double overlap = 0.5;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m, bool with_arch = true) {
    if (with_arch)
        cmd->add_option("--arch", m.arch,
                        "tcn_ae|lstm_ae|ff_ae|tcn_bc|lstm_bc|ff_bc");
    cmd->add_option("--levels", m.levels, "TCN levels L");
    cmd->add_option("--hidden", m.hidden, "hidden units h");
    cmd->add_option("--kernel", m.kernel, "kernel size k");
    cmd->add_option("--dropout", m.dropout, "dropout probability p");
    cmd->add_option("--pool", m.pool, "pool factor d");
    cmd->add_option("--bottleneck", m.bottleneck, "bottleneck dim b");
    cmd->add_option("--seq-len", m.seq_len, "sequence length T (0 = infer)");
    cmd->add_option("--upsample", m.upsample, "nearest|linear");
    cmd->add_flag("--ff-per-frame", m.ff_per_frame,
                  "feedforward models act per frame instead of flattened");
}

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
    cmd->add_option("--lr", t.lr, "learning rate");
    cmd->add_option("--decay", t.decay, "per-epoch lr decay factor");
    cmd->add_option("--epochs", t.epochs, "training epochs");
    cmd->add_option("--batch", t.batch, "batch size");
    cmd->add_option("--seed", t.seed, "training seed");
    cmd->add_option("--loss", t.loss, "mse|bce|weighted_bce");
    cmd->add_option("--weight-pos", t.weight_pos,
                    "positive-class weight (0 = N_neg/N_pos)");
}

void add_data_flags(CLI::App* cmd, DataFlags& d) {
    cmd->add_option("--manifest", d.manifest, "dataset manifest (json-lines)")
        ->required();
    cmd->add_option("--level", d.level, "frame|segment");
    cmd->add_option("--features", d.features, "behavioral|behavioral+affect");
    cmd->add_option("--fps", d.fps, "frames per second");
    cmd->add_option("--min-confidence", d.min_confidence, "imputation threshold");
    cmd->add_option("--blink-threshold", d.blink_threshold, "AU45 peak threshold");
    cmd->add_option("--window", d.window_s, "segment window (seconds)");
    cmd->add_option("--overlap", d.overlap, "segment window overlap fraction");
}

LoadOptions load_options(const DataFlags& d) {
    LoadOptions o;
    o.mode = feature_mode_from_name(d.features);
    o.level = feature_level_from_name(d.level);
    o.fps = d.fps;
    o.min_confidence = d.min_confidence;
    o.blink_threshold = d.blink_threshold;
    o.window_s = d.window_s;
    o.overlap = d.overlap;
    return o;
}

ModelConfig model_config(const ModelFlags& m, std::size_t T, std::size_t n) {
    ModelConfig cfg;
    cfg.arch = arch_from_name(m.arch);
    cfg.n = n;
    cfg.T = m.seq_len ? m.seq_len : T;
    cfg.L = m.levels;
    cfg.h = m.hidden;
    cfg.k = m.kernel;
    cfg.p = m.dropout;
    cfg.d = m.pool;
    cfg.b = m.bottleneck;
    if (m.upsample == "nearest") cfg.upsample = UpsampleMode::nearest;
    else if (m.upsample == "linear") cfg.upsample = UpsampleMode::linear;
    else throw ConfigError("unknown upsample mode: " + m.upsample);
    cfg.ff_per_frame = m.ff_per_frame;
    return cfg;
}

std::string run_digest(const ModelConfig& mc, const TrainFlags& t, const DataFlags& d) {
    std::ostringstream ss;
    ss << arch_name(mc.arch) << "|n=" << mc.n << "|T=" << mc.T << "|L=" << mc.L
       << "|h=" << mc.h << "|k=" << mc.k << "|p=" << mc.p << "|d=" << mc.d
       << "|b=" << mc.b << "|lr=" << t.lr << "|decay=" << t.decay
       << "|epochs=" << t.epochs << "|batch=" << t.batch << "|seed=" << t.seed
       << "|loss=" << t.loss << "|wp=" << t.weight_pos << "|level=" << d.level
       << "|features=" << d.features;
    return digest(ss.str());
}

std::vector<LoadedSample> engaged_only(const std::vector<LoadedSample>& in) {
    std::vector<LoadedSample> out;
    for (const auto& s : in)
        if (s.label == Label::engaged) out.push_back(s);
    return out;
}

TrainConfig train_config(const TrainFlags& t, bool is_ae) {
    TrainConfig cfg;
    cfg.lr = t.lr;
    cfg.decay = t.decay;
    cfg.epochs = t.epochs;
    cfg.batch_size = t.batch;
    cfg.seed = t.seed;
    cfg.loss = t.loss.empty() ? (is_ae ? LossKind::mse : LossKind::bce)
                              : loss_from_name(t.loss);
    cfg.weight_pos = t.weight_pos;
    return cfg;
}

struct TrainedArtifacts {
    Model model;
    Normalizer normalizer;
    std::vector<double> history;
};

// Shared train pipeline: load split, fit normalizer on engaged train samples,
// normalize, train the requested architecture.
TrainedArtifacts run_training(const DataFlags& d, const ModelFlags& m,
                              const TrainFlags& t) {
    auto manifest = read_manifest(d.manifest);
    std::string dir = fs::path(d.manifest).parent_path().string();
    auto opts = load_options(d);
    auto train_samples = load_split(manifest, dir, "train", opts);
    if (train_samples.empty()) throw InputError("train split is empty");

    Arch arch = arch_from_name(m.arch);
    bool is_ae = arch_is_ae(arch);
    if (is_ae) {
        for (const auto& s : train_samples)
            if (s.label != Label::engaged)
                throw ProtocolError("autoencoder training set contains disengaged sample '" +
                                    s.id + "'");
    }

    auto engaged = engaged_only(train_samples);
    if (engaged.empty()) throw InputError("no engaged samples to fit normalization");
    std::vector<SeqTensor> tensors;
    for (const auto& s : engaged) tensors.push_back(s.tensor);
    const auto& cols = opts.level == FeatureLevel::frame
                           ? frame_feature_columns(opts.mode)
                           : segment_feature_columns(opts.mode);
    Normalizer nz = Normalizer::fit(tensors, cols);
    normalize_samples(train_samples, nz);

    std::size_t T = train_samples.front().tensor.rows();
    std::size_t n = train_samples.front().tensor.cols();
    ModelConfig mc = model_config(m, T, n);
    TrainConfig tc = train_config(t, is_ae);

    TrainedArtifacts art{Model::build(mc, tc.seed), std::move(nz), {}};
    art.history = is_ae ? train_ae(art.model, train_samples, tc)
                        : train_bc(art.model, train_samples, tc);
    return art;
}

EvalReport run_eval(Model& model, const Normalizer& nz, const DataFlags& d,
                    const std::string& eval_split, const std::string& threshold_split,
                    const ThresholdSpec& spec, const std::string& config_digest) {
    auto manifest = read_manifest(d.manifest);
    std::string dir = fs::path(d.manifest).parent_path().string();
    auto opts = load_options(d);

    auto thr_samples = engaged_only(load_split(manifest, dir, threshold_split, opts));
    if (thr_samples.empty())
        throw InputError("no engaged samples in split '" + threshold_split +
                         "' for threshold selection");
    normalize_samples(thr_samples, nz);
    double threshold = select_threshold(score(model, thr_samples), spec);

    auto test_samples = load_split(manifest, dir, eval_split, opts);
    if (test_samples.empty()) throw InputError("split '" + eval_split + "' is empty");
    normalize_samples(test_samples, nz);
    return evaluate(model, test_samples, threshold, spec.to_string(), config_digest);
}

void write_curves(const EvalReport& report, const std::string& prefix) {
    auto dump = [](const std::vector<CurvePoint>& pts, const std::string& path,
                   const char* hx, const char* hy) {
        std::ostringstream out;
        out << hx << "," << hy << "\n";
        for (const auto& p : pts) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", p.x, p.y);
            out << buf;
        }
        write_text_atomic(path, out.str());
    };
    dump(roc_curve(report.scores), prefix + ".roc.csv", "fpr", "tpr");
    dump(pr_curve(report.scores), prefix + ".pr.csv", "recall", "precision");
}

nlohmann::json history_json(const std::vector<double>& history) {
    auto arr = nlohmann::json::array();
    for (double v : history) arr.push_back(v);
    return arr;
}

// ------------------------------------------------------------------- commands

int cmd_synth(const SynthConfig& cfg, const DatasetCounts& counts,
              const std::string& out_dir) {
    auto manifest = gen_dataset(cfg, counts, out_dir);
    std::size_t engaged = 0, disengaged = 0;
    for (const auto& e : manifest)
        (e.label == Label::engaged ? engaged : disengaged)++;
    std::cout << (fs::path(out_dir) / "manifest.jsonl").string() << "\n"
              << "samples: " << manifest.size() << " (" << engaged << " engaged, "
              << disengaged << " disengaged)\n";
    return 0;
}

int cmd_features(const DataFlags& d, const std::string& out_dir) {
    auto manifest = read_manifest(d.manifest);
    std::string dir = fs::path(d.manifest).parent_path().string();
    auto mode = feature_mode_from_name(d.features);
    fs::create_directories(out_dir);
    for (const auto& e : manifest) {
        fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path)
                                                    : fs::path(dir) / e.path;
        FrameSeries series = read_frame_csv(p.string(), d.fps);
        series = impute(series, d.min_confidence).series;
        auto windows = window(series, d.window_s, d.overlap);
        std::vector<SegmentFeatures> rows;
        rows.reserve(windows.size());
        for (const auto& w : windows)
            rows.push_back(segment_features(w, d.blink_threshold, mode));
        write_segment_csv((fs::path(out_dir) / (e.id + ".segments.csv")).string(), rows);
    }
    std::cout << out_dir << ": " << manifest.size() << " segment files\n";
    return 0;
}

int cmd_train(const DataFlags& d, const ModelFlags& m, const TrainFlags& t,
              const std::string& out_prefix) {
    auto art = run_training(d, m, t);
    art.model.save_checkpoint(out_prefix + ".ckpt");
    write_text_atomic(out_prefix + ".stats.json", art.normalizer.to_json());

    nlohmann::json log;
    log["arch"] = m.arch;
    log["loss_history"] = history_json(art.history);
    log["config_digest"] = run_digest(art.model.config(), t, d);
    write_text_atomic(out_prefix + ".log.json", log.dump(2));

    std::cout << out_prefix << ".ckpt\n";
    if (!art.history.empty())
        std::cout << "loss: " << art.history.front() << " -> " << art.history.back()
                  << " over " << art.history.size() << " epochs\n";
    return 0;
}

int cmd_score(const DataFlags& d, const std::string& ckpt, const std::string& stats,
              const std::string& split, const std::string& out_path) {
    Model model = Model::load_checkpoint(ckpt);
    Normalizer nz = Normalizer::from_json(read_text(stats));
    auto manifest = read_manifest(d.manifest);
    std::string dir = fs::path(d.manifest).parent_path().string();
    auto samples = load_split(manifest, dir, split, load_options(d));
    if (samples.empty()) throw InputError("split '" + split + "' is empty");
    normalize_samples(samples, nz);
    auto scores = score(model, samples);

    auto arr = nlohmann::json::array();
    for (const auto& e : scores)
        arr.push_back({{"id", e.id}, {"score", e.score}, {"label", label_name(e.label)}});
    std::string text = nlohmann::json{{"scores", arr}}.dump(2);
    if (out_path.empty()) std::cout << text << "\n";
    else write_text_atomic(out_path, text);
    return 0;
}

int cmd_eval(const DataFlags& d, const std::string& ckpt, const std::string& stats,
             const std::string& split, const std::string& threshold_split,
             const std::string& threshold_method, const std::string& out_path,
             const std::string& curves_prefix) {
    Model model = Model::load_checkpoint(ckpt);
    Normalizer nz = Normalizer::from_json(read_text(stats));
    ThresholdSpec spec = ThresholdSpec::parse(threshold_method);
    std::ostringstream cfg_ss;
    cfg_ss << "eval|" << arch_name(model.config().arch) << "|" << d.level << "|"
           << d.features << "|" << spec.to_string();
    EvalReport report =
        run_eval(model, nz, d, split, threshold_split, spec, digest(cfg_ss.str()));
    std::string text = report.to_json();
    if (out_path.empty()) std::cout << text << "\n";
    else write_text_atomic(out_path, text);
    if (!curves_prefix.empty()) write_curves(report, curves_prefix);
    return 0;
}

struct GridCell {
    std::string arch;
    std::string features;
    bool weighted = false;
    EvalReport report;
    bool done = false;
};

int cmd_grid(const DataFlags& d_base, const ModelFlags& m_base, const TrainFlags& t_base,
             const std::string& threshold_method, const std::string& out_prefix,
             std::size_t jobs) {
    if (const char* env = std::getenv("ENGAE_THREADS")) {
        std::size_t cap = std::strtoull(env, nullptr, 10);
        if (cap > 0) jobs = std::min(jobs, cap);
    }
    if (jobs == 0) jobs = 1;

    const std::vector<std::pair<std::string, bool>> archs = {
        {"ff_ae", false}, {"ff_bc", false},  {"lstm_ae", false}, {"lstm_bc", false},
        {"tcn_ae", false}, {"tcn_bc", false}, {"tcn_bc", true}};
    std::vector<GridCell> cells;
    for (const char* feat : {"behavioral", "behavioral+affect"})
        for (const auto& [arch, weighted] : archs)
            cells.push_back({arch, feat, weighted, {}, false});
    for (const auto& c : cells) arch_from_name(c.arch);  // validate before training

    ThresholdSpec spec = ThresholdSpec::parse(threshold_method);
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            GridCell& cell = cells[i];
            try {
                DataFlags d = d_base;
                d.features = cell.features;
                ModelFlags m = m_base;
                m.arch = cell.arch;
                TrainFlags t = t_base;
                if (cell.weighted) t.loss = "weighted_bce";
                auto art = run_training(d, m, t);
                std::ostringstream cfg_ss;
                cfg_ss << "grid|" << cell.arch << (cell.weighted ? "+weighted" : "")
                       << "|" << cell.features;
                cell.report = run_eval(art.model, art.normalizer, d, "test", "train",
                                       spec, digest(cfg_ss.str()));
                cell.done = true;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (first_error.empty())
                    first_error = cell.arch + (cell.weighted ? "+weighted" : "") + " / " +
                                  cell.features + ": " + e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < std::min(jobs, cells.size()); ++i)
        pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (!first_error.empty()) throw std::runtime_error("grid cell failed: " + first_error);

    std::ostringstream csv;
    csv << "features,model,auc_roc,auc_pr,pr_baseline\n";
    auto table = nlohmann::json::array();
    for (const auto& c : cells) {
        std::string name = c.arch + (c.weighted ? "+weighted" : "");
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f\n", c.features.c_str(),
                      name.c_str(), c.report.auc_roc, c.report.auc_pr,
                      c.report.pr_baseline);
        csv << buf;
        table.push_back({{"features", c.features},
                         {"model", name},
                         {"auc_roc", c.report.auc_roc},
                         {"auc_pr", c.report.auc_pr},
                         {"pr_baseline", c.report.pr_baseline}});
    }
    write_text_atomic(out_prefix + ".csv", csv.str());
    write_text_atomic(out_prefix + ".json", nlohmann::json{{"grid", table}}.dump(2));
    std::cout << out_prefix << ".csv\n" << csv.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"disengagement detection via sequence autoencoders"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    SynthConfig synth_cfg;
    DatasetCounts counts;
    std::string synth_out = "dataset";
    std::vector<std::string> anomaly_names_flag;
    synth_cmd->add_option("--seed", synth_cfg.seed, "master seed");
    synth_cmd->add_option("--fps", synth_cfg.fps, "frames per second");
    synth_cmd->add_option("--duration", synth_cfg.duration_s, "sample length (seconds)");
    synth_cmd->add_option("--intensity", synth_cfg.anomaly_intensity, "anomaly intensity");
    synth_cmd->add_option("--noise-std", synth_cfg.noise_std, "jitter scale");
    synth_cmd->add_option("--anomalies", anomaly_names_flag,
                          "anomaly types (gaze_away high_blink negative_affect "
                          "head_motion eye_closure)");
    synth_cmd->add_option("--engaged-train", counts.engaged_train, "");
    synth_cmd->add_option("--engaged-test", counts.engaged_test, "");
    synth_cmd->add_option("--disengaged-test", counts.disengaged_test, "");
    synth_cmd->add_option("--disengaged-train", counts.disengaged_train, "");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    // features
    auto* features_cmd = app.add_subcommand("features", "derive segment-level features");
    DataFlags feat_data;
    std::string features_out = "segments";
    add_data_flags(features_cmd, feat_data);
    features_cmd->add_option("--out", features_out, "output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    DataFlags train_data;
    ModelFlags train_model;
    TrainFlags train_train;
    std::string train_out = "model";
    add_data_flags(train_cmd, train_data);
    add_model_flags(train_cmd, train_model);
    add_train_flags(train_cmd, train_train);
    train_cmd->add_option("--out", train_out, "output prefix");

    // score
    auto* score_cmd = app.add_subcommand("score", "score samples with a checkpoint");
    DataFlags score_data;
    std::string score_ckpt, score_stats, score_split = "test", score_out;
    add_data_flags(score_cmd, score_data);
    score_cmd->add_option("--checkpoint", score_ckpt, "model checkpoint")->required();
    score_cmd->add_option("--stats", score_stats, "normalization sidecar")->required();
    score_cmd->add_option("--split", score_split, "manifest split");
    score_cmd->add_option("--out", score_out, "output json (default stdout)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    DataFlags eval_data;
    std::string eval_ckpt, eval_stats, eval_split = "test";
    std::string eval_thr_split = "train", eval_thr_method = "percentile(99)";
    std::string eval_out, eval_curves;
    add_data_flags(eval_cmd, eval_data);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--stats", eval_stats, "normalization sidecar")->required();
    eval_cmd->add_option("--split", eval_split, "evaluation split");
    eval_cmd->add_option("--threshold-split", eval_thr_split,
                         "split whose engaged scores pick the threshold");
    eval_cmd->add_option("--threshold-method", eval_thr_method,
                         "max | percentile(q) | mean_plus_k_std(k)");
    eval_cmd->add_option("--out", eval_out, "report json (default stdout)");
    eval_cmd->add_option("--curves", eval_curves, "prefix for roc/pr point csvs");

    // grid
    auto* grid_cmd = app.add_subcommand("grid", "model-comparison grid");
    DataFlags grid_data;
    ModelFlags grid_model;
    TrainFlags grid_train;
    std::string grid_out = "grid", grid_thr_method = "percentile(99)";
    std::size_t grid_jobs = 1;
    add_data_flags(grid_cmd, grid_data);
    add_model_flags(grid_cmd, grid_model, /*with_arch=*/false);
    add_train_flags(grid_cmd, grid_train);
    grid_cmd->add_option("--threshold-method", grid_thr_method, "");
    grid_cmd->add_option("--out", grid_out, "output prefix");
    grid_cmd->add_option("--jobs", grid_jobs, "parallel grid cells");

    for (CLI::App* sub : {synth_cmd, features_cmd, train_cmd, score_cmd, eval_cmd, grid_cmd})
        sub->set_config("--config", "", "flat key=value config file; flags win");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            if (!anomaly_names_flag.empty()) {
                synth_cfg.anomaly_types.clear();
                for (const auto& a : anomaly_names_flag)
                    synth_cfg.anomaly_types.insert(anomaly_from_name(a));
            }
            return cmd_synth(synth_cfg, counts, synth_out);
        }
        if (features_cmd->parsed()) return cmd_features(feat_data, features_out);
        if (train_cmd->parsed())
            return cmd_train(train_data, train_model, train_train, train_out);
        if (score_cmd->parsed())
            return cmd_score(score_data, score_ckpt, score_stats, score_split, score_out);
        if (eval_cmd->parsed())
            return cmd_eval(eval_data, eval_ckpt, eval_stats, eval_split, eval_thr_split,
                            eval_thr_method, eval_out, eval_curves);
        if (grid_cmd->parsed())
            return cmd_grid(grid_data, grid_model, grid_train, grid_thr_method, grid_out,
                            grid_jobs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
