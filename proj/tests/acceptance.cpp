// Release gate: one pass/fail line per criterion, nonzero exit on any failure.
//
//   1  gradient checks for every layer and both losses
//   2  causal convolutions cannot see the future
//   3  ranking metrics agree with brute-force oracles
//   4  feature extraction invariants
//   5  end-to-end synthetic benchmark (TCN-AE, 3 seeds)
//   6  autoencoders beat their classifier counterparts on AUC PR
//   7  adding affect features helps the TCN-AE
//   8  protocol enforcement and bit-level determinism
//   9  full-size configuration sanity

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <vector>

#include "engae/detect.hpp"
#include "engae/io.hpp"
#include "engae/synth.hpp"
#include "gradcheck.hpp"

using namespace engae;
using engae::testing::check_layer;
using engae::testing::numeric_grad;
using engae::testing::random_tensor;
using engae::testing::rel_err;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int idx, const std::string& what, bool ok, const std::string& detail) {
    std::printf("[%d/9] %-58s %s%s%s\n", idx, what.c_str(), ok ? "PASS" : "FAIL",
                detail.empty() ? "" : "  ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ------------------------------------------------------------- criterion 1

void criterion_gradients() {
    auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;

    for (int i = 0; i < 10; ++i) {
        std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(4);
        std::size_t k = 2 + rng.below(3), q = 1 << rng.below(3);
        std::size_t T = 6 + rng.below(7);
        CausalConv1d conv(cin, cout, k, q, rng);
        worst = std::max(worst, check_layer(conv, random_tensor(T, cin, rng)));

        Dense dense(1 + rng.below(5), 1 + rng.below(5), rng);
        worst = std::max(worst,
                         check_layer(dense, random_tensor(2 + rng.below(6),
                                                          dense.din(), rng)));

        std::size_t factor = 2 + rng.below(2);
        AvgPoolTime pool(factor);
        worst = std::max(worst,
                         check_layer(pool, random_tensor(factor * (2 + rng.below(3)),
                                                         1 + rng.below(4), rng)));

        UpsampleTime up_n(factor, UpsampleMode::nearest);
        worst = std::max(worst, check_layer(up_n, random_tensor(2 + rng.below(4),
                                                                1 + rng.below(4), rng)));
        UpsampleTime up_l(factor, UpsampleMode::linear);
        worst = std::max(worst, check_layer(up_l, random_tensor(2 + rng.below(4),
                                                                1 + rng.below(4), rng)));

        std::size_t lstm_in = 1 + rng.below(4);
        Lstm lstm(lstm_in, 2 + rng.below(4), rng);
        worst = std::max(worst,
                         check_layer(lstm, random_tensor(4 + rng.below(5), lstm_in, rng)));

        Dropout drop(0.3, 7);  // eval mode inside check_layer: identity
        worst = std::max(worst, check_layer(drop, random_tensor(4, 3, rng)));

        std::size_t block_in = 1 + rng.below(3);
        ResidualBlock block(block_in, 1 + rng.below(3), 2 + rng.below(2), q, 0.0, rng, 7);
        worst = std::max(worst,
                         check_layer(block, random_tensor(5 + rng.below(4), block_in, rng)));
    }

    for (int i = 0; i < 10; ++i) {
        std::size_t T = 2 + rng.below(5), C = 1 + rng.below(4);
        SeqTensor x = random_tensor(T, C, rng);
        SeqTensor xhat = random_tensor(T, C, rng);
        SeqTensor g = mse_loss_grad(x, xhat);
        for (std::size_t j = 0; j < xhat.size(); ++j) {
            double fd = numeric_grad([&]() { return mse_loss(x, xhat); },
                                     &xhat.data()[j]);
            worst = std::max(worst, rel_err(g.data()[j], fd));
        }

        double p = rng.uniform(0.02, 0.98);
        int y = static_cast<int>(rng.below(2));
        double w = rng.uniform(0.5, 25.0);
        double fd = numeric_grad([&]() { return bce_loss(p, y, w); }, &p);
        worst = std::max(worst, rel_err(bce_loss_grad(p, y, w), fd));
    }

    double elapsed = seconds_since(t0);
    report(1, "gradients match finite differences (all layers, losses)",
           worst < 1e-4 && elapsed < 120.0,
           fmt("max rel err %.2e, %.0f s", worst, elapsed));
}

// ------------------------------------------------------------- criterion 2

void criterion_causality() {
    Rng rng(202);
    const std::size_t T = 300, C = 8, t_perturb = 200;
    bool ok = true;

    for (int trial = 0; trial < 20 && ok; ++trial) {
        std::vector<ResidualBlock> tcn;
        tcn.reserve(3);
        for (std::size_t level = 0; level < 3; ++level)
            tcn.emplace_back(C, C, 3, std::size_t(1) << level, 0.0, rng, 7);
        for (auto& b : tcn) b.set_mode(Mode::eval);
        auto forward = [&](SeqTensor x) {
            for (auto& b : tcn) x = b.forward(x);
            return x;
        };

        SeqTensor x = random_tensor(T, C, rng);
        SeqTensor base = forward(x);
        SeqTensor perturbed = x;
        for (std::size_t c = 0; c < C; ++c)
            perturbed(t_perturb, c) += rng.uniform(-2.0, 2.0);
        SeqTensor out = forward(perturbed);

        for (std::size_t t = 0; t < t_perturb && ok; ++t)
            for (std::size_t c = 0; c < C; ++c)
                if (out(t, c) != base(t, c)) ok = false;
    }
    report(2, "perturbing t=200 leaves TCN outputs at t<200 bit-identical", ok,
           "20 trials");
}

// ------------------------------------------------------------- criterion 3

double pairwise_auc(const ScoreSet& s) {
    double num = 0.0;
    std::size_t np = 0, nn = 0;
    for (const auto& e : s) (e.label == Label::disengaged ? np : nn)++;
    for (const auto& p : s) {
        if (p.label != Label::disengaged) continue;
        for (const auto& n : s) {
            if (n.label != Label::engaged) continue;
            if (p.score > n.score) num += 1.0;
            else if (p.score == n.score) num += 0.5;
        }
    }
    return num / (static_cast<double>(np) * static_cast<double>(nn));
}

void criterion_metric_oracles() {
    Rng rng(303);
    double worst = 0.0;

    for (int trial = 0; trial < 100; ++trial) {
        std::size_t size = 2 + rng.below(199);
        ScoreSet s;
        for (std::size_t i = 0; i < size; ++i) {
            bool pos = i == 0 || (i != 1 && rng.uniform() < 0.3);
            s.push_back({"s" + std::to_string(i),
                         static_cast<double>(rng.below(12)) * 0.25,
                         pos ? Label::disengaged : Label::engaged});
        }
        double want = pairwise_auc(s);
        worst = std::max(worst, std::abs(roc_auc(s) - want));
        worst = std::max(worst, std::abs(roc_auc_trapezoid(s) - want));
    }
    bool rank_ok = worst < 1e-12;

    ScoreSet perfect;
    for (int i = 0; i < 40; ++i)
        perfect.push_back({"p" + std::to_string(i), i < 20 ? 0.1 * i : 10.0 + i,
                           i < 20 ? Label::engaged : Label::disengaged});
    bool perfect_ok = pr_auc(perfect) == 1.0;

    std::vector<double> aps;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng r(Rng::derive_seed(303, seed));
        ScoreSet s;
        for (int i = 0; i < 1000; ++i)
            s.push_back({"r" + std::to_string(i), r.uniform(),
                         i < 50 ? Label::disengaged : Label::engaged});
        aps.push_back(pr_auc(s));
    }
    std::sort(aps.begin(), aps.end());
    double median_ap = (aps[9] + aps[10]) / 2.0;
    bool ap_ok = std::abs(median_ap - 0.05) <= 0.05;

    report(3, "roc_auc / pr_auc match brute-force oracles", rank_ok && perfect_ok && ap_ok,
           fmt("max |diff| %.1e, random-scorer AP %.3f", worst, median_ap));
}

// ------------------------------------------------------------- criterion 4

void criterion_features() {
    FrameSeries s;
    s.fps = 30.0;
    FrameFeatures f;
    f.valence = 0.3;
    f.arousal = 0.2;
    f.au45 = 0.1;
    s.frames.assign(300, f);

    bool widths = segment_features(s).values.size() == 37 &&
                  segment_features(s, 1.0, FeatureMode::behavioral).values.size() == 33;

    std::vector<double> au(300, 0.0);
    for (std::size_t c : {50u, 150u, 250u}) {
        au[c - 1] = 1.0;
        au[c] = 2.0;
        au[c + 1] = 1.0;
    }
    bool blink = blink_rate(au, 1.0) == 0.01;

    FrameSeries five_min = s;
    five_min.frames.assign(9000, f);
    bool windows = window(five_min, 10.0, 0.5).size() == 59;

    bool dynamics = true;
    SegmentFeatures seg = segment_features(s);
    const auto& cols = segment_feature_columns(FeatureMode::behavioral_affect);
    for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i].rfind("mean_", 0) == 0 || cols[i].rfind("std_", 0) == 0)
            if (cols[i].find("vel") != std::string::npos ||
                cols[i].find("acc") != std::string::npos)
                if (seg.values[i] != 0.0) dynamics = false;

    report(4, "feature invariants (37/33, blink 0.01, 59 windows, zeros)",
           widths && blink && windows && dynamics, "");
}

// ----------------------------------------------------- criteria 5, 6 and 7

struct BenchRun {
    fs::path dir;
    std::vector<ManifestEntry> manifest;
    double ae_roc = 0.0, ae_pr = 0.0;  // behavioral+affect tcn_ae
};

ModelConfig bench_tcn(Arch arch, std::size_t n) {
    ModelConfig mc;
    mc.arch = arch;
    mc.n = n;
    mc.T = 300;
    mc.L = 4;
    mc.h = 8;
    mc.k = 3;
    mc.p = 0.05;
    mc.d = 4;
    return mc;
}

ModelConfig bench_lstm(Arch arch, std::size_t n) {
    ModelConfig mc;
    mc.arch = arch;
    mc.n = n;
    mc.T = 300;
    mc.h = 16;
    mc.b = 8;
    mc.p = 0.05;
    return mc;
}

std::vector<LoadedSample> engaged_only(const std::vector<LoadedSample>& in) {
    std::vector<LoadedSample> out;
    for (const auto& s : in)
        if (s.label == Label::engaged) out.push_back(s);
    return out;
}

// Fits normalization on the engaged part of `train`, normalizes both splits,
// trains, and returns the AUC ROC / AUC PR pair on the test split.
std::pair<double, double> run_cell(const ModelConfig& mc, const TrainConfig& tc,
                                   std::vector<LoadedSample> train,
                                   std::vector<LoadedSample> test, FeatureMode mode) {
    auto engaged = engaged_only(train);
    std::vector<SeqTensor> tensors;
    for (const auto& s : engaged) tensors.push_back(s.tensor);
    Normalizer nz = Normalizer::fit(tensors, frame_feature_columns(mode));
    normalize_samples(train, nz);
    normalize_samples(test, nz);

    Model model = Model::build(mc, tc.seed);
    if (arch_is_ae(mc.arch)) train_ae(model, engaged_only(train), tc);
    else train_bc(model, train, tc);

    ScoreSet s = score(model, test);
    return {roc_auc(s), pr_auc(s)};
}

std::vector<LoadedSample> load_bench(const BenchRun& run, const std::string& split,
                                     FeatureMode mode) {
    LoadOptions opts;
    opts.mode = mode;
    return load_split(run.manifest, run.dir.string(), split, opts);
}

void criterion_benchmark(std::vector<BenchRun>& runs) {
    auto t0 = Clock::now();
    std::vector<double> rocs, prs;

    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        BenchRun run;
        run.dir = fs::temp_directory_path() / ("engae_bench_" + std::to_string(seed));
        fs::remove_all(run.dir);
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.anomaly_types = {AnomalyType::gaze_away, AnomalyType::negative_affect,
                             AnomalyType::high_blink};
        cfg.anomaly_intensity = 0.8;
        // 20 disengaged train samples are for the classifier comparison only;
        // autoencoder training filters to the 400 engaged ones.
        run.manifest = gen_dataset(cfg, {400, 100, 100, 20}, run.dir.string());

        TrainConfig tc;
        tc.epochs = 100;
        tc.seed = seed;
        auto [roc, pr] = run_cell(bench_tcn(Arch::tcn_ae, 11), tc,
                                  load_bench(run, "train", FeatureMode::behavioral_affect),
                                  load_bench(run, "test", FeatureMode::behavioral_affect),
                                  FeatureMode::behavioral_affect);
        run.ae_roc = roc;
        run.ae_pr = pr;
        rocs.push_back(roc);
        prs.push_back(pr);
        runs.push_back(std::move(run));
    }

    double roc_med = median3(rocs), pr_med = median3(prs);
    double elapsed = seconds_since(t0);
    report(5, "synthetic benchmark: TCN-AE AUC ROC >= 0.85, AUC PR >= 0.70",
           roc_med >= 0.85 && pr_med >= 0.70 && elapsed < 600.0,
           fmt("median ROC %.4f, PR %.4f over 3 seeds, %.0f s", roc_med, pr_med,
               elapsed));
}

void criterion_ae_beats_bc(const std::vector<BenchRun>& runs) {
    std::vector<double> ae_pr, tcn_bc_pr, tcn_bcw_pr, lstm_ae_pr, lstm_bc_pr;

    for (const auto& run : runs) {
        auto train = load_bench(run, "train", FeatureMode::behavioral_affect);
        auto test = load_bench(run, "test", FeatureMode::behavioral_affect);
        std::uint64_t seed = ae_pr.size() + 1;

        // classifier training set at 10% prevalence: 180 engaged + 20 disengaged
        std::vector<LoadedSample> bc_train;
        std::size_t engaged_kept = 0;
        for (const auto& s : train) {
            if (s.label == Label::engaged && engaged_kept < 180) {
                bc_train.push_back(s);
                ++engaged_kept;
            } else if (s.label == Label::disengaged) {
                bc_train.push_back(s);
            }
        }

        TrainConfig tc_bc;
        tc_bc.epochs = 100;
        tc_bc.seed = seed;
        tc_bc.loss = LossKind::bce;
        tcn_bc_pr.push_back(run_cell(bench_tcn(Arch::tcn_bc, 11), tc_bc, bc_train, test,
                                     FeatureMode::behavioral_affect)
                                .second);
        tc_bc.loss = LossKind::weighted_bce;
        tcn_bcw_pr.push_back(run_cell(bench_tcn(Arch::tcn_bc, 11), tc_bc, bc_train,
                                      test, FeatureMode::behavioral_affect)
                                 .second);

        TrainConfig tc_lstm;
        tc_lstm.epochs = 30;
        tc_lstm.seed = seed;
        lstm_ae_pr.push_back(run_cell(bench_lstm(Arch::lstm_ae, 11), tc_lstm, train,
                                      test, FeatureMode::behavioral_affect)
                                 .second);
        tc_lstm.loss = LossKind::bce;
        lstm_bc_pr.push_back(run_cell(bench_lstm(Arch::lstm_bc, 11), tc_lstm, bc_train,
                                      test, FeatureMode::behavioral_affect)
                                 .second);

        ae_pr.push_back(run.ae_pr);
    }

    double ae = median3(ae_pr), bc = median3(tcn_bc_pr), bcw = median3(tcn_bcw_pr);
    double lae = median3(lstm_ae_pr), lbc = median3(lstm_bc_pr);
    report(6, "AUC PR: TCN-AE > TCN-BC (plain, weighted); LSTM-AE > LSTM-BC",
           ae > bc && ae > bcw && lae > lbc,
           fmt("tcn %.4f vs %.4f/%.4f, lstm %.4f vs %.4f", ae, bc, bcw, lae, lbc));
}

void criterion_affect_ablation(const std::vector<BenchRun>& runs) {
    std::vector<double> with_affect, behavioral_only;
    for (const auto& run : runs) {
        std::uint64_t seed = with_affect.size() + 1;
        TrainConfig tc;
        tc.epochs = 100;
        tc.seed = seed;
        behavioral_only.push_back(
            run_cell(bench_tcn(Arch::tcn_ae, 9), tc,
                     load_bench(run, "train", FeatureMode::behavioral),
                     load_bench(run, "test", FeatureMode::behavioral),
                     FeatureMode::behavioral)
                .first);
        with_affect.push_back(run.ae_roc);
    }
    double wa = median3(with_affect), bo = median3(behavioral_only);
    report(7, "AUC ROC: behavioral+affect TCN-AE > behavioral-only", wa > bo,
           fmt("%.4f vs %.4f", wa, bo));
}

// ------------------------------------------------------------- criterion 8

void criterion_protocol_determinism() {
    bool ok = true;
    std::string detail;

    ModelConfig mc;
    mc.arch = Arch::ff_ae;
    mc.n = 11;
    mc.T = 300;
    mc.b = 4;
    mc.p = 0.05;

    auto make_samples = [](std::uint64_t seed, std::size_t count, bool engaged) {
        std::vector<LoadedSample> out;
        for (std::size_t i = 0; i < count; ++i) {
            SynthConfig cfg;
            cfg.seed = Rng::derive_seed(seed, i);
            LabeledSample s = engaged ? gen_engaged(cfg) : gen_disengaged(cfg);
            LoadedSample ls;
            ls.id = (engaged ? "e" : "d") + std::to_string(i);
            ls.tensor = select_features(s.series, FeatureMode::behavioral_affect);
            ls.label = engaged ? Label::engaged : Label::disengaged;
            out.push_back(std::move(ls));
        }
        return out;
    };
    auto train = make_samples(10, 12, true);
    auto test = make_samples(11, 6, true);
    auto dis = make_samples(12, 6, false);
    test.insert(test.end(), dis.begin(), dis.end());

    // protocol: AE training rejects disengaged, thresholds reject anomalies
    try {
        auto bad = train;
        bad[0].label = Label::disengaged;
        Model m = Model::build(mc, 1);
        TrainConfig tc;
        tc.epochs = 1;
        train_ae(m, bad, tc);
        ok = false;
        detail = "disengaged train sample accepted";
    } catch (const ProtocolError&) {
    }
    try {
        select_threshold({{"x", 0.5, Label::disengaged}}, ThresholdSpec{});
        ok = false;
        detail = "anomalous threshold scores accepted";
    } catch (const ProtocolError&) {
    }

    // determinism: identical (seed, config, data) -> byte-identical artifacts
    auto full_run = [&]() {
        auto tr = train, te = test;
        std::vector<SeqTensor> tensors;
        for (const auto& s : tr) tensors.push_back(s.tensor);
        Normalizer nz =
            Normalizer::fit(tensors, frame_feature_columns(FeatureMode::behavioral_affect));
        normalize_samples(tr, nz);
        normalize_samples(te, nz);
        Model m = Model::build(mc, 3);
        TrainConfig tc;
        tc.epochs = 5;
        tc.seed = 3;
        train_ae(m, tr, tc);
        double thr = select_threshold(score(m, tr), ThresholdSpec{});
        EvalReport rep = evaluate(m, te, thr, "percentile(99)", digest("bench"));
        std::ostringstream ckpt(std::ios::binary);
        m.save_checkpoint(ckpt);
        return std::make_pair(rep.to_json(), ckpt.str());
    };
    auto [report1, ckpt1] = full_run();
    auto [report2, ckpt2] = full_run();
    if (report1 != report2) {
        ok = false;
        detail = "reports differ between identical runs";
    }
    if (ckpt1 != ckpt2) {
        ok = false;
        detail = "checkpoints differ between identical runs";
    }

    // checkpoint round trip scores bit-identically
    {
        auto tr = train;
        std::vector<SeqTensor> tensors;
        for (const auto& s : tr) tensors.push_back(s.tensor);
        Normalizer nz =
            Normalizer::fit(tensors, frame_feature_columns(FeatureMode::behavioral_affect));
        normalize_samples(tr, nz);
        Model m = Model::build(mc, 3);
        TrainConfig tc;
        tc.epochs = 5;
        tc.seed = 3;
        train_ae(m, tr, tc);
        std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
        m.save_checkpoint(buf);
        Model back = Model::load_checkpoint(buf);
        ScoreSet a = score(m, tr), b = score(back, tr);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].score != b[i].score) {
                ok = false;
                detail = "round-trip scores differ";
            }
    }

    report(8, "protocol rejections; byte-identical reruns and round trips", ok, detail);
}

// ------------------------------------------------------------- criterion 9

void criterion_paper_scale() {
    ModelConfig mc;  // defaults are the full-size configuration
    std::size_t rf = receptive_field(mc);

    auto t0 = Clock::now();
    Model m = Model::build(mc, 1);
    Rng rng(404);
    SeqTensor x = random_tensor(mc.T, mc.n, rng);
    SeqTensor xhat = m.forward_ae(x);
    m.backward(mse_loss_grad(x, xhat));
    double elapsed = seconds_since(t0);

    report(9, "full-size config: step < 5 s, receptive field 3571 > T",
           elapsed < 5.0 && rf == 3571 && rf > mc.T,
           fmt("%.2f s, receptive field %zu", elapsed, rf));
}

}  // namespace

int main() {
    criterion_gradients();
    criterion_causality();
    criterion_metric_oracles();
    criterion_features();

    std::vector<BenchRun> runs;
    criterion_benchmark(runs);
    criterion_ae_beats_bc(runs);
    criterion_affect_ablation(runs);
    for (const auto& run : runs) fs::remove_all(run.dir);

    criterion_protocol_determinism();
    criterion_paper_scale();

    if (g_failures) std::printf("%d criterion(s) failed\n", g_failures);
    else std::printf("all criteria passed\n");
    return g_failures == 0 ? 0 : 1;
}
