// Acceptance suite: one PASS/FAIL line per criterion on stdout, details on stderr.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "aissm/checkpoint.hpp"
#include "aissm/confidence.hpp"
#include "aissm/gradsuite.hpp"
#include "aissm/metrics.hpp"
#include "aissm/model.hpp"
#include "aissm/synth.hpp"
#include "aissm/training.hpp"

using namespace aissm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Options {
    std::size_t steps = 720;
    std::size_t seeds = 5;
    std::size_t sequences = 12;
    std::size_t val_sequences = 2;
    std::uint32_t segments = 156;
    std::size_t curve_points = 10;
    double aissm_lr = 3e-3;
    double baseline_lr = 1e-3;
    double tracking_limit_s = 1800.0;
    std::string report_dir;
};

// ---- gradient suite ----

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    SuiteOptions opts;
    opts.seeds = 20;
    const auto results = run_gradient_suite(opts);
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::size_t checks = 0;
    for (const auto& r : results) {
        worst = std::max(worst, r.report.max_rel_error);
        checks += r.report.entries.size();
    }
    if (!suite_passed(results)) print_suite(std::cerr, results);
    const bool pass = suite_passed(results) && secs < 120.0;
    return {pass, std::to_string(results.size()) + " checks, " + std::to_string(checks) + " tensors, 20 seeds, max rel " +
                      fmt("%.2e", worst) + " (limit 1e-4), " + fmt("%.1f", secs) + " s (limit 120 s)"};
}

// ---- straight-through contract ----

Outcome st_contract() {
    double worst = 0.0;
    bool one_hot = true;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int seed = 0; seed < 50; ++seed) {
        std::vector<double> z(16 * 16), g(16 * 16);
        for (auto& v : z) v = n(rng);
        for (auto& v : g) v = n(rng);
        const auto upstream = ad::Tensor::from({16, 16}, g);
        for (SamplingMode mode : {SamplingMode::stochastic, SamplingMode::argmax}) {
            auto zs = ad::Tensor::from({16, 16}, z, true);
            auto zp = ad::Tensor::from({16, 16}, z, true);
            const auto y = st_sample(zs, mode, &rng);
            const auto v = y.to_vector();
            for (std::size_t r = 0; r < 16; ++r) {
                int ones = 0;
                for (std::size_t c = 0; c < 16; ++c) {
                    const double x = v[r * 16 + c];
                    if (x == 1.0) {
                        ++ones;
                    } else if (x != 0.0) {
                        one_hot = false;
                    }
                }
                one_hot = one_hot && ones == 1;
            }
            ad::sum(ad::mul(y, upstream)).backward();
            ad::sum(ad::mul(ad::softmax(zp), upstream)).backward();
            for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(zs.grad()[i] - zp.grad()[i]));
        }
    }
    return {one_hot && worst <= 1e-12, std::string("forward one-hot: ") + (one_hot ? "exact" : "VIOLATED") +
                                           "; max |grad - softmax grad| " + fmt("%.2e", worst) +
                                           " (limit 1e-12) over 50 seeds x 2 modes"};
}

// ---- confidence oracle ----

struct OracleLabel {
    double snr, ed, alpha;
};

// Naive per-pixel double loop over the dense count grid.
OracleLabel confidence_oracle(const EventFrame& f, const ConfidenceConfig& cfg) {
    const auto counts = f.counts_grid();
    const double cr = f.label->y * f.height;
    const double cc = f.label->x * f.width;
    const int top = static_cast<int>(std::floor(cr - cfg.roi_h / 2.0 + 0.5));
    const int left = static_cast<int>(std::floor(cc - cfg.roi_w / 2.0 + 0.5));
    std::uint64_t in = 0;
    std::uint64_t out = 0;
    for (int r = 0; r < static_cast<int>(f.height); ++r) {
        for (int c = 0; c < static_cast<int>(f.width); ++c) {
            const bool inside = r >= top && r < top + cfg.roi_h && c >= left && c < left + cfg.roi_w;
            (inside ? in : out) += counts[static_cast<std::size_t>(r) * f.width + c];
        }
    }
    double snr = 0.5;
    if (in > 0) snr = out == 0 ? 1.0 : 1.0 / (1.0 + std::exp(-static_cast<double>(in) / static_cast<double>(out)));
    const double ed = std::min(1.0, static_cast<double>(in) / (cfg.roi_h * cfg.roi_w * cfg.tau));
    return {snr, ed, cfg.beta * snr + (1.0 - cfg.beta) * ed};
}

Outcome confidence_oracle_check() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const ConfidenceConfig cfg;
    std::size_t mismatches = 0;
    std::size_t clipped = 0;
    std::size_t empty = 0;
    bool empty_alpha_ok = true;
    for (int i = 0; i < 100; ++i) {
        const double fill = i % 5 == 0 ? 0.0 : 0.001 * (1 + i % 30);
        std::vector<std::uint32_t> counts(160 * 120, 0);
        for (auto& c : counts) {
            if (u(rng) < fill) c = 1 + static_cast<std::uint32_t>(rng() % 5);
        }
        auto f = EventFrame::from_counts(160, 120, counts);
        // Every third label sits within reach of a border so its ROI is clipped.
        NormalizedCentroid label{u(rng), u(rng)};
        if (i % 3 == 0) label = {u(rng) * 0.15, 0.85 + u(rng) * 0.15};
        f.label = label;
        const auto roi = compute_roi(label, 160, 120, cfg.roi_h, cfg.roi_w);
        if (roi.clipped_area() < cfg.roi_h * cfg.roi_w) ++clipped;
        const auto got = confidence_label(f, cfg);
        const auto want = confidence_oracle(f, cfg);
        if (got.snr != want.snr || got.ed != want.ed || got.alpha != want.alpha) ++mismatches;
        if (f.total_events() == 0) {
            ++empty;
            empty_alpha_ok = empty_alpha_ok && got.alpha == 0.05;
        }
    }
    const bool pass = mismatches == 0 && clipped > 0 && empty > 0 && empty_alpha_ok;
    return {pass, "100 frames (" + std::to_string(clipped) + " clipped ROIs, " + std::to_string(empty) +
                      " empty), bit-exact mismatches " + std::to_string(mismatches) + ", empty-frame alpha " +
                      (empty_alpha_ok ? "0.05" : "WRONG")};
}

// ---- fusion gating ----

EventFrame random_frame(std::mt19937_64& rng, double fill) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::uint32_t> counts(160 * 120, 0);
    for (auto& c : counts) {
        if (u(rng) < fill) c = 1;
    }
    return EventFrame::from_counts(160, 120, counts);
}

ModelState random_state(const Model& m, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    ModelState s = m.initial_state();
    for (auto& v : s.h) v = std::tanh(n(rng));
    const std::size_t classes = m.config().n_classes;
    for (std::size_t v = 0; v < m.config().n_vars; ++v) {
        for (std::size_t c = 0; c < classes; ++c) s.s_prev[v * classes + c] = 0.0;
        s.s_prev[v * classes + rng() % classes] = 1.0;
    }
    return s;
}

Outcome fusion_gating() {
    Model model(ModelConfig::defaults(Arch::aissm), 3);
    std::mt19937_64 rng(5);
    std::size_t frame_violations = 0;
    std::size_t state_violations = 0;
    std::size_t frame_changes_without_gate = 0;
    const int trials = 20;
    ad::NoGradGuard no_grad;
    for (int t = 0; t < trials; ++t) {
        const ModelState state = random_state(model, rng);
        const auto obs_a = model.observation(random_frame(rng, 0.02));
        const auto obs_b = model.observation(random_frame(rng, 0.3));
        StepContext zero{SamplingMode::argmax, nullptr, 0.0};
        const auto ya = model.step(obs_a, state, zero).y_hat.to_vector();
        const auto yb = model.step(obs_b, state, zero).y_hat.to_vector();
        if (ya != yb) ++frame_violations;
        StepContext half{SamplingMode::argmax, nullptr, 0.5};
        if (model.step(obs_a, state, half).y_hat.to_vector() != model.step(obs_b, state, half).y_hat.to_vector()) {
            ++frame_changes_without_gate;
        }

        const ModelState other = random_state(model, rng);
        StepContext one{SamplingMode::argmax, nullptr, 1.0};
        if (model.step(obs_a, state, one).y_hat.to_vector() != model.step(obs_a, other, one).y_hat.to_vector()) {
            ++state_violations;
        }
    }
    const bool pass = frame_violations == 0 && state_violations == 0 && frame_changes_without_gate > 0;
    return {pass, "alpha=0 frame perturbation changed y_hat in " + std::to_string(frame_violations) + "/" +
                      std::to_string(trials) + ", alpha=1 state perturbation changed y_hat in " +
                      std::to_string(state_violations) + "/" + std::to_string(trials) +
                      " (control alpha=0.5 responds in " + std::to_string(frame_changes_without_gate) + "/" +
                      std::to_string(trials) + ")"};
}

// ---- metric suite ----

EvalRecord record(const NormalizedCentroid& pred, const NormalizedCentroid& label, double res) {
    EvalRecord r;
    r.pred = pred;
    r.label = label;
    r.px_dist = pixel_distance(pred, label, res, res);
    r.hit5 = r.px_dist <= 5;
    r.hit10 = r.px_dist <= 10;
    r.hit15 = r.px_dist <= 15;
    return r;
}

Outcome metric_suite() {
    std::vector<std::string> failures;
    // Inclusivity: offsets of exactly 5, 10 and 15 px at 320.
    const NormalizedCentroid c{0.5, 0.5};
    const std::vector<EvalRecord> at5{record({0.515625, 0.5}, c, 320)};
    const std::vector<EvalRecord> at10{record({0.53125, 0.5}, c, 320)};
    const std::vector<EvalRecord> at15{record({0.546875, 0.5}, c, 320)};
    if (p_metric(at5, 5) != 100.0 || p_metric(at10, 10) != 100.0 || p_metric(at15, 15) != 100.0 ||
        p_metric(at10, 5) != 0.0) {
        failures.push_back("inclusivity");
    }

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 0.04);
    std::size_t scale_mismatch = 0;
    double worst_scale_abs = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EvalRecord> recs;
        for (int i = 0; i < 200; ++i) {
            const NormalizedCentroid l{u(rng), u(rng)};
            const NormalizedCentroid p{std::clamp(l.x + n(rng), 0.0, 1.0), std::clamp(l.y + n(rng), 0.0, 1.0)};
            recs.push_back(record(p, l, 320));
            const double d = norm_distance(p, l);
            if (!(d >= 0.0 && d <= std::sqrt(2.0))) failures.push_back("distance range");
            for (double res : {160.0, 320.0}) {
                const double px = pixel_distance(p, l, res, res);
                worst_scale_abs = std::max(worst_scale_abs, std::abs(px - res * d) / res);
            }
        }
        const auto s = summarize(recs);
        if (!(s.p5 <= s.p10 && s.p10 <= s.p15)) failures.push_back("monotonicity");
        if (!(s.distance >= 0.0 && s.distance <= std::sqrt(2.0))) failures.push_back("mean distance range");
    }
    if (norm_distance({0, 0}, {1, 1}) != std::sqrt(2.0) || norm_distance({1, 0}, {0, 1}) != std::sqrt(2.0)) {
        failures.push_back("corner distance");
    }
    // Pythagorean offsets on a 1/64 grid are exactly representable at both resolutions.
    for (int m = 1; m <= 6; ++m) {
        for (int k = 0; k + 4 * m <= 64; k += 3) {
            const NormalizedCentroid a{k / 64.0, (64 - k) / 64.0};
            const NormalizedCentroid b{(k + 3 * m) / 64.0, (64 - k - 4 * m) / 64.0};
            for (double res : {160.0, 320.0}) {
                if (pixel_distance(a, b, res, res) != res * norm_distance(a, b)) ++scale_mismatch;
            }
        }
    }
    if (scale_mismatch > 0 || worst_scale_abs > 1e-12) failures.push_back("scale consistency");
    std::string detail = "inclusivity at 5/10/15 px, P5<=P10<=P15 over 50 sets, distance in [0, sqrt2], "
                         "pixel == res * normalized at 160 and 320 (bit-exact on representable offsets, " +
                         std::to_string(scale_mismatch) + " mismatches; random points within " +
                         fmt("%.1e", worst_scale_abs) + " * res, limit 1e-12)";
    if (!failures.empty()) {
        detail += "; failed:";
        for (const auto& f : failures) detail += " " + f;
    }
    return {failures.empty(), detail};
}

// ---- budget ----

Outcome budget() {
    std::string detail;
    bool pass = true;
    for (Arch a : {Arch::aissm, Arch::cnn, Arch::cnn_gru}) {
        const Model m(ModelConfig::defaults(a), 0);
        const double count = static_cast<double>(m.param_count());
        const bool ok = std::abs(count - 500000.0) <= 50000.0;
        pass = pass && ok;
        if (!detail.empty()) detail += ", ";
        detail += std::string(to_string(a)) + " " + std::to_string(m.param_count()) + " (" +
                  fmt("%+.1f", 100.0 * (count - 500000.0) / 500000.0) + "%)";
    }
    return {pass, detail + "; limit 500000 +/- 10%"};
}

// ---- reproducibility ----

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset make_dataset(std::size_t n, std::uint32_t segments, std::uint64_t first_seed) {
    Dataset ds;
    const DatasetOptions opts;
    for (std::size_t i = 0; i < n; ++i) {
        SynthConfig sc;
        sc.segments = segments;
        sc.seed = first_seed + i;
        const auto s = generate(sc);
        ds.sequences.push_back(make_sequence_data("seq" + std::to_string(i), s.sequence, s.segments, opts));
    }
    return ds;
}

std::vector<double> predictions(const Model& m, const Dataset& ds) {
    ModelPredictor p(m, 0);
    std::vector<double> out;
    for (const auto& r : evaluate(p, ds, {})) {
        out.push_back(r.pred.x);
        out.push_back(r.pred.y);
    }
    return out;
}

Outcome reproducibility(const fs::path& scratch) {
    const Dataset data = make_dataset(3, 12, 500);
    const Dataset train = data.slice(0, 2);
    const Dataset val = data.slice(2, 1);
    TrainConfig tc;
    tc.epochs = 2;
    tc.max_steps = 40;
    tc.eval_every = 10;
    tc.seed = 11;
    std::vector<std::string> logs[2];
    std::unique_ptr<Model> live;
    for (int run = 0; run < 2; ++run) {
        auto m = std::make_unique<Model>(ModelConfig::defaults(Arch::aissm), tc.seed);
        Trainer t(*m, tc);
        RunOptions ro;
        ro.out_dir = scratch / ("run" + std::to_string(run));
        t.train(train, val, ro);
        for (const char* f : {"metrics.csv", "losses.csv", "ckpt_epoch002.aism"}) logs[run].push_back(slurp(ro.out_dir / f));
        if (run == 0) live = std::move(m);
    }
    const bool logs_equal = logs[0] == logs[1] && !logs[0][0].empty();

    // The last checkpoint was taken after the final step, so it matches the live model.
    const Checkpoint ckpt = decode_checkpoint(logs[0][2]);
    const bool bytes_equal = encode_checkpoint(ckpt) == logs[0][2];
    const Model loaded = load_model(ckpt);
    Checkpoint a, b;
    add_model(a, *live);
    add_model(b, loaded);
    const bool params_equal = encode_checkpoint(a) == encode_checkpoint(b);
    const bool inference_equal = predictions(*live, val) == predictions(loaded, val);
    return {logs_equal && bytes_equal && params_equal && inference_equal,
            std::string("metrics, losses and checkpoint across two runs ") + (logs_equal ? "byte-identical" : "DIFFER") +
                "; checkpoint decode->encode " + (bytes_equal ? "byte-identical" : "DIFFERS") + "; reloaded parameters " +
                (params_equal ? "identical" : "DIFFER") + ", inference " + (inference_equal ? "identical" : "DIFFERS")};
}

// ---- synthetic experiments ----

struct RunResult {
    std::vector<std::pair<std::uint64_t, double>> curve;  // (step, val P10)
    double overall_p10 = 0.0;
    double fixation_p10 = 0.0;
    double saccade_p10 = 0.0;
    double mean_alpha = 0.0;
    double seconds = 0.0;
};

RunResult train_run(const Dataset& train, const Dataset& val, Arch arch, std::uint64_t seed, bool long_horizon,
                    const Options& o) {
    const auto t0 = Clock::now();
    Model m(ModelConfig::defaults(arch), seed);
    TrainConfig tc;
    tc.seed = seed;
    tc.max_steps = o.steps;
    tc.epochs = 1000000;
    tc.eval_every = std::max<std::size_t>(1, o.steps / o.curve_points);
    tc.long_horizon = long_horizon;
    tc.lr = arch == Arch::aissm ? o.aissm_lr : o.baseline_lr;
    Trainer t(m, tc);
    RunResult r;
    RunOptions ro;
    ro.on_eval = [&](const MetricsRow& row) { r.curve.emplace_back(row.step, row.summary.p10); };
    t.train(train, val, ro);

    ModelPredictor p(m, seed);
    const auto recs = evaluate(p, val, {});
    std::vector<EvalRecord> fix, sac;
    for (const auto& rec : recs) (rec.kind == SegmentKind::saccade ? sac : fix).push_back(rec);
    const auto s = summarize(recs);
    r.overall_p10 = s.p10;
    r.mean_alpha = s.mean_alpha;
    r.fixation_p10 = fix.empty() ? 0.0 : p_metric(fix, 10);
    r.saccade_p10 = sac.empty() ? 0.0 : p_metric(sac, 10);
    if (r.curve.empty() || r.curve.back().first != t.step()) r.curve.emplace_back(t.step(), r.overall_p10);
    r.seconds = seconds_since(t0);
    std::cerr << "    " << to_string(arch) << " seed " << seed << " long_horizon " << (long_horizon ? "on" : "off")
              << ": P10 " << fmt("%.2f", r.overall_p10) << " fixation " << fmt("%.2f", r.fixation_p10) << " saccade "
              << fmt("%.2f", r.saccade_p10) << " curve";
    for (const auto& [step, p10] : r.curve) std::cerr << " " << step << ":" << fmt("%.1f", p10);
    std::cerr << " (" << fmt("%.0f", r.seconds) << " s)\n";
    return r;
}

void write_report(const Options& o, const std::string& name, const std::vector<std::pair<std::string, RunResult>>& runs) {
    if (o.report_dir.empty()) return;
    fs::create_directories(o.report_dir);
    std::ofstream f(fs::path(o.report_dir) / (name + ".csv"));
    f << "run,step,val_p10,final_p10,fixation_p10,saccade_p10,mean_alpha,seconds\n";
    for (const auto& [label, r] : runs) {
        for (const auto& [step, p10] : r.curve) {
            f << label << "," << step << "," << p10 << "," << r.overall_p10 << "," << r.fixation_p10 << ","
              << r.saccade_p10 << "," << r.mean_alpha << "," << r.seconds << "\n";
        }
    }
}

struct Experiments {
    const Options& opts;
    Dataset train;
    Dataset val;
    std::vector<RunResult> aissm_on;  // shared by both experiments
    bool have_aissm = false;

    explicit Experiments(const Options& o) : opts(o) {
        const Dataset all = make_dataset(o.sequences, o.segments, 1000);
        train = all.slice(0, o.sequences - o.val_sequences);
        val = all.slice(o.sequences - o.val_sequences, o.val_sequences);
        std::cerr << "  synthetic data: " << train.sequences.size() << " train / " << val.sequences.size()
                  << " val sequences, " << train.frame_count() << " / " << val.frame_count() << " frames, "
                  << fmt("%.1f", static_cast<double>(all.frame_count()) / static_cast<double>(o.sequences) / 100.0)
                  << " s per sequence\n";
    }

    const std::vector<RunResult>& aissm_runs() {
        if (!have_aissm) {
            for (std::uint64_t s = 1; s <= opts.seeds; ++s) aissm_on.push_back(train_run(train, val, Arch::aissm, s, true, opts));
            have_aissm = true;
        }
        return aissm_on;
    }
};

Outcome tracking(Experiments& ex) {
    const Options& o = ex.opts;
    const auto& a = ex.aissm_runs();
    std::vector<RunResult> g;
    for (std::uint64_t s = 1; s <= o.seeds; ++s) g.push_back(train_run(ex.train, ex.val, Arch::cnn_gru, s, true, o));
    std::size_t fix_wins = 0;
    std::size_t overall_wins = 0;
    double seconds = 0.0;
    std::string margins;
    std::vector<std::pair<std::string, RunResult>> report;
    for (std::size_t i = 0; i < o.seeds; ++i) {
        const double margin = a[i].fixation_p10 - g[i].fixation_p10;
        fix_wins += margin > 0.0;
        overall_wins += a[i].overall_p10 >= g[i].overall_p10;
        seconds += a[i].seconds + g[i].seconds;
        margins += (i ? ", " : "") + fmt("%+.2f", margin);
        report.emplace_back("aissm_seed" + std::to_string(i + 1), a[i]);
        report.emplace_back("cnn_gru_seed" + std::to_string(i + 1), g[i]);
    }
    write_report(o, "tracking", report);
    const std::size_t need = (4 * o.seeds + 4) / 5;
    const bool pass = fix_wins >= need && overall_wins >= need && seconds < o.tracking_limit_s;
    return {pass, std::to_string(o.steps) + " steps/run; fixation P10 margin > 0 in " + std::to_string(fix_wins) + "/" +
                      std::to_string(o.seeds) + " [" + margins + "], overall P10 AISSM >= CNN-GRU in " +
                      std::to_string(overall_wins) + "/" + std::to_string(o.seeds) + " (need " + std::to_string(need) +
                      "), runtime " + fmt("%.0f", seconds) + " s (limit " + fmt("%.0f", o.tracking_limit_s) + " s)"};
}

Outcome long_horizon(Experiments& ex) {
    const Options& o = ex.opts;
    const auto& on = ex.aissm_runs();
    std::vector<RunResult> off;
    for (std::uint64_t s = 1; s <= o.seeds; ++s) off.push_back(train_run(ex.train, ex.val, Arch::aissm, s, false, o));
    std::size_t end_wins = 0;
    std::size_t degraded = 0;
    double worst_drop = 0.0;
    std::string ends;
    std::vector<std::pair<std::string, RunResult>> report;
    for (std::size_t i = 0; i < o.seeds; ++i) {
        // Late training is the second half of the curve.
        const auto& c = on[i].curve;
        double running = -1.0;
        double drop = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) {
            running = std::max(running, c[k].second);
            if (2 * k >= c.size()) drop = std::max(drop, running - c[k].second);
        }
        worst_drop = std::max(worst_drop, drop);
        degraded += drop > 2.0;
        end_wins += on[i].overall_p10 >= off[i].overall_p10;
        ends += (i ? ", " : "") + fmt("%.1f", on[i].overall_p10) + " vs " + fmt("%.1f", off[i].overall_p10);
        report.emplace_back("on_seed" + std::to_string(i + 1), on[i]);
        report.emplace_back("off_seed" + std::to_string(i + 1), off[i]);
    }
    write_report(o, "long-horizon", report);
    const std::size_t need = (4 * o.seeds + 4) / 5;
    const bool pass = degraded == 0 && end_wins >= need;
    return {pass, "late drop from running max > 2 pp in " + std::to_string(degraded) + "/" + std::to_string(o.seeds) +
                      " on-runs (worst " + fmt("%.2f", worst_drop) + " pp); end P10 on >= off in " +
                      std::to_string(end_wins) + "/" + std::to_string(o.seeds) + " (need " + std::to_string(need) +
                      ") [" + ends + "]"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    Options o;
    std::vector<std::string> only;
    app.add_option("--steps", o.steps, "Optimizer steps per synthetic training run");
    app.add_option("--seeds", o.seeds, "Seeds per synthetic experiment");
    app.add_option("--sequences", o.sequences, "Synthetic sequences (train + validation)");
    app.add_option("--val-sequences", o.val_sequences, "Held-out validation sequences");
    app.add_option("--segments", o.segments, "Segments per synthetic sequence");
    app.add_option("--aissm-lr", o.aissm_lr, "AISSM learning rate");
    app.add_option("--baseline-lr", o.baseline_lr, "CNN-GRU learning rate");
    app.add_option("--report-dir", o.report_dir, "Write per-run curves as CSV here");
    app.add_option("--only", only, "Run only these criteria")
        ->check(CLI::IsMember({"gradients", "straight-through", "confidence", "gating", "metrics", "tracking", "long-horizon",
                               "budget", "reproducibility"}));
    CLI11_PARSE(app, argc, argv);
    if (o.seeds == 0 || o.steps == 0 || o.val_sequences == 0 || o.sequences <= o.val_sequences) {
        std::cerr << "invalid experiment sizes\n";
        return 2;
    }

    const fs::path scratch = fs::temp_directory_path() / ("aissm_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(scratch);
    std::unique_ptr<Experiments> experiments;
    auto ex = [&]() -> Experiments& {
        if (!experiments) experiments = std::make_unique<Experiments>(o);
        return *experiments;
    };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradients", gradient_suite},
        {"straight-through", st_contract},
        {"confidence", confidence_oracle_check},
        {"gating", fusion_gating},
        {"metrics", metric_suite},
        {"tracking", [&] { return tracking(ex()); }},
        {"long-horizon", [&] { return long_horizon(ex()); }},
        {"budget", budget},
        {"reproducibility", [&] { return reproducibility(scratch); }},
    };

    std::size_t failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        const auto t0 = Clock::now();
        Outcome r;
        try {
            r = run();
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what()};
        }
        failed += !r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << name << ": " << r.detail << " [" << fmt("%.1f", seconds_since(t0))
                  << " s]" << std::endl;
    }
    fs::remove_all(scratch);
    return failed == 0 ? 0 : 1;
}
