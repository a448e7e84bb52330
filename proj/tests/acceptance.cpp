// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Oracles (soft-NMS, AP) are independent transcriptions kept
// local to this file.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tadml/trainer.hpp"

using namespace tadml;

namespace {

bool g_all_ok = true;

void report(const char* name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name,
                detail.empty() ? "" : " — ", detail.c_str());
    g_all_ok = g_all_ok && ok;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference checks over every primitive and a full toy
// model (T=32, D=8, width 8, K=2, 2 levels), rel err < 1e-4, under 60 s
// ---------------------------------------------------------------------------

Tensor weighted_readout(Tape* tape, const Tensor& y) {
    double s = 0.0;
    std::vector<double> w(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) {
        w[i] = std::cos(0.7 * static_cast<double>(i + 1));
        s += w[i] * y.at(i);
    }
    Tensor loss = Tensor::scalar(s);
    if (tape) {
        Tensor yc = y, lc = loss;
        tape->record([yc, lc, w]() mutable {
            auto& gy = yc.ensure_grad();
            for (std::size_t i = 0; i < w.size(); ++i) gy[i] += w[i] * lc.grad_view()[0];
        });
    }
    return loss;
}

bool criterion_gradients(std::string& detail) {
    const double t0 = now_seconds();
    Rng rng(2718);
    bool ok = true;
    double worst = 0.0;
    auto absorb = [&](const GradCheckReport& r) {
        ok = ok && r.ok;
        for (const auto& e : r.entries) worst = std::max(worst, e.max_rel_err);
    };

    // primitives
    {
        Tensor x({5, 6}), W({6, 4}), b({4});
        for (double& v : x.values()) v = rng.normal();
        for (double& v : W.values()) v = 0.5 * rng.normal();
        for (double& v : b.values()) v = 0.1 * rng.normal();
        absorb(grad_check(
            [&](Tape* t) { return weighted_readout(t, fc(t, x, W, b)); },
            {{"x", x}, {"W", W}, {"b", b}}, 1e-4));

        Tensor g({6}), be({6});
        for (double& v : g.values()) v = 1.0 + 0.2 * rng.normal();
        for (double& v : be.values()) v = 0.1 * rng.normal();
        absorb(grad_check(
            [&](Tape* t) { return weighted_readout(t, layer_norm(t, x, g, be)); },
            {{"x", x}, {"gamma", g}, {"beta", be}}, 1e-4));
        absorb(grad_check(
            [&](Tape* t) { return weighted_readout(t, relu(t, x)); }, {{"x", x}},
            1e-4));
        Tensor x7({7, 3});
        for (double& v : x7.values()) v = rng.normal();
        absorb(grad_check(
            [&](Tape* t) { return weighted_readout(t, avgpool2(t, x7)); },
            {{"x", x7}}, 1e-4));
        absorb(grad_check(
            [&](Tape* t) { return weighted_readout(t, linear_upsample2(t, x7, 14)); },
            {{"x", x7}}, 1e-4));
    }

    // mechanics unit, including the mixing angle
    {
        const std::size_t D = 8;
        MechanicsParams p;
        p.Wa = Tensor({D, D}); p.ba = Tensor({D});
        p.Wb = Tensor({D, D}); p.bb = Tensor({D});
        p.theta = Tensor({D});
        p.norm1_gamma = Tensor({D}); p.norm1_beta = Tensor({D});
        p.norm2_gamma = Tensor({D}); p.norm2_beta = Tensor({D});
        p.Wc1 = Tensor({D, 2 * D}); p.bc1 = Tensor({2 * D});
        p.Wc2 = Tensor({2 * D, D}); p.bc2 = Tensor({D});
        for (Tensor* t : {&p.Wa, &p.Wb, &p.Wc1, &p.Wc2})
            for (double& v : t->values()) v = 0.3 * rng.normal();
        for (Tensor* t : {&p.ba, &p.bb, &p.bc1, &p.bc2, &p.norm1_beta, &p.norm2_beta})
            for (double& v : t->values()) v = 0.1 * rng.normal();
        for (double& v : p.norm1_gamma.values()) v = 1.0 + 0.1 * rng.normal();
        for (double& v : p.norm2_gamma.values()) v = 1.0 + 0.1 * rng.normal();
        for (double& v : p.theta.values()) v = 1.2 + 0.3 * rng.normal();
        Tensor x({4, D});
        for (double& v : x.values()) v = rng.normal();
        absorb(grad_check(
            [&](Tape* t) { return weighted_readout(t, mechanics_unit(t, x, p)); },
            {{"x", x}, {"Wa", p.Wa}, {"Wb", p.Wb}, {"theta", p.theta},
             {"g1", p.norm1_gamma}, {"b1", p.norm1_beta}, {"Wc1", p.Wc1},
             {"Wc2", p.Wc2}},
            1e-4));
    }

    // full toy model through the total training loss, every parameter watched
    {
        ModelConfig mc;
        mc.input_dim = 8; mc.width = 8; mc.num_levels = 2; mc.neck_stages = 2;
        mc.num_classes = 2;
        Model model(mc, 17);
        Tensor x({32, 8});
        for (double& v : x.values()) v = rng.normal();
        std::vector<GroundTruthInstance> gts{{{4.0, 11.0}, 0}, {{18.0, 30.0}, 1}};
        LossConfig lc;
        auto f = [&](Tape* tape) {
            ForwardResult fwd = model.forward(tape, x, 32);
            auto targets = assign_targets(gts, geometry_of(fwd),
                                          AssignConfig::defaults(mc.num_levels));
            return total_loss(tape, fwd.heads, targets, lc).total;
        };
        std::vector<std::pair<std::string, Tensor>> watched;
        for (const auto& name : model.params().order())
            watched.emplace_back(name, model.params().get(name));
        absorb(grad_check(f, watched, 1e-4));
    }

    const double secs = now_seconds() - t0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max rel err %.2e, %.1f s", worst, secs);
    detail = buf;
    return ok && secs < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 2: loss algebra hand values to 1e-9
// ---------------------------------------------------------------------------

bool criterion_loss_algebra(std::string& detail) {
    bool ok = true;
    ok = ok && std::fabs(beta_giou_loss({0, 1}, {0, 1}, 3.0)) < 1e-9;
    // disjoint unit intervals with a unit gap: 1 - 0 + (1/3)^3
    ok = ok && std::fabs(beta_giou_loss({0, 1}, {2, 3}, 3.0) - (1.0 + 1.0 / 27.0)) < 1e-9;
    // half-overlapping intervals, no enclosure gap: 1 - 1/3 for every beta
    for (double beta : {1.0, 2.0, 3.0})
        ok = ok && std::fabs(beta_giou_loss({0, 2}, {1, 3}, beta) - 2.0 / 3.0) < 1e-9;

    LocationTargets::Level tl;
    tl.label = {0};
    tl.valid = {1};
    tl.positive = {1};
    tl.ds = {0};
    tl.de = {0};
    Tensor logits = Tensor::from({1, 1}, {0.0});  // p = 0.5
    const double focal = focal_loss_sum(nullptr, logits, tl, {0.25, 2.0}).item();
    ok = ok && std::fabs(focal - 0.25 * 0.25 * std::log(2.0)) < 1e-9;
    detail = "beta-GIoU and focal match hand-computed values to 1e-9";
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 3: brute-force oracle equivalence for soft-NMS and AP
// ---------------------------------------------------------------------------

std::vector<Detection> soft_nms_oracle(std::vector<Detection> dets, double sigma,
                                       double final_threshold) {
    std::vector<Detection> out;
    std::vector<bool> removed(dets.size(), false);
    for (;;) {
        std::size_t best = dets.size();
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (removed[i]) continue;
            if (best == dets.size() || dets[i].score > dets[best].score ||
                (dets[i].score == dets[best].score &&
                 (dets[i].segment.start < dets[best].segment.start ||
                  (dets[i].segment.start == dets[best].segment.start &&
                   dets[i].class_id < dets[best].class_id))))
                best = i;
        }
        if (best == dets.size()) break;
        removed[best] = true;
        if (dets[best].score >= final_threshold) out.push_back(dets[best]);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (removed[i] || dets[i].class_id != dets[best].class_id) continue;
            const double inter =
                std::max(0.0, std::min(dets[i].segment.end, dets[best].segment.end) -
                                  std::max(dets[i].segment.start, dets[best].segment.start));
            const double uni = (dets[i].segment.end - dets[i].segment.start) +
                               (dets[best].segment.end - dets[best].segment.start) - inter;
            const double ov = inter / uni;
            dets[i].score *= std::exp(-(ov * ov) / sigma);
            if (dets[i].score < final_threshold) removed[i] = true;
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
        return a.class_id < b.class_id;
    });
    return out;
}

double ap_oracle(std::vector<ApInput> dets, const std::vector<ApGt>& gts, double thr) {
    if (gts.empty()) return 0.0;
    std::stable_sort(dets.begin(), dets.end(), [](const ApInput& a, const ApInput& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
        return a.video < b.video;
    });
    std::vector<bool> used(gts.size(), false);
    std::vector<bool> tp(dets.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best = 0.0;
        std::size_t arg = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].video != dets[d].video) continue;
            const double ov = tiou(dets[d].segment, gts[g].segment);
            if (ov >= thr && ov > best) { best = ov; arg = g; }
        }
        if (arg < gts.size()) { used[arg] = true; tp[d] = true; }
    }
    std::vector<double> envelope;  // best precision reaching TP rank k, k = 1..
    std::size_t cum = 0;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        if (!tp[d]) continue;
        ++cum;
        double best_prec = 0.0;
        std::size_t c2 = 0;
        for (std::size_t j = 0; j < dets.size(); ++j) {
            if (tp[j]) ++c2;
            if (c2 >= cum)
                best_prec = std::max(
                    best_prec, static_cast<double>(c2) / static_cast<double>(j + 1));
        }
        envelope.push_back(best_prec);
    }
    // accumulate highest rank first so the float sum is order-identical to a
    // reverse-scan implementation
    double total = 0.0;
    for (std::size_t k = envelope.size(); k-- > 0;) total += envelope[k];
    return total / static_cast<double>(gts.size());
}

bool criterion_oracles(std::string& detail) {
    Rng rng(31337);
    std::size_t nms_checked = 0, ap_checked = 0;
    for (int it = 0; it < 120; ++it) {
        const std::size_t n = 1 + rng.uniform_int(32);
        std::vector<Detection> dets;
        for (std::size_t i = 0; i < n; ++i) {
            Detection d;
            d.segment.start = rng.uniform(0.0, 90.0);
            d.segment.end = d.segment.start + rng.uniform(0.5, 20.0);
            d.class_id = static_cast<int>(rng.uniform_int(3));
            d.score = rng.uniform(0.01, 1.0);
            dets.push_back(d);
        }
        const double sigma = rng.uniform(0.1, 1.0);
        auto got = soft_nms(dets, {sigma, 0.001});
        auto ref = soft_nms_oracle(dets, sigma, 0.001);
        if (got.size() != ref.size()) return false;
        for (std::size_t i = 0; i < got.size(); ++i)
            if (got[i].score != ref[i].score ||
                got[i].segment.start != ref[i].segment.start ||
                got[i].segment.end != ref[i].segment.end ||
                got[i].class_id != ref[i].class_id)
                return false;
        ++nms_checked;
    }
    for (int it = 0; it < 120; ++it) {
        std::vector<ApGt> gts;
        const std::size_t ng = 1 + rng.uniform_int(10);
        for (std::size_t g = 0; g < ng; ++g) {
            const double s = rng.uniform(0.0, 80.0);
            gts.push_back({static_cast<int>(rng.uniform_int(2)),
                           {s, s + rng.uniform(2.0, 15.0)}});
        }
        std::vector<ApInput> dets;
        const std::size_t nd = rng.uniform_int(33);
        for (std::size_t d = 0; d < nd; ++d) {
            const double s = rng.uniform(0.0, 80.0);
            dets.push_back({static_cast<int>(rng.uniform_int(2)),
                            {s, s + rng.uniform(2.0, 15.0)}, rng.uniform(0.0, 1.0)});
        }
        const double thr = rng.uniform(0.2, 0.8);
        if (average_precision(dets, gts, thr) != ap_oracle(dets, gts, thr))
            return false;
        ++ap_checked;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu soft-NMS + %zu AP instances bit-exact",
                  nms_checked, ap_checked);
    detail = buf;
    return true;
}

// ---------------------------------------------------------------------------
// criterion 4: assign -> decode round trip within 1e-6 frames on every level
// ---------------------------------------------------------------------------

bool criterion_round_trip(std::string& detail) {
    Rng rng(4242);
    std::vector<LevelGeometry> geo;
    std::size_t t = 2304;
    for (int l = 1; l <= 6; ++l) {
        t = (t + 1) / 2;
        geo.push_back({1 << l, t, t});
    }
    const AssignConfig acfg = AssignConfig::defaults(6);
    std::vector<std::size_t> per_level(6, 0);
    for (int it = 0; it < 100; ++it) {
        for (std::size_t l = 0; l < 6; ++l) {
            const double lo = std::max(acfg.ranges_frames[l].first, 2.0);
            const double len = rng.uniform(1.2 * lo, 1.9 * lo);
            const double start = rng.uniform(0.0, 2304.0 - len);
            std::vector<GroundTruthInstance> gts{{{start, start + len}, 0}};
            const auto targets = assign_targets(gts, geo, acfg);
            for (std::size_t lv = 0; lv < 6; ++lv) {
                const auto& tl = targets.levels[lv];
                for (std::size_t i = 0; i < geo[lv].length; ++i) {
                    if (!tl.positive[i]) continue;
                    const double c = (i + 0.5) * geo[lv].stride;
                    const double s = c - tl.ds[i] * geo[lv].stride;
                    const double e = c + tl.de[i] * geo[lv].stride;
                    if (std::fabs(s - start) > 1e-6 ||
                        std::fabs(e - (start + len)) > 1e-6)
                        return false;
                    ++per_level[lv];
                }
            }
        }
    }
    for (std::size_t lv = 0; lv < 6; ++lv)
        if (per_level[lv] == 0) return false;  // every level must be exercised
    detail = "100 instances, positives on all 6 levels";
    return true;
}

// ---------------------------------------------------------------------------
// criterion 5: pyramid geometry at T = 2304
// ---------------------------------------------------------------------------

bool criterion_geometry(std::string& detail) {
    const auto lens = pyramid_lengths(2304, 6);
    const std::vector<std::size_t> expect{1152, 576, 288, 144, 72, 36};
    if (lens != expect) return false;
    std::size_t total = 0;
    for (std::size_t n : lens) total += n;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "levels 1152..36, %zu locations", total);
    detail = buf;
    return total == 2268;
}

// ---------------------------------------------------------------------------
// criteria 6 & 7: end-to-end synthetic benchmark plus ablations
// ---------------------------------------------------------------------------

struct BenchResult {
    std::vector<double> map_per_threshold;
    double average_map = 0.0;
    double map_at_05 = 0.0;
};

BenchResult run_benchmark(std::size_t neck_stages, double beta) {
    SynthConfig s;
    s.T = 128;
    s.D = 32;
    s.num_classes = 3;
    s.actions_min = 1;
    s.actions_max = 2;
    s.min_action_len = 12;
    s.max_action_len = 24;
    s.noise_level = 0.1;
    s.num_videos = 130;
    s.seed = 2024;
    auto all = synth_dataset(s);
    Dataset train_set(all.begin(), all.begin() + 100);
    Dataset eval_set(all.begin() + 100, all.end());

    TrainConfig cfg;
    cfg.model.input_dim = 32;
    cfg.model.width = 32;
    cfg.model.num_levels = 5;
    cfg.model.neck_stages = neck_stages;
    cfg.model.num_classes = 3;
    cfg.max_len = 128;
    cfg.batch_size = 2;
    cfg.seed = 1;
    cfg.epochs = 30;
    cfg.base_lr = 2e-3;
    cfg.warmup_epochs = 3;
    cfg.beta = beta;
    TrainResult res = train(cfg, train_set);

    GtMap gts;
    DetMap dets;
    InferConfig icfg;
    for (const auto& v : eval_set) {
        gts[v.features.video_id] = {128.0, v.gts};
        dets[v.features.video_id] = infer(res.model, v.features, icfg).detections;
    }
    const auto rep = mean_ap(dets, gts, {0.3, 0.4, 0.5, 0.6, 0.7});
    return {rep.map_per_threshold, rep.average_map, rep.map_per_threshold[2]};
}

bool criterion_benchmark(std::string& detail, BenchResult& main_result) {
    const double t0 = now_seconds();
    main_result = run_benchmark(/*neck_stages=*/6, /*beta=*/3.0);
    const BenchResult rerun = run_benchmark(6, 3.0);
    const double secs = now_seconds() - t0;

    bool identical = main_result.average_map == rerun.average_map;
    for (std::size_t i = 0; i < main_result.map_per_threshold.size(); ++i)
        identical = identical &&
                    main_result.map_per_threshold[i] == rerun.map_per_threshold[i];

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "mAP@0.5 %.3f (>= 0.80), avg mAP %.3f (>= 0.60), rerun %s, %.0f s",
                  main_result.map_at_05, main_result.average_map,
                  identical ? "bit-identical" : "DIVERGED", secs);
    detail = buf;
    return main_result.map_at_05 >= 0.80 && main_result.average_map >= 0.60 &&
           identical && secs < 600.0;
}

bool criterion_ablations(std::string& detail, const BenchResult& full_neck) {
    const BenchResult neck1 = run_benchmark(/*neck_stages=*/1, /*beta=*/3.0);
    const BenchResult beta1 = run_benchmark(6, /*beta=*/1.0);
    const bool neck_ordered = neck1.average_map < full_neck.average_map;
    const bool runs_complete = std::isfinite(beta1.average_map) &&
                               std::isfinite(neck1.average_map);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "avg mAP: neck1 %.3f < neck6 %.3f; beta=1 %.3f, beta=3 %.3f",
                  neck1.average_map, full_neck.average_map, beta1.average_map,
                  full_neck.average_map);
    detail = buf;
    return neck_ordered && runs_complete;
}

// ---------------------------------------------------------------------------
// criterion 8: determinism and serialization round trips
// ---------------------------------------------------------------------------

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool criterion_determinism(std::string& detail) {
    const std::string dir = "/tmp/tadml_acceptance";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    Rng rng(555);

    // checkpoint round trip
    ModelConfig mc;
    mc.input_dim = 8; mc.width = 16; mc.num_levels = 2; mc.neck_stages = 2;
    mc.num_classes = 2;
    Model model(mc, 7);
    model.params().quantize_f32();
    save_checkpoint(dir + "/a.ckpt", model);
    Model loaded = load_checkpoint(dir + "/a.ckpt");
    save_checkpoint(dir + "/b.ckpt", loaded);
    bool ok = file_bytes(dir + "/a.ckpt") == file_bytes(dir + "/b.ckpt");

    // feature file round trip
    FeatureSequence seq;
    seq.video_id = "v";
    seq.frames_per_feature = 2;
    seq.features = Tensor({12, 5});
    for (double& v : seq.features.values())
        v = static_cast<double>(static_cast<float>(rng.normal()));
    save_features(dir + "/f1.bin", seq);
    FeatureSequence back = load_features(dir + "/f1.bin");
    save_features(dir + "/f2.bin", back);
    ok = ok && file_bytes(dir + "/f1.bin") == file_bytes(dir + "/f2.bin");

    // shuffled detections file evaluates identically
    GtMap gts;
    gts["v"] = {100.0, {{{10, 30}, 0}, {{50, 90}, 1}}};
    std::vector<Detection> dets{{{11, 29}, 0, 0.8},
                                {{48, 88}, 1, 0.7},
                                {{5, 20}, 0, 0.3},
                                {{60, 95}, 1, 0.6}};
    save_annotations_json(dir + "/gt.json", gts);
    DetMap dm1;
    dm1["v"] = dets;
    std::reverse(dets.begin(), dets.end());
    std::swap(dets[0], dets[2]);
    DetMap dm2;
    dm2["v"] = dets;
    save_detections_json(dir + "/d1.json", dm1);
    save_detections_json(dir + "/d2.json", dm2);
    const auto r1 = evaluate_files(dir + "/d1.json", dir + "/gt.json", {0.3, 0.5, 0.7});
    const auto r2 = evaluate_files(dir + "/d2.json", dir + "/gt.json", {0.3, 0.5, 0.7});
    ok = ok && r1.average_map == r2.average_map;
    for (std::size_t i = 0; i < r1.map_per_threshold.size(); ++i)
        ok = ok && r1.map_per_threshold[i] == r2.map_per_threshold[i];

    std::filesystem::remove_all(dir);
    detail = "checkpoint, feature file, and shuffled-eval round trips";
    return ok;
}

}  // namespace

int main() {
    std::string detail;

    bool ok = criterion_gradients(detail);
    report("gradient checks: primitives, mechanics unit, full toy model", ok, detail);

    detail.clear();
    ok = criterion_loss_algebra(detail);
    report("loss algebra hand values", ok, detail);

    detail.clear();
    ok = criterion_oracles(detail);
    report("soft-NMS and AP match brute-force oracles", ok, detail);

    detail.clear();
    ok = criterion_round_trip(detail);
    report("assignment/decode round trip within 1e-6 frames", ok, detail);

    detail.clear();
    ok = criterion_geometry(detail);
    report("pyramid geometry at T=2304", ok, detail);

    detail.clear();
    BenchResult bench;
    ok = criterion_benchmark(detail, bench);
    report("end-to-end synthetic benchmark", ok, detail);

    detail.clear();
    ok = criterion_ablations(detail, bench);
    report("ablations: neck depth ordering, beta sweep", ok, detail);

    detail.clear();
    ok = criterion_determinism(detail);
    report("determinism and serialization round trips", ok, detail);

    std::printf("%s\n", g_all_ok ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
    return g_all_ok ? 0 : 1;
}
