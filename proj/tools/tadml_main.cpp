// tadml command line: train / infer / eval / synth / gradcheck.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "tadml/trainer.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using namespace tadml;

namespace {

// Flat key = value config (toml-style subset, '#' comments); .json accepted too.
std::map<std::string, std::string> load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        nlohmann::json j;
        is >> j;
        for (auto& [k, v] : j.items())
            kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
        return kv;
    }
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r\"");
            const auto e = s.find_last_not_of(" \t\r\"");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

template <typename T>
void read_key(const std::map<std::string, std::string>& kv, const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
        out = it->second == "true" || it->second == "1";
    } else if constexpr (std::is_floating_point_v<T>) {
        out = std::stod(it->second);
    } else {
        out = static_cast<T>(std::stoull(it->second));
    }
}

TrainConfig parse_train_config(const std::map<std::string, std::string>& kv) {
    TrainConfig cfg;
    read_key(kv, "epochs", cfg.epochs);
    read_key(kv, "batch_size", cfg.batch_size);
    read_key(kv, "base_lr", cfg.base_lr);
    read_key(kv, "warmup_epochs", cfg.warmup_epochs);
    read_key(kv, "seed", cfg.seed);
    read_key(kv, "lambda_cls", cfg.lambda_cls);
    read_key(kv, "lambda_reg", cfg.lambda_reg);
    read_key(kv, "beta", cfg.beta);
    read_key(kv, "max_len", cfg.max_len);
    read_key(kv, "input_dim", cfg.model.input_dim);
    read_key(kv, "width", cfg.model.width);
    read_key(kv, "num_levels", cfg.model.num_levels);
    read_key(kv, "neck_stages", cfg.model.neck_stages);
    read_key(kv, "num_classes", cfg.model.num_classes);
    read_key(kv, "residual", cfg.model.residual);
    read_key(kv, "eq1_literal", cfg.model.eq1_literal);
    read_key(kv, "focal_alpha", cfg.focal.alpha);
    read_key(kv, "focal_gamma", cfg.focal.gamma);
    return cfg;
}

SynthConfig parse_synth_config(const std::map<std::string, std::string>& kv) {
    SynthConfig cfg;
    read_key(kv, "num_videos", cfg.num_videos);
    read_key(kv, "T", cfg.T);
    read_key(kv, "D", cfg.D);
    read_key(kv, "num_classes", cfg.num_classes);
    read_key(kv, "actions_min", cfg.actions_min);
    read_key(kv, "actions_max", cfg.actions_max);
    read_key(kv, "min_action_len", cfg.min_action_len);
    read_key(kv, "max_action_len", cfg.max_action_len);
    read_key(kv, "noise_level", cfg.noise_level);
    read_key(kv, "seed", cfg.seed);
    return cfg;
}

Dataset load_dataset(const std::string& manifest_path, const std::string& gt_path) {
    auto entries = load_manifest(manifest_path);
    GtMap gts = load_annotations_json(gt_path);
    Dataset data;
    const fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& e : entries) {
        fs::path p(e.feature_path);
        if (p.is_relative()) p = base / p;
        SynthVideo v;
        v.features = load_features(p.string());
        v.features.video_id = e.video_id;
        auto it = gts.find(e.video_id);
        if (it != gts.end()) v.gts = it->second.annotations;
        data.push_back(std::move(v));
    }
    return data;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& gt_path, const std::string& out_dir) {
    TrainConfig cfg = parse_train_config(load_config(config_path));
    Dataset data = load_dataset(manifest_path, gt_path);
    fs::create_directories(out_dir);
    TrainResult res = train(cfg, data, out_dir, /*verbose=*/true);
    if (res.aborted_nan) {
        std::cerr << "training aborted on non-finite loss\n";
        return 2;
    }
    std::ofstream log(fs::path(out_dir) / "train_log.json");
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : res.log)
        j.push_back({{"epoch", e.epoch}, {"total", e.total}, {"cls", e.cls},
                     {"reg", e.reg}, {"lr", e.lr}});
    log << j.dump(2) << "\n";
    std::cout << "checkpoint: " << (fs::path(out_dir) / "latest.ckpt").string() << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& features_path,
              const std::string& out_path) {
    Model model = load_checkpoint(ckpt_path);
    std::vector<FeatureSequence> inputs;
    if (features_path.size() > 5 &&
        features_path.substr(features_path.size() - 5) == ".json") {
        const fs::path base = fs::path(features_path).parent_path();
        for (const auto& e : load_manifest(features_path)) {
            fs::path p(e.feature_path);
            if (p.is_relative()) p = base / p;
            FeatureSequence seq = load_features(p.string());
            seq.video_id = e.video_id;
            inputs.push_back(std::move(seq));
        }
    } else {
        inputs.push_back(load_features(features_path));
    }

    DetMap dets;
    double total_s = 0.0;
    for (const auto& seq : inputs) {
        InferResult r = infer(model, seq);
        total_s += r.wall_seconds;
        std::printf("video %s: %zu detections in %.3f s\n", seq.video_id.c_str(),
                    r.detections.size(), r.wall_seconds);
        dets[seq.video_id] = std::move(r.detections);
    }
    save_detections_json(out_path, dets);
    std::printf("throughput: %.1f videos/s (%zu videos, %.3f s)\n",
                inputs.size() / std::max(total_s, 1e-9), inputs.size(), total_s);
    return 0;
}

int cmd_eval(const std::string& dets_path, const std::string& gt_path,
             const std::string& thresholds_arg, const std::string& report_path) {
    std::vector<double> thresholds;
    std::stringstream ss(thresholds_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) thresholds.push_back(std::stod(tok));

    std::vector<std::string> unmatched;
    EvalReport report = evaluate_files(dets_path, gt_path, thresholds, &unmatched);
    std::cout << report_to_table(report);
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        os << report_to_json(report) << "\n";
    }
    if (!unmatched.empty()) {
        std::cerr << "unmatched video ids (excluded):\n";
        for (const auto& v : unmatched) std::cerr << "  " << v << "\n";
        return 3;
    }
    return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    SynthConfig cfg = parse_synth_config(load_config(config_path));
    auto videos = synth_dataset(cfg);
    fs::create_directories(out_dir);

    std::vector<ManifestEntry> manifest;
    GtMap gts;
    for (const auto& v : videos) {
        const std::string fname = v.features.video_id + ".tdml";
        save_features((fs::path(out_dir) / fname).string(), v.features);
        manifest.push_back({v.features.video_id, fname});
        VideoAnnotations ann;
        ann.duration_frames = static_cast<double>(v.features.length());
        ann.annotations = v.gts;
        gts.emplace(v.features.video_id, std::move(ann));
    }
    save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    save_annotations_json((fs::path(out_dir) / "annotations.json").string(), gts);
    std::cout << "wrote " << videos.size() << " videos to " << out_dir << "\n";
    return 0;
}

int run_gradcheck_module(const std::string& module);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Anchor-free temporal action detection with Mechanics-MLP blocks"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, gt_path, out_path;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path, "train config (key=value or json)")->required();
    train_cmd->add_option("--data", manifest_path, "dataset manifest json")->required();
    train_cmd->add_option("--gt", gt_path, "annotations json")->required();
    train_cmd->add_option("--out", out_path, "output directory")->required();

    std::string ckpt_path, features_path, dets_out;
    auto* infer_cmd = app.add_subcommand("infer", "run inference");
    infer_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    infer_cmd->add_option("--features", features_path, "feature file or manifest json")->required();
    infer_cmd->add_option("--out", dets_out, "detections json output")->required();

    std::string dets_path, eval_gt, thresholds = "0.3,0.4,0.5,0.6,0.7", report_path;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate detections");
    eval_cmd->add_option("--dets", dets_path, "detections json")->required();
    eval_cmd->add_option("--gt", eval_gt, "annotations json")->required();
    eval_cmd->add_option("--thresholds", thresholds, "comma-separated tIoU thresholds");
    eval_cmd->add_option("--report", report_path, "write json report here");

    std::string synth_config, synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--config", synth_config, "synth config file")->required();
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    std::string gc_module = "all";
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc_cmd->add_option("--module", gc_module, "all|mechanics|network|losses");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(config_path, manifest_path, gt_path, out_path);
        if (*infer_cmd) return cmd_infer(ckpt_path, features_path, dets_out);
        if (*eval_cmd) return cmd_eval(dets_path, eval_gt, thresholds, report_path);
        if (*synth_cmd) return cmd_synth(synth_config, synth_out);
        if (*gc_cmd) return run_gradcheck_module(gc_module);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

namespace {

int run_gradcheck_module(const std::string& module) {
    Rng rng(99);
    bool all_ok = true;
    auto print = [&](const std::string& what, const GradCheckReport& r) {
        for (const auto& e : r.entries)
            std::printf("%-10s %-24s max rel err %.3e %s\n", what.c_str(),
                        e.name.c_str(), e.max_rel_err, e.ok ? "ok" : "FAIL");
        all_ok = all_ok && r.ok;
    };

    if (module == "all" || module == "mechanics") {
        MechanicsParams p;
        const std::size_t D = 8;
        Tensor x({4, D});
        for (double& v : x.values()) v = rng.normal();
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
        auto f = [&](Tape* tape) {
            Tensor y = mechanics_unit(tape, x, p);
            double s = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) s += y.at(i);
            Tensor loss = Tensor::scalar(s);
            if (tape) {
                Tensor yc = y, lc = loss;
                tape->record([yc, lc]() mutable {
                    for (double& g : yc.ensure_grad()) g += lc.grad_view()[0];
                });
            }
            return loss;
        };
        print("mechanics", grad_check(f, {{"Wa", p.Wa}, {"Wb", p.Wb}, {"theta", p.theta},
                                          {"Wc1", p.Wc1}, {"Wc2", p.Wc2},
                                          {"x", x}}, 1e-4));
    }

    if (module == "all" || module == "network" || module == "losses") {
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
        print(module == "losses" ? "losses" : "network", grad_check(f, watched, 1e-4));
    }

    std::printf("gradcheck %s\n", all_ok ? "PASSED" : "FAILED");
    return all_ok ? 0 : 1;
}

}  // namespace
