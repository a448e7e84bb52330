#include "tadml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

namespace tadml {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (!(base_lr > 0.0)) throw ConfigError("TrainConfig: base_lr must be positive");
    if (max_len < model.min_input_len())
        throw ConfigError("TrainConfig: max_len shorter than the pyramid minimum");
    model.validate();
}

void adam_step(ParamStore& params, OptimizerState& state, double lr,
               const AdamConfig& cfg) {
    const auto& order = params.order();
    if (state.m.empty()) {
        state.m.resize(order.size());
        state.v.resize(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            const std::size_t n = params.get(order[i]).numel();
            state.m[i].assign(n, 0.0);
            state.v[i].assign(n, 0.0);
        }
    }
    for (const auto& name : order) {
        Tensor& p = params.get(name);
        if (!p.has_grad()) continue;
        for (double g : p.grad_view())
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in " + name +
                                   "; step rejected");
    }

    const std::size_t t = ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < order.size(); ++i) {
        Tensor& p = params.get(order[i]);
        auto& vals = p.values();
        const auto& grad = p.ensure_grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < vals.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            vals[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

double lr_schedule(std::size_t step, std::size_t total_steps,
                   std::size_t warmup_steps, double base_lr) {
    if (warmup_steps > total_steps)
        throw ConfigError("lr_schedule: warmup_steps exceeds total_steps");
    if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

namespace {

std::size_t round_up(std::size_t n, std::size_t multiple) {
    return ((n + multiple - 1) / multiple) * multiple;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& dataset,
                  const std::optional<std::string>& checkpoint_dir, bool verbose) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("train: empty dataset");

    Rng rng(cfg.seed);
    TrainResult result{Model(cfg.model, rng.next_u64()), {}, false};
    Model& model = result.model;

    OptimizerState opt;
    LossConfig loss_cfg{cfg.lambda_cls, cfg.lambda_reg, cfg.beta, cfg.focal};
    AssignConfig assign_cfg = AssignConfig::defaults(cfg.model.num_levels);

    const std::size_t pad_to = round_up(cfg.max_len, cfg.model.min_input_len());
    const std::size_t steps_per_epoch =
        (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;
    const std::size_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;

    std::vector<std::size_t> indices(dataset.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

    std::size_t global_step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // seeded Fisher-Yates shuffle
        for (std::size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.uniform_int(i)]);

        double ep_total = 0.0, ep_cls = 0.0, ep_reg = 0.0, last_lr = 0.0;
        std::size_t ep_batches = 0;
        for (std::size_t b = 0; b < dataset.size(); b += cfg.batch_size) {
            const std::size_t batch_end = std::min(b + cfg.batch_size, dataset.size());
            const double inv_batch = 1.0 / static_cast<double>(batch_end - b);

            model.params().zero_grads();
            double batch_total = 0.0, batch_cls = 0.0, batch_reg = 0.0;
            bool nan_hit = false;
            for (std::size_t k = b; k < batch_end; ++k) {
                const auto& sample = dataset[indices[k]];
                CropResult window = crop_or_pad(sample.features, sample.gts,
                                                pad_to, CropMode::Train, rng);
                Tape tape;
                try {
                    ForwardResult fwd = model.forward(&tape, window.seq.features,
                                                      window.valid_len);
                    LocationTargets targets =
                        assign_targets(window.gts, geometry_of(fwd), assign_cfg);
                    LossBreakdown bd = total_loss(&tape, fwd.heads, targets, loss_cfg);
                    if (!std::isfinite(bd.total.item())) { nan_hit = true; break; }
                    tape.backward(bd.total);
                    batch_total += inv_batch * bd.total.item();
                    batch_cls += inv_batch * bd.cls;
                    batch_reg += inv_batch * bd.reg;
                } catch (const NumericError&) {
                    nan_hit = true;
                    break;
                }
            }
            if (nan_hit) {
                result.aborted_nan = true;
                if (verbose)
                    std::fprintf(stderr, "train: non-finite loss at epoch %zu, aborting; "
                                         "last good checkpoint retained\n", epoch);
                return result;
            }
            // average gradients over the batch
            for (const auto& name : model.params().order())
                for (double& g : model.params().get(name).ensure_grad()) g *= inv_batch;

            const double lr = lr_schedule(global_step, total_steps, warmup_steps,
                                          cfg.base_lr);
            adam_step(model.params(), opt, lr);
            ++global_step;

            ep_total += batch_total;
            ep_cls += batch_cls;
            ep_reg += batch_reg;
            last_lr = lr;
            ++ep_batches;
        }

        EpochLog log{epoch, ep_total / ep_batches, ep_cls / ep_batches,
                     ep_reg / ep_batches, last_lr};
        result.log.push_back(log);
        if (verbose)
            std::printf("epoch %zu total %.6f cls %.6f reg %.6f lr %.3g\n",
                        log.epoch, log.total, log.cls, log.reg, log.lr);

        if (checkpoint_dir) {
            // quantize first so the live model matches the f32 checkpoint bytes
            model.params().quantize_f32();
            std::filesystem::create_directories(*checkpoint_dir);
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch);
            save_checkpoint(*checkpoint_dir + "/" + name, model);
            save_checkpoint(*checkpoint_dir + "/latest.ckpt", model);
        }
    }
    return result;
}

InferResult infer(const Model& model, const FeatureSequence& features,
                  const InferConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t multiple = model.config().min_input_len();
    const std::size_t T = features.length();
    const std::size_t padded = round_up(std::max(T, multiple), multiple);

    Rng dummy(0);
    CropResult window = crop_or_pad(features, {}, padded, CropMode::Eval, dummy);
    ForwardResult fwd = model.forward(nullptr, window.seq.features, window.valid_len);

    InferResult out;
    std::vector<Detection> raw = decode(fwd.heads, geometry_of(fwd),
                                        static_cast<double>(T), cfg.decode);
    out.detections = soft_nms(std::move(raw), cfg.nms);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

EvalReport evaluate_files(const std::string& dets_path, const std::string& gt_path,
                          const std::vector<double>& thresholds,
                          std::vector<std::string>* unmatched) {
    DetMap dets = load_detections_json(dets_path);
    GtMap gts = load_annotations_json(gt_path);
    if (unmatched) {
        for (const auto& [vid, _] : dets)
            if (!gts.count(vid)) unmatched->push_back(vid);
    }
    return mean_ap(dets, gts, thresholds);
}

}  // namespace tadml
