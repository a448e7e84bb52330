#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tadml/data_io.hpp"
#include "tadml/evaluation.hpp"
#include "tadml/losses.hpp"
#include "tadml/network.hpp"
#include "tadml/postprocess.hpp"

namespace tadml {

struct TrainConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 4;
    double base_lr = 1e-5;
    std::size_t warmup_epochs = 5;
    std::uint64_t seed = 1;
    double lambda_cls = 1.0;
    double lambda_reg = 1.0;
    double beta = 3.0;
    std::size_t max_len = 2304;
    ModelConfig model;
    FocalConfig focal;

    void validate() const;
};

struct OptimizerState {
    std::vector<std::vector<double>> m, v;  // per parameter, in store order
    std::size_t step = 0;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over every parameter in the store.
// Throws NumericError (step rejected, parameters untouched) on non-finite
// gradients.
void adam_step(ParamStore& params, OptimizerState& state, double lr,
               const AdamConfig& cfg = {});

// Linear ramp 0 -> base_lr over warmup_steps, then constant.
double lr_schedule(std::size_t step, std::size_t total_steps,
                   std::size_t warmup_steps, double base_lr);

struct EpochLog {
    std::size_t epoch = 0;
    double total = 0.0, cls = 0.0, reg = 0.0, lr = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
    bool aborted_nan = false;  // true => model holds the last good checkpoint
};

using Dataset = std::vector<SynthVideo>;  // (features, ground truths) pairs

// Deterministic given cfg.seed. When checkpoint_dir is set, a quantized
// checkpoint is written after every epoch (epoch_%04d.ckpt + latest.ckpt).
TrainResult train(const TrainConfig& cfg, const Dataset& dataset,
                  const std::optional<std::string>& checkpoint_dir = std::nullopt,
                  bool verbose = false);

struct InferConfig {
    DecodeConfig decode;
    SoftNmsConfig nms;
};

struct InferResult {
    std::vector<Detection> detections;  // frame units
    double wall_seconds = 0.0;
};

// Full-sequence inference: pad to a multiple of 2^num_levels (masked),
// forward, decode, soft-NMS.
InferResult infer(const Model& model, const FeatureSequence& features,
                  const InferConfig& cfg = {});

// Evaluates detections produced by this pipeline against annotations.
EvalReport evaluate_files(const std::string& dets_path, const std::string& gt_path,
                          const std::vector<double>& thresholds,
                          std::vector<std::string>* unmatched = nullptr);

}  // namespace tadml
