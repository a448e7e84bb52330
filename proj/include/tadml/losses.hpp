#pragma once

#include <vector>

#include "tadml/network.hpp"

namespace tadml {

struct LevelGeometry {
    int stride = 0;
    std::size_t length = 0;      // number of locations
    std::size_t valid_len = 0;   // locations counted as real (unpadded) input
};

std::vector<LevelGeometry> geometry_of(const ForwardResult& fwd);

// Per-level regression range, in frames, applied to max(d_s, d_e) * stride.
struct AssignConfig {
    std::vector<std::pair<double, double>> ranges_frames;

    // Contiguous octave ranges [0,8), [8,16), ... , [2^(l+1), inf).
    static AssignConfig defaults(std::size_t num_levels);
};

struct LocationTargets {
    struct Level {
        std::vector<int> label;          // class id, or -1 for background
        std::vector<double> ds, de;      // stride-normalized, positives only
        std::vector<std::uint8_t> positive;
        std::vector<std::uint8_t> valid;
    };
    std::vector<Level> levels;
    std::size_t num_positive = 0;
};

LocationTargets assign_targets(const std::vector<GroundTruthInstance>& gts,
                               const std::vector<LevelGeometry>& geometry,
                               const AssignConfig& cfg);

struct FocalConfig {
    double alpha = 0.25;
    double gamma = 2.0;
};

// Sum over locations/classes of the binary sigmoid focal loss at one level
// (no normalizer applied here). Backward writes into the logits tensor.
Tensor focal_loss_sum(Tape* tape, const Tensor& class_logits,
                      const LocationTargets::Level& targets, const FocalConfig& cfg);

// Plain (non-autograd) beta-GIoU on 1D intervals; used directly by tests and
// wrapped by the autograd regression term below.
double beta_giou_loss(const Segment& pred, const Segment& gt, double beta);

// Sum of beta-GIoU over positive locations at one level; pred segments are
// decoded in stride units from the distances tensor. Backward writes into
// `distances`. Zero-length predictions are clamped to 1e-6 stride units and
// counted in `degenerate_count` when provided.
Tensor giou_loss_sum(Tape* tape, const Tensor& distances,
                     const LocationTargets::Level& targets, double beta,
                     std::size_t* degenerate_count = nullptr);

struct LossConfig {
    double lambda_cls = 1.0;
    double lambda_reg = 1.0;
    double beta = 3.0;
    FocalConfig focal;
};

struct LossBreakdown {
    Tensor total;       // scalar, on tape
    double cls = 0.0;   // weighted classification term value
    double reg = 0.0;   // weighted regression term value
    std::size_t num_positive = 0;
    std::size_t degenerate_preds = 0;
};

LossBreakdown total_loss(Tape* tape, const std::vector<HeadOutput>& heads,
                         const LocationTargets& targets, const LossConfig& cfg);

}  // namespace tadml
