#pragma once

#include <vector>

#include "tadml/losses.hpp"
#include "tadml/network.hpp"

namespace tadml {

struct DecodeConfig {
    double score_threshold = 0.05;
    std::size_t pre_nms_topk = 200;  // per class
};

// Turns head outputs into scored segments in input-frame units. Locations
// masked as padding never produce detections; segments are clamped to
// [0, input_len) and zero-length results dropped.
std::vector<Detection> decode(const std::vector<HeadOutput>& heads,
                              const std::vector<LevelGeometry>& geometry,
                              double input_len, const DecodeConfig& cfg);

struct SoftNmsConfig {
    double sigma = 0.5;
    double final_threshold = 0.001;
};

// Gaussian Soft-NMS, per class: repeatedly take the max-score detection and
// decay the remaining same-class scores by exp(-tIoU^2 / sigma). Segments are
// never altered. Output sorted by final score descending with deterministic
// ties (earlier start, then smaller class id).
std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsConfig& cfg);

}  // namespace tadml
