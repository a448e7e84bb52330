#pragma once

#include <map>
#include <string>
#include <vector>

#include "tadml/common.hpp"

namespace tadml {

// Intersection over union of two temporal intervals.
double tiou(const Segment& a, const Segment& b);

struct VideoAnnotations {
    double duration_frames = 0.0;
    std::vector<GroundTruthInstance> annotations;
};

using GtMap = std::map<std::string, VideoAnnotations>;
using DetMap = std::map<std::string, std::vector<Detection>>;

// Single-class AP with greedy highest-tIoU matching and the all-point
// interpolated (precision envelope) area. Detections may span videos; a
// detection can only match a ground truth from the same video index.
struct ApInput {
    int video = 0;  // opaque grouping index
    Segment segment;
    double score = 0.0;
};
struct ApGt {
    int video = 0;
    Segment segment;
};

double average_precision(std::vector<ApInput> dets, const std::vector<ApGt>& gts,
                         double threshold, bool* no_gt_flag = nullptr);

// Convenience overload for single-video inputs (all same class).
double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruthInstance>& gts,
                         double threshold);

struct EvalReport {
    std::vector<double> thresholds;
    // ap[class][threshold_index]; classes with zero GTs carry -1 and are
    // excluded from mAP
    std::map<int, std::vector<double>> ap;
    std::vector<double> map_per_threshold;
    double average_map = 0.0;
    std::size_t num_gts = 0;
    std::size_t num_dets = 0;
};

EvalReport mean_ap(const DetMap& dets, const GtMap& gts,
                   const std::vector<double>& thresholds);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

// Ground-truth / detection JSON files (External Interfaces).
GtMap load_annotations_json(const std::string& path);
void save_annotations_json(const std::string& path, const GtMap& gts);
DetMap load_detections_json(const std::string& path);
void save_detections_json(const std::string& path, const DetMap& dets,
                          const std::string& unit = "frames");

}  // namespace tadml
