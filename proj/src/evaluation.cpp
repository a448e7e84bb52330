#include "tadml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tadml {

double tiou(const Segment& a, const Segment& b) {
    if (!(a.start < a.end) || !(b.start < b.end))
        throw ConfigError("tiou: empty segment");
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return inter / uni;
}

double average_precision(std::vector<ApInput> dets, const std::vector<ApGt>& gts,
                         double threshold, bool* no_gt_flag) {
    if (no_gt_flag) *no_gt_flag = gts.empty();
    if (gts.empty()) return 0.0;
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("average_precision: threshold must be in (0, 1]");

    std::stable_sort(dets.begin(), dets.end(), [](const ApInput& a, const ApInput& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
        return a.video < b.video;
    });

    std::vector<char> gt_matched(gts.size(), 0);
    std::vector<char> is_tp(dets.size(), 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best_ov = 0.0;
        std::size_t best_g = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_matched[g] || gts[g].video != dets[d].video) continue;
            const double ov = tiou(dets[d].segment, gts[g].segment);
            if (ov >= threshold && ov > best_ov) {
                best_ov = ov;
                best_g = g;
            }
        }
        if (best_g < gts.size()) {
            gt_matched[best_g] = 1;
            is_tp[d] = 1;
        }
    }

    // precision envelope, all-point interpolation:
    //   AP = (1/|GT|) * sum over TP rank k of max_{j : cum_tp_j >= k} prec_j
    const std::size_t n = dets.size();
    std::vector<double> prec(n);
    std::vector<std::size_t> cum_tp(n);
    std::size_t tp = 0;
    for (std::size_t j = 0; j < n; ++j) {
        tp += is_tp[j] ? 1 : 0;
        cum_tp[j] = tp;
        prec[j] = static_cast<double>(tp) / static_cast<double>(j + 1);
    }
    double sum_env = 0.0, running_max = 0.0;
    for (std::size_t j = n; j-- > 0;) {
        running_max = std::max(running_max, prec[j]);
        if (is_tp[j]) sum_env += running_max;
    }
    return sum_env / static_cast<double>(gts.size());
}

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruthInstance>& gts,
                         double threshold) {
    std::vector<ApInput> d;
    d.reserve(dets.size());
    for (const auto& det : dets) d.push_back({0, det.segment, det.score});
    std::vector<ApGt> g;
    g.reserve(gts.size());
    for (const auto& gt : gts) g.push_back({0, gt.segment});
    return average_precision(std::move(d), g, threshold);
}

EvalReport mean_ap(const DetMap& dets, const GtMap& gts,
                   const std::vector<double>& thresholds) {
    if (thresholds.empty()) throw ConfigError("mean_ap: empty threshold set");
    EvalReport report;
    report.thresholds = thresholds;

    // stable video -> index mapping
    std::map<std::string, int> video_index;
    for (const auto& [vid, _] : gts) {
        int idx = static_cast<int>(video_index.size());
        video_index.emplace(vid, idx);
    }

    std::set<int> classes;
    std::map<int, std::vector<ApGt>> gts_by_class;
    for (const auto& [vid, ann] : gts) {
        const int v = video_index.at(vid);
        for (const auto& gt : ann.annotations) {
            classes.insert(gt.class_id);
            gts_by_class[gt.class_id].push_back({v, gt.segment});
            ++report.num_gts;
        }
    }
    std::map<int, std::vector<ApInput>> dets_by_class;
    for (const auto& [vid, vdets] : dets) {
        auto it = video_index.find(vid);
        if (it == video_index.end()) continue;
        for (const auto& d : vdets) {
            dets_by_class[d.class_id].push_back({it->second, d.segment, d.score});
            ++report.num_dets;
        }
    }

    report.map_per_threshold.assign(thresholds.size(), 0.0);
    for (int cls : classes) report.ap[cls].assign(thresholds.size(), -1.0);
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        double sum = 0.0;
        std::size_t count = 0;
        for (int cls : classes) {
            const auto& cgts = gts_by_class[cls];
            if (cgts.empty()) continue;  // excluded from mAP
            auto dit = dets_by_class.find(cls);
            const double ap = average_precision(
                dit == dets_by_class.end() ? std::vector<ApInput>{} : dit->second,
                cgts, thresholds[ti]);
            report.ap[cls][ti] = ap;
            sum += ap;
            ++count;
        }
        report.map_per_threshold[ti] = count ? sum / static_cast<double>(count) : 0.0;
    }
    double avg = 0.0;
    for (double m : report.map_per_threshold) avg += m;
    report.average_map = avg / static_cast<double>(thresholds.size());
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["thresholds"] = report.thresholds;
    j["map_per_threshold"] = report.map_per_threshold;
    j["average_map"] = report.average_map;
    j["num_gts"] = report.num_gts;
    j["num_dets"] = report.num_dets;
    nlohmann::json ap = nlohmann::json::object();
    for (const auto& [cls, aps] : report.ap) ap[std::to_string(cls)] = aps;
    j["ap_per_class"] = ap;
    return j.dump(2);
}

std::string report_to_table(const EvalReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "tIoU     ";
    for (double t : report.thresholds) os << std::setw(9) << t;
    os << std::setw(9) << "Avg" << "\n";
    os << "mAP      ";
    for (double m : report.map_per_threshold) os << std::setw(9) << m;
    os << std::setw(9) << report.average_map << "\n";
    return os.str();
}

GtMap load_annotations_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("annotations: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotations: parse error in " + path + ": " + e.what());
    }
    GtMap out;
    for (auto& [vid, entry] : j.items()) {
        VideoAnnotations ann;
        ann.duration_frames = entry.at("duration_frames").get<double>();
        for (auto& a : entry.at("annotations")) {
            GroundTruthInstance gt;
            gt.segment.start = a.at("start").get<double>();
            gt.segment.end = a.at("end").get<double>();
            gt.class_id = a.at("class").get<int>();
            if (!(gt.segment.start < gt.segment.end))
                throw FormatError("annotations: empty segment in " + vid);
            ann.annotations.push_back(gt);
        }
        out.emplace(vid, std::move(ann));
    }
    return out;
}

void save_annotations_json(const std::string& path, const GtMap& gts) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [vid, ann] : gts) {
        nlohmann::json entry;
        entry["duration_frames"] = ann.duration_frames;
        entry["annotations"] = nlohmann::json::array();
        for (const auto& gt : ann.annotations)
            entry["annotations"].push_back({{"start", gt.segment.start},
                                            {"end", gt.segment.end},
                                            {"class", gt.class_id}});
        j[vid] = std::move(entry);
    }
    std::ofstream os(path);
    if (!os) throw FormatError("annotations: cannot write " + path);
    os << j.dump(2) << "\n";
}

DetMap load_detections_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("detections: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("detections: parse error in " + path + ": " + e.what());
    }
    if (!j.contains("unit") || !j.contains("results"))
        throw FormatError("detections: missing unit/results header in " + path);
    DetMap out;
    for (auto& [vid, arr] : j.at("results").items()) {
        std::vector<Detection> dets;
        for (auto& d : arr) {
            Detection det;
            det.segment.start = d.at("start").get<double>();
            det.segment.end = d.at("end").get<double>();
            det.class_id = d.at("class").get<int>();
            det.score = d.at("score").get<double>();
            dets.push_back(det);
        }
        out.emplace(vid, std::move(dets));
    }
    return out;
}

void save_detections_json(const std::string& path, const DetMap& dets,
                          const std::string& unit) {
    nlohmann::json results = nlohmann::json::object();
    for (const auto& [vid, vdets] : dets) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& d : vdets)
            arr.push_back({{"start", d.segment.start},
                           {"end", d.segment.end},
                           {"class", d.class_id},
                           {"score", d.score}});
        results[vid] = std::move(arr);
    }
    nlohmann::json j;
    j["unit"] = unit;
    j["results"] = std::move(results);
    std::ofstream os(path);
    if (!os) throw FormatError("detections: cannot write " + path);
    os << j.dump(2) << "\n";
}

}  // namespace tadml
