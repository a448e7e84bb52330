#include "tadml/postprocess.hpp"

#include <algorithm>
#include <cmath>

#include "tadml/evaluation.hpp"

namespace tadml {

std::vector<Detection> decode(const std::vector<HeadOutput>& heads,
                              const std::vector<LevelGeometry>& geometry,
                              double input_len, const DecodeConfig& cfg) {
    if (heads.size() != geometry.size())
        throw DimensionError("decode: head/geometry level count mismatch");

    std::vector<Detection> all;
    for (std::size_t l = 0; l < heads.size(); ++l) {
        const auto& head = heads[l];
        const auto& geo = geometry[l];
        const double s = static_cast<double>(geo.stride);
        const std::size_t K = head.class_logits.cols();
        for (std::size_t i = 0; i < geo.length; ++i) {
            if (i >= geo.valid_len) continue;  // padded location
            const double c = (static_cast<double>(i) + 0.5) * s;
            const double ds = head.distances.at(i, 0);
            const double de = head.distances.at(i, 1);
            double start = std::max(0.0, c - ds * s);
            double end = std::min(input_len, c + de * s);
            if (!(end > start)) continue;  // zero-length dropped
            for (std::size_t k = 0; k < K; ++k) {
                const double z = head.class_logits.at(i, k);
                const double score = 1.0 / (1.0 + std::exp(-z));
                if (score < cfg.score_threshold) continue;
                all.push_back({{start, end}, static_cast<int>(k), score});
            }
        }
    }

    // top-k per class by score, deterministic ties
    auto det_less = [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
        return a.class_id < b.class_id;
    };
    std::stable_sort(all.begin(), all.end(), det_less);
    std::vector<std::size_t> kept_per_class;
    std::vector<Detection> out;
    for (const auto& d : all) {
        if (kept_per_class.size() <= static_cast<std::size_t>(d.class_id))
            kept_per_class.resize(d.class_id + 1, 0);
        if (kept_per_class[d.class_id] >= cfg.pre_nms_topk) continue;
        ++kept_per_class[d.class_id];
        out.push_back(d);
    }
    return out;
}

std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsConfig& cfg) {
    if (!(cfg.sigma > 0.0)) throw ConfigError("soft_nms: sigma must be positive");

    std::vector<Detection> out;
    std::vector<char> alive(dets.size(), 1);
    std::size_t remaining = dets.size();
    while (remaining > 0) {
        // max score, tie-break (earlier start, smaller class_id)
        std::size_t best = dets.size();
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (!alive[i]) continue;
            if (best == dets.size()) { best = i; continue; }
            const auto& a = dets[i];
            const auto& b = dets[best];
            if (a.score > b.score ||
                (a.score == b.score &&
                 (a.segment.start < b.segment.start ||
                  (a.segment.start == b.segment.start && a.class_id < b.class_id))))
                best = i;
        }
        alive[best] = 0;
        --remaining;
        if (dets[best].score >= cfg.final_threshold) out.push_back(dets[best]);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (!alive[i] || dets[i].class_id != dets[best].class_id) continue;
            const double ov = tiou(dets[i].segment, dets[best].segment);
            dets[i].score *= std::exp(-(ov * ov) / cfg.sigma);
            if (dets[i].score < cfg.final_threshold) {
                alive[i] = 0;
                --remaining;
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
        return a.class_id < b.class_id;
    });
    return out;
}

}  // namespace tadml
