#include "tadml/losses.hpp"

#include <cmath>
#include <limits>

namespace tadml {

std::vector<LevelGeometry> geometry_of(const ForwardResult& fwd) {
    std::vector<LevelGeometry> geo;
    geo.reserve(fwd.levels.size());
    for (std::size_t l = 0; l < fwd.levels.size(); ++l)
        geo.push_back({fwd.levels[l].stride, fwd.levels[l].features.rows(),
                       fwd.valid_len[l]});
    return geo;
}

AssignConfig AssignConfig::defaults(std::size_t num_levels) {
    AssignConfig cfg;
    double lo = 0.0, hi = 8.0;
    for (std::size_t l = 0; l < num_levels; ++l) {
        const bool last = (l + 1 == num_levels);
        cfg.ranges_frames.emplace_back(lo, last ? std::numeric_limits<double>::infinity() : hi);
        lo = hi;
        hi *= 2.0;
    }
    return cfg;
}

LocationTargets assign_targets(const std::vector<GroundTruthInstance>& gts,
                               const std::vector<LevelGeometry>& geometry,
                               const AssignConfig& cfg) {
    if (cfg.ranges_frames.size() < geometry.size())
        throw ConfigError("assign_targets: missing range buckets for some levels");
    LocationTargets out;
    out.levels.resize(geometry.size());
    for (std::size_t l = 0; l < geometry.size(); ++l) {
        const auto& geo = geometry[l];
        const auto [range_lo, range_hi] = cfg.ranges_frames[l];
        auto& lvl = out.levels[l];
        lvl.label.assign(geo.length, -1);
        lvl.ds.assign(geo.length, 0.0);
        lvl.de.assign(geo.length, 0.0);
        lvl.positive.assign(geo.length, 0);
        lvl.valid.assign(geo.length, 0);
        const double s = static_cast<double>(geo.stride);
        for (std::size_t i = 0; i < geo.length; ++i) {
            if (i >= geo.valid_len) continue;  // padded location
            lvl.valid[i] = 1;
            const double c = (static_cast<double>(i) + 0.5) * s;
            const GroundTruthInstance* best = nullptr;
            for (const auto& gt : gts) {
                if (c < gt.segment.start || c >= gt.segment.end) continue;
                const double max_d = std::max(c - gt.segment.start, gt.segment.end - c);
                if (max_d < range_lo || max_d >= range_hi) continue;
                if (!best || gt.segment.length() < best->segment.length()) best = &gt;
            }
            if (best) {
                lvl.positive[i] = 1;
                lvl.label[i] = best->class_id;
                lvl.ds[i] = (c - best->segment.start) / s;
                lvl.de[i] = (best->segment.end - c) / s;
                ++out.num_positive;
            }
        }
    }
    return out;
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Tensor focal_loss_sum(Tape* tape, const Tensor& class_logits,
                      const LocationTargets::Level& targets, const FocalConfig& cfg) {
    class_logits.check_finite("focal_loss");
    const std::size_t T = class_logits.rows(), K = class_logits.cols();
    if (targets.label.size() != T)
        throw DimensionError("focal_loss: target/logit length mismatch");
    const double alpha = cfg.alpha, gamma = cfg.gamma;

    double sum = 0.0;
    const auto& zv = class_logits.values();
    for (std::size_t t = 0; t < T; ++t) {
        if (!targets.valid[t]) continue;
        for (std::size_t k = 0; k < K; ++k) {
            const double z = zv[t * K + k];
            const bool pos = targets.label[t] == static_cast<int>(k);
            const double log_p = -softplus(-z);
            const double log_q = -softplus(z);  // log(1 - p)
            const double p = 1.0 / (1.0 + std::exp(-z));
            if (pos)
                sum += -alpha * std::pow(1.0 - p, gamma) * log_p;
            else
                sum += -(1.0 - alpha) * std::pow(p, gamma) * log_q;
        }
    }
    Tensor loss = Tensor::scalar(sum);

    if (tape) {
        Tensor zc = class_logits, lc = loss;
        auto tg = targets;  // copy: labels/masks are small
        tape->record([zc, lc, tg, T, K, alpha, gamma]() mutable {
            const auto& gl = lc.grad_view();
            if (gl.empty()) return;
            const double g0 = gl[0];
            auto& gz = zc.ensure_grad();
            const auto& zv = zc.values();
            for (std::size_t t = 0; t < T; ++t) {
                if (!tg.valid[t]) continue;
                for (std::size_t k = 0; k < K; ++k) {
                    const double z = zv[t * K + k];
                    const double p = 1.0 / (1.0 + std::exp(-z));
                    const bool pos = tg.label[t] == static_cast<int>(k);
                    double dz;
                    if (pos) {
                        const double log_p = -softplus(-z);
                        dz = alpha * gamma * p * std::pow(1.0 - p, gamma) * log_p -
                             alpha * std::pow(1.0 - p, gamma + 1.0);
                    } else {
                        const double log_q = -softplus(z);
                        dz = (1.0 - alpha) * std::pow(p, gamma + 1.0) -
                             (1.0 - alpha) * gamma * std::pow(p, gamma) * (1.0 - p) * log_q;
                    }
                    gz[t * K + k] += g0 * dz;
                }
            }
        });
    }
    return loss;
}

namespace {

// beta-GIoU value and derivative w.r.t. pred endpoints (a0, a1).
double giou_with_grad(double a0, double a1, double b0, double b1, double beta,
                      double* da0, double* da1) {
    const double len_a = a1 - a0, len_b = b1 - b0;
    const double ilo = std::max(a0, b0), ihi = std::min(a1, b1);
    const double inter = std::max(0.0, ihi - ilo);
    const double uni = len_a + len_b - inter;
    const double c0 = std::min(a0, b0), c1 = std::max(a1, b1);
    const double len_c = c1 - c0;
    const double gap = len_c - uni;
    const double ratio = gap / len_c;
    const double loss = 1.0 - inter / uni + std::pow(ratio, beta);

    if (da0 && da1) {
        const double d_inter_a0 = (inter > 0.0 && a0 > b0) ? -1.0 : 0.0;
        const double d_inter_a1 = (inter > 0.0 && a1 < b1) ? 1.0 : 0.0;
        const double d_uni_a0 = -1.0 - d_inter_a0;
        const double d_uni_a1 = 1.0 - d_inter_a1;
        const double d_lenc_a0 = (a0 < b0) ? -1.0 : 0.0;
        const double d_lenc_a1 = (a1 > b1) ? 1.0 : 0.0;
        const double d_iou_a0 = (d_inter_a0 * uni - inter * d_uni_a0) / (uni * uni);
        const double d_iou_a1 = (d_inter_a1 * uni - inter * d_uni_a1) / (uni * uni);
        const double d_ratio_a0 =
            ((d_lenc_a0 - d_uni_a0) * len_c - gap * d_lenc_a0) / (len_c * len_c);
        const double d_ratio_a1 =
            ((d_lenc_a1 - d_uni_a1) * len_c - gap * d_lenc_a1) / (len_c * len_c);
        const double pow_grad = (ratio > 0.0 || beta <= 1.0)
            ? beta * std::pow(ratio, beta - 1.0)
            : 0.0;
        *da0 = -d_iou_a0 + pow_grad * d_ratio_a0;
        *da1 = -d_iou_a1 + pow_grad * d_ratio_a1;
    }
    return loss;
}

constexpr double kMinPredLen = 1e-6;  // stride units

}  // namespace

double beta_giou_loss(const Segment& pred, const Segment& gt, double beta) {
    if (beta < 1.0) throw ConfigError("beta_giou_loss: beta must be >= 1");
    if (!(gt.start < gt.end)) throw ConfigError("beta_giou_loss: empty ground truth");
    Segment p = pred;
    if (!(p.start < p.end)) {
        const double mid = 0.5 * (p.start + p.end);
        p.start = mid - 0.5 * kMinPredLen;
        p.end = mid + 0.5 * kMinPredLen;
    }
    return giou_with_grad(p.start, p.end, gt.start, gt.end, beta, nullptr, nullptr);
}

Tensor giou_loss_sum(Tape* tape, const Tensor& distances,
                     const LocationTargets::Level& targets, double beta,
                     std::size_t* degenerate_count) {
    const std::size_t T = distances.rows();
    if (distances.cols() != 2)
        throw DimensionError("giou_loss_sum: distances must be [T x 2]");
    if (targets.positive.size() != T)
        throw DimensionError("giou_loss_sum: target/distance length mismatch");

    double sum = 0.0;
    const auto& dv = distances.values();
    std::vector<double> grads(2 * T, 0.0);
    for (std::size_t i = 0; i < T; ++i) {
        if (!targets.positive[i]) continue;
        const double c = static_cast<double>(i) + 0.5;  // stride units
        double ds = dv[2 * i], de = dv[2 * i + 1];
        if (ds + de < kMinPredLen) {
            ds += 0.5 * kMinPredLen;
            de += 0.5 * kMinPredLen;
            if (degenerate_count) ++(*degenerate_count);
        }
        const double b0 = c - targets.ds[i], b1 = c + targets.de[i];
        double da0 = 0.0, da1 = 0.0;
        sum += giou_with_grad(c - ds, c + de, b0, b1, beta, &da0, &da1);
        grads[2 * i] = -da0;      // d/d(ds): a0 = c - ds
        grads[2 * i + 1] = da1;   // d/d(de): a1 = c + de
    }
    Tensor loss = Tensor::scalar(sum);

    if (tape) {
        Tensor dc = distances, lc = loss;
        tape->record([dc, lc, grads]() mutable {
            const auto& gl = lc.grad_view();
            if (gl.empty()) return;
            auto& gd = dc.ensure_grad();
            for (std::size_t i = 0; i < grads.size(); ++i) gd[i] += gl[0] * grads[i];
        });
    }
    return loss;
}

namespace {

Tensor weighted_sum(Tape* tape, const std::vector<std::pair<double, Tensor>>& terms) {
    double total = 0.0;
    for (const auto& [w, t] : terms) total += w * t.item();
    Tensor out = Tensor::scalar(total);
    if (tape) {
        auto terms_c = terms;
        Tensor oc = out;
        tape->record([terms_c, oc]() mutable {
            const auto& go = oc.grad_view();
            if (go.empty()) return;
            for (auto& [w, t] : terms_c) t.ensure_grad()[0] += w * go[0];
        });
    }
    return out;
}

}  // namespace

LossBreakdown total_loss(Tape* tape, const std::vector<HeadOutput>& heads,
                         const LocationTargets& targets, const LossConfig& cfg) {
    if (heads.size() != targets.levels.size())
        throw DimensionError("total_loss: head/target level count mismatch");
    if (cfg.lambda_cls < 0.0 || cfg.lambda_reg < 0.0)
        throw ConfigError("total_loss: loss weights must be non-negative");

    LossBreakdown bd;
    bd.num_positive = targets.num_positive;
    std::vector<std::pair<double, Tensor>> terms;
    for (std::size_t l = 0; l < heads.size(); ++l) {
        const auto& tl = targets.levels[l];
        std::size_t valid = 0;
        for (auto v : tl.valid) valid += v;
        if (valid == 0) continue;
        Tensor cls = focal_loss_sum(tape, heads[l].class_logits, tl, cfg.focal);
        const double w_cls = cfg.lambda_cls / static_cast<double>(valid);
        bd.cls += w_cls * cls.item();
        terms.emplace_back(w_cls, cls);
        if (targets.num_positive > 0 && cfg.lambda_reg > 0.0) {
            Tensor reg = giou_loss_sum(tape, heads[l].distances, tl, cfg.beta,
                                       &bd.degenerate_preds);
            const double w_reg = cfg.lambda_reg / static_cast<double>(targets.num_positive);
            bd.reg += w_reg * reg.item();
            terms.emplace_back(w_reg, reg);
        }
    }
    bd.total = weighted_sum(tape, terms);
    return bd;
}

}  // namespace tadml
