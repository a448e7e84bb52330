#include "tadml/mechanics.hpp"

#include <cmath>

namespace tadml {

namespace {

constexpr double kSqrtClamp = 1e-12;

// Fused combine with hand-written backward; inputs are the already projected
// F_a, F_b of shape [T x D] and theta of shape [D].
Tensor combine(Tape* tape, const Tensor& fa, const Tensor& fb,
               const Tensor& theta, bool literal) {
    const std::size_t T = fa.rows(), D = fa.cols();
    Tensor y({T, D});
    const auto& av = fa.values();
    const auto& bv = fb.values();
    const auto& tv = theta.values();
    auto& yv = y.values();
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < D; ++j) {
            const std::size_t i = t * D + j;
            const double a = av[i], b = bv[i], c = std::cos(tv[j]);
            double arg = literal ? a + b + 2.0 * a * b * c
                                 : a * a + b * b + 2.0 * a * b * c;
            if (arg < kSqrtClamp) arg = kSqrtClamp;
            yv[i] = std::sqrt(arg);
        }
    }
    y.check_finite("mechanics_mix");

    if (tape) {
        Tensor ac = fa, bc = fb, tc = theta, yc = y;
        tape->record([ac, bc, tc, yc, T, D, literal]() mutable {
            const auto& gy = yc.grad_view();
            if (gy.empty()) return;
            auto& ga = ac.ensure_grad();
            auto& gb = bc.ensure_grad();
            auto& gt = tc.ensure_grad();
            const auto& av = ac.values();
            const auto& bv = bc.values();
            const auto& tv = tc.values();
            const auto& yv = yc.values();
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t j = 0; j < D; ++j) {
                    const std::size_t i = t * D + j;
                    const double a = av[i], b = bv[i];
                    const double c = std::cos(tv[j]), s = std::sin(tv[j]);
                    const double arg = literal
                        ? a + b + 2.0 * a * b * c
                        : a * a + b * b + 2.0 * a * b * c;
                    if (arg < kSqrtClamp) continue;  // clamped region: zero grad
                    const double inv2y = gy[i] / (2.0 * yv[i]);
                    if (literal) {
                        ga[i] += (1.0 + 2.0 * b * c) * inv2y;
                        gb[i] += (1.0 + 2.0 * a * c) * inv2y;
                    } else {
                        ga[i] += (2.0 * a + 2.0 * b * c) * inv2y;
                        gb[i] += (2.0 * b + 2.0 * a * c) * inv2y;
                    }
                    gt[j] += (-2.0 * a * b * s) * inv2y;
                }
            }
        });
    }
    return y;
}

}  // namespace

Tensor mechanics_mix(Tape* tape, const Tensor& x, const MechanicsParams& params,
                     bool eq1_literal) {
    Tensor fa = fc(tape, x, params.Wa, params.ba);
    Tensor fb = fc(tape, x, params.Wb, params.bb);
    return combine(tape, fa, fb, params.theta, eq1_literal);
}

Tensor mechanics_unit(Tape* tape, const Tensor& x, const MechanicsParams& params,
                      const MechanicsConfig& cfg) {
    Tensor n1 = layer_norm(tape, x, params.norm1_gamma, params.norm1_beta);
    Tensor z = mechanics_mix(tape, n1, params, cfg.eq1_literal);
    if (cfg.residual) z = add(tape, z, x);
    Tensor n2 = layer_norm(tape, z, params.norm2_gamma, params.norm2_beta);
    Tensor h = relu(tape, fc(tape, n2, params.Wc1, params.bc1));
    Tensor out = fc(tape, h, params.Wc2, params.bc2);
    if (cfg.residual) out = add(tape, out, z);
    return out;
}

}  // namespace tadml
