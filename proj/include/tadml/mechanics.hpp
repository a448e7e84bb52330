#pragma once

#include "tadml/tensor.hpp"

namespace tadml {

// Parameters of one mechanics unit: two token projections W_a/W_b with a
// learnable per-channel angle theta, two layernorms and a channel MLP
// (D -> 2D -> D with relu).
struct MechanicsParams {
    Tensor Wa, ba;
    Tensor Wb, bb;
    Tensor theta;          // [D], radians; only cos/sin enter the forward pass
    Tensor norm1_gamma, norm1_beta;
    Tensor norm2_gamma, norm2_beta;
    Tensor Wc1, bc1;       // D -> D_hidden
    Tensor Wc2, bc2;       // D_hidden -> D

    std::size_t dim() const { return theta.numel(); }
};

struct MechanicsConfig {
    bool residual = false;     // Eq-2-literal composition by default
    bool eq1_literal = false;  // printed (square-free) resultant formula
};

// Resultant-force combination of the two projections:
//   y = sqrt(clamp(F_a^2 + F_b^2 + 2 F_a F_b cos(theta), 1e-12))
// With eq1_literal the argument is F_a + F_b + 2 F_a F_b cos(theta) instead.
Tensor mechanics_mix(Tape* tape, const Tensor& x, const MechanicsParams& params,
                     bool eq1_literal = false);

// norm -> mix -> norm -> channel MLP; optional residual around both halves.
Tensor mechanics_unit(Tape* tape, const Tensor& x, const MechanicsParams& params,
                      const MechanicsConfig& cfg = {});

}  // namespace tadml
