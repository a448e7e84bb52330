#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tadml/mechanics.hpp"
#include "tadml/tensor.hpp"

namespace tadml {

struct ModelConfig {
    std::size_t input_dim = 1024;
    std::size_t width = 512;         // channel count C at every level
    std::size_t num_levels = 6;
    std::size_t neck_stages = 6;     // 1..num_levels+1
    std::size_t num_classes = 20;
    bool residual = false;
    bool eq1_literal = false;

    std::size_t min_input_len() const { return std::size_t{1} << num_levels; }
    void validate() const;
};

struct PyramidLevel {
    Tensor features;      // [T_l x C]
    int stride = 0;       // 2^level_index
    int level_index = 0;  // 1-based
};

struct HeadOutput {
    Tensor class_logits;  // [T_l x K]
    Tensor distances;     // [T_l x 2], >= 0, in units of the level's stride
    int stride = 0;
};

// Learnable arrays addressable by stable names, in registration order.
class ParamStore {
public:
    Tensor& add(const std::string& name, std::vector<std::size_t> shape);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }

    const std::vector<std::string>& order() const { return order_; }
    std::size_t total_scalars() const;

    void zero_grads();
    // Rounds every value through IEEE f32; the checkpoint format stores f32,
    // so this makes the in-memory model byte-equivalent to its checkpoint.
    void quantize_f32();

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> by_name_;
};

struct ForwardResult {
    Tensor projected;                  // [T x C], stride 1
    std::vector<PyramidLevel> levels;  // post-neck pyramid, levels 1..L
    std::vector<HeadOutput> heads;
    // number of locations per level whose center lies within the unpadded input
    std::vector<std::size_t> valid_len;
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Tensor project(Tape* tape, const Tensor& x) const;
    std::vector<PyramidLevel> msm_forward(Tape* tape, const Tensor& projected) const;
    std::vector<PyramidLevel> tfpn_fuse(Tape* tape, std::vector<PyramidLevel> levels,
                                        Tensor* full_res = nullptr) const;
    std::vector<HeadOutput> heads_forward(Tape* tape,
                                          const std::vector<PyramidLevel>& levels) const;

    // valid_frames <= x.rows(); locations centered past it are masked out of
    // loss and decode. Pass x.rows() when the input carries no padding.
    ForwardResult forward(Tape* tape, const Tensor& x, std::size_t valid_frames) const;

private:
    MechanicsParams unit_params(const std::string& prefix) const;
    Tensor head_branch(Tape* tape, const Tensor& x, const std::string& prefix,
                       bool relu_output) const;

    ModelConfig cfg_;
    ParamStore params_;
};

// Pyramid level lengths for an input of length T: ceil-halving per level.
std::vector<std::size_t> pyramid_lengths(std::size_t input_len, std::size_t num_levels);

// ---- checkpoint container ----
// Layout: magic "TDCK", u32 version, u32 config[7], u32 entry count, then per
// entry: u32 name length, name bytes, u32 ndim, u32 dims[], f32 data[].
// All integers and floats little-endian.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace tadml
