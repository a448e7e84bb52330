#pragma once

#include <string>
#include <vector>

#include "tadml/common.hpp"
#include "tadml/tensor.hpp"

namespace tadml {

struct FeatureSequence {
    std::string video_id;
    Tensor features;  // [T x D]
    std::uint32_t frames_per_feature = 1;

    std::size_t length() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
};

// Binary feature format: magic "TDML", u32 version, u32 T, u32 D,
// u32 frames_per_feature, then T*D little-endian f32, row-major.
FeatureSequence load_features(const std::string& path);
void save_features(const std::string& path, const FeatureSequence& seq);

// One row of D comma-separated values per line; '#' lines are comments.
FeatureSequence load_features_csv(const std::string& path,
                                  std::uint32_t frames_per_feature = 1);

enum class CropMode { Train, Eval };

struct CropResult {
    FeatureSequence seq;            // length exactly L
    long offset = 0;                // crop start in input frames (0 when padded)
    std::size_t valid_len = 0;      // un-padded frame count (== L when cropped)
    std::vector<GroundTruthInstance> gts;  // shifted/clipped to the window
};

// T > L: random crop during training, center crop during eval; GT segments
// are shifted by the crop offset, clipped to the window and dropped when
// fully outside. T < L: zero-pad at the end; padded frames are reported via
// valid_len so the loss and decoder can mask them.
CropResult crop_or_pad(const FeatureSequence& x,
                       const std::vector<GroundTruthInstance>& gts,
                       std::size_t L, CropMode mode, Rng& rng);

struct SynthConfig {
    std::size_t num_videos = 8;
    std::size_t T = 128;
    std::size_t D = 32;
    std::size_t num_classes = 3;
    std::size_t actions_min = 1, actions_max = 3;  // per video
    std::size_t min_action_len = 8, max_action_len = 32;
    double noise_level = 1.0;  // background N(0,1) scale; 0 => separable
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthVideo {
    FeatureSequence features;
    std::vector<GroundTruthInstance> gts;
};

// Background ~ noise_level * N(0,1); each action adds a fixed class signature
// over its extent. Instances never overlap. Pure function of cfg.seed.
std::vector<SynthVideo> synth_dataset(const SynthConfig& cfg);

// Dataset manifest: JSON list of {video_id, feature_path}.
struct ManifestEntry {
    std::string video_id;
    std::string feature_path;
};
std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace tadml
