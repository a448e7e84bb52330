#include "tadml/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tadml {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'M', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v & 0xFF),
                            static_cast<unsigned char>((v >> 8) & 0xFF),
                            static_cast<unsigned char>((v >> 16) & 0xFF),
                            static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    if (!is) throw FormatError("features: truncated header");
    return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

std::string stem_of(const std::string& path) {
    const auto slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    const auto dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

FeatureSequence load_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("features: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("features: bad magic in " + path);
    if (read_u32(is) != kVersion)
        throw FormatError("features: unsupported version in " + path);
    const std::uint32_t T = read_u32(is);
    const std::uint32_t D = read_u32(is);
    const std::uint32_t fpf = read_u32(is);
    if (T == 0 || D == 0)
        throw FormatError("features: zero-length dimensions in " + path);

    std::vector<float> payload(static_cast<std::size_t>(T) * D);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!is || is.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
        throw FormatError("features: truncated payload in " + path);

    FeatureSequence seq;
    seq.video_id = stem_of(path);
    seq.frames_per_feature = fpf;
    seq.features = Tensor({T, D});
    auto& vals = seq.features.values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(payload[i]);
    return seq;
}

void save_features(const std::string& path, const FeatureSequence& seq) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("features: cannot write " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(seq.length()));
    write_u32(os, static_cast<std::uint32_t>(seq.dim()));
    write_u32(os, seq.frames_per_feature);
    std::vector<float> payload(seq.features.numel());
    const auto& vals = seq.features.values();
    for (std::size_t i = 0; i < vals.size(); ++i) payload[i] = static_cast<float>(vals[i]);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw FormatError("features: write failed for " + path);
}

FeatureSequence load_features_csv(const std::string& path, std::uint32_t frames_per_feature) {
    std::ifstream is(path);
    if (!is) throw FormatError("features: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError("features: ragged CSV row in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("features: empty CSV " + path);

    FeatureSequence seq;
    seq.video_id = stem_of(path);
    seq.frames_per_feature = frames_per_feature;
    seq.features = Tensor({rows.size(), rows.front().size()});
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t j = 0; j < rows[t].size(); ++j)
            seq.features.at(t, j) = rows[t][j];
    return seq;
}

CropResult crop_or_pad(const FeatureSequence& x,
                       const std::vector<GroundTruthInstance>& gts,
                       std::size_t L, CropMode mode, Rng& rng) {
    if (L < 1) throw ConfigError("crop_or_pad: target length must be >= 1");
    const std::size_t T = x.length(), D = x.dim();
    CropResult out;
    out.seq.video_id = x.video_id;
    out.seq.frames_per_feature = x.frames_per_feature;

    if (T > L) {
        const std::size_t max_off = T - L;
        const std::size_t off = (mode == CropMode::Train)
            ? static_cast<std::size_t>(rng.uniform_int(max_off + 1))
            : max_off / 2;
        out.offset = static_cast<long>(off);
        out.valid_len = L;
        out.seq.features = Tensor({L, D});
        const auto& src = x.features.values();
        std::copy(src.begin() + static_cast<long>(off * D),
                  src.begin() + static_cast<long>((off + L) * D),
                  out.seq.features.values().begin());
        for (const auto& gt : gts) {
            const double s = gt.segment.start - static_cast<double>(off);
            const double e = gt.segment.end - static_cast<double>(off);
            const double cs = std::max(0.0, s);
            const double ce = std::min(static_cast<double>(L), e);
            if (ce > cs) out.gts.push_back({{cs, ce}, gt.class_id});
        }
    } else {
        out.offset = 0;
        out.valid_len = T;
        out.seq.features = Tensor({L, D});
        const auto& src = x.features.values();
        std::copy(src.begin(), src.end(), out.seq.features.values().begin());
        out.gts = gts;
    }
    return out;
}

void SynthConfig::validate() const {
    if (num_videos < 1 || T < 1 || D < 1 || num_classes < 1)
        throw ConfigError("SynthConfig: counts must be >= 1");
    if (min_action_len < 1 || max_action_len < min_action_len)
        throw ConfigError("SynthConfig: invalid action length range");
    if (actions_max < actions_min)
        throw ConfigError("SynthConfig: invalid actions-per-video range");
    if (noise_level < 0.0)
        throw ConfigError("SynthConfig: noise level must be non-negative");
}

std::vector<SynthVideo> synth_dataset(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    // fixed per-class signature vectors
    std::vector<std::vector<double>> signatures(cfg.num_classes,
                                                std::vector<double>(cfg.D));
    for (auto& sig : signatures)
        for (auto& v : sig) v = rng.normal();

    std::vector<SynthVideo> out;
    out.reserve(cfg.num_videos);
    for (std::size_t v = 0; v < cfg.num_videos; ++v) {
        SynthVideo video;
        video.features.video_id = "synth_" + std::to_string(v);
        video.features.frames_per_feature = 1;
        video.features.features = Tensor({cfg.T, cfg.D});
        auto& vals = video.features.features.values();
        for (auto& x : vals) x = cfg.noise_level * rng.normal();

        const std::size_t want = cfg.actions_min +
            (cfg.actions_max > cfg.actions_min
                 ? rng.uniform_int(cfg.actions_max - cfg.actions_min + 1)
                 : 0);
        std::vector<GroundTruthInstance> placed;
        for (std::size_t a = 0; a < want; ++a) {
            bool ok = false;
            for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
                const std::size_t len = cfg.min_action_len +
                    rng.uniform_int(cfg.max_action_len - cfg.min_action_len + 1);
                if (len >= cfg.T) continue;
                const std::size_t start = rng.uniform_int(cfg.T - len);
                const double s = static_cast<double>(start);
                const double e = static_cast<double>(start + len);
                bool overlap = false;
                for (const auto& p : placed)
                    if (s < p.segment.end && p.segment.start < e) { overlap = true; break; }
                if (overlap) continue;
                const int cls = static_cast<int>(rng.uniform_int(cfg.num_classes));
                placed.push_back({{s, e}, cls});
                for (std::size_t t = start; t < start + len; ++t)
                    for (std::size_t j = 0; j < cfg.D; ++j)
                        vals[t * cfg.D + j] += signatures[cls][j];
                ok = true;
            }
            if (!ok)
                throw ConfigError("synth_dataset: cannot place non-overlapping action "
                                  "instances; loosen the config");
        }
        std::sort(placed.begin(), placed.end(),
                  [](const GroundTruthInstance& a, const GroundTruthInstance& b) {
                      return a.segment.start < b.segment.start;
                  });
        video.gts = std::move(placed);
        out.push_back(std::move(video));
    }
    return out;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("manifest: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest: parse error in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw FormatError("manifest: expected a JSON list");
    std::vector<ManifestEntry> out;
    for (auto& e : j)
        out.push_back({e.at("video_id").get<std::string>(),
                       e.at("feature_path").get<std::string>()});
    return out;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
        j.push_back({{"video_id", e.video_id}, {"feature_path", e.feature_path}});
    std::ofstream os(path);
    if (!os) throw FormatError("manifest: cannot write " + path);
    os << j.dump(2) << "\n";
}

}  // namespace tadml
