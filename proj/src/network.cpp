#include "tadml/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tadml {

void ModelConfig::validate() const {
    if (num_levels < 1) throw ConfigError("ModelConfig: num_levels must be >= 1");
    if (neck_stages < 1 || neck_stages > num_levels + 1)
        throw ConfigError("ModelConfig: neck_stages must be in [1, num_levels+1]");
    if (num_classes < 1) throw ConfigError("ModelConfig: num_classes must be >= 1");
    if (input_dim < 1 || width < 1)
        throw ConfigError("ModelConfig: input_dim and width must be >= 1");
}

Tensor& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
    if (by_name_.count(name))
        throw ConfigError("ParamStore: duplicate parameter name " + name);
    order_.push_back(name);
    auto [it, ok] = by_name_.emplace(name, Tensor(std::move(shape), true));
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
        throw ConfigError("ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
        throw ConfigError("ParamStore: unknown parameter " + name);
    return it->second;
}

std::size_t ParamStore::total_scalars() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += by_name_.at(name).numel();
    return n;
}

void ParamStore::zero_grads() {
    for (const auto& name : order_) by_name_.at(name).zero_grad();
}

void ParamStore::quantize_f32() {
    for (const auto& name : order_)
        for (double& v : by_name_.at(name).values())
            v = static_cast<double>(static_cast<float>(v));
}

std::vector<std::size_t> pyramid_lengths(std::size_t input_len, std::size_t num_levels) {
    std::vector<std::size_t> lens;
    std::size_t t = input_len;
    for (std::size_t l = 0; l < num_levels; ++l) {
        t = (t + 1) / 2;
        lens.push_back(t);
    }
    return lens;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

void init_fc(Tensor& W, Tensor& b, Rng& rng) {
    const double fan_in = static_cast<double>(W.rows());
    const double fan_out = static_cast<double>(W.cols());
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : W.values()) v = rng.uniform(-bound, bound);
    for (double& v : b.values()) v = 0.0;
}

void register_unit(ParamStore& ps, const std::string& prefix, std::size_t D, Rng& rng) {
    const std::size_t H = 2 * D;
    init_fc(ps.add(prefix + ".Wa", {D, D}), ps.add(prefix + ".ba", {D}), rng);
    init_fc(ps.add(prefix + ".Wb", {D, D}), ps.add(prefix + ".bb", {D}), rng);
    Tensor& theta = ps.add(prefix + ".theta", {D});
    for (double& v : theta.values()) v = kPi / 2.0;
    for (const char* ln : {".ln1", ".ln2"}) {
        Tensor& g = ps.add(prefix + ln + ".gamma", {D});
        for (double& v : g.values()) v = 1.0;
        ps.add(prefix + ln + ".beta", {D});
    }
    init_fc(ps.add(prefix + ".Wc1", {D, H}), ps.add(prefix + ".bc1", {H}), rng);
    init_fc(ps.add(prefix + ".Wc2", {H, D}), ps.add(prefix + ".bc2", {D}), rng);
}

void register_branch(ParamStore& ps, const std::string& prefix, std::size_t C,
                     std::size_t out_dim, Rng& rng) {
    init_fc(ps.add(prefix + ".fc1.W", {C, C}), ps.add(prefix + ".fc1.b", {C}), rng);
    for (const char* ln : {".ln1", ".ln2"}) {
        Tensor& g = ps.add(prefix + ln + ".gamma", {C});
        for (double& v : g.values()) v = 1.0;
        ps.add(prefix + ln + ".beta", {C});
    }
    init_fc(ps.add(prefix + ".fc2.W", {C, C}), ps.add(prefix + ".fc2.b", {C}), rng);
    init_fc(ps.add(prefix + ".fc3.W", {C, out_dim}), ps.add(prefix + ".fc3.b", {out_dim}), rng);
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    init_fc(params_.add("proj.W", {cfg_.input_dim, cfg_.width}),
            params_.add("proj.b", {cfg_.width}), rng);
    Tensor& pg = params_.add("proj.ln.gamma", {cfg_.width});
    for (double& v : pg.values()) v = 1.0;
    params_.add("proj.ln.beta", {cfg_.width});

    for (std::size_t l = 1; l <= cfg_.num_levels; ++l)
        register_unit(params_, "msm." + std::to_string(l), cfg_.width, rng);

    // head parameters are shared across pyramid levels
    register_branch(params_, "head.cls", cfg_.width, cfg_.num_classes, rng);
    register_branch(params_, "head.reg", cfg_.width, 2, rng);
}

MechanicsParams Model::unit_params(const std::string& prefix) const {
    MechanicsParams p;
    p.Wa = params_.get(prefix + ".Wa");
    p.ba = params_.get(prefix + ".ba");
    p.Wb = params_.get(prefix + ".Wb");
    p.bb = params_.get(prefix + ".bb");
    p.theta = params_.get(prefix + ".theta");
    p.norm1_gamma = params_.get(prefix + ".ln1.gamma");
    p.norm1_beta = params_.get(prefix + ".ln1.beta");
    p.norm2_gamma = params_.get(prefix + ".ln2.gamma");
    p.norm2_beta = params_.get(prefix + ".ln2.beta");
    p.Wc1 = params_.get(prefix + ".Wc1");
    p.bc1 = params_.get(prefix + ".bc1");
    p.Wc2 = params_.get(prefix + ".Wc2");
    p.bc2 = params_.get(prefix + ".bc2");
    return p;
}

Tensor Model::project(Tape* tape, const Tensor& x) const {
    if (x.ndim() != 2 || x.cols() != cfg_.input_dim) {
        std::ostringstream os;
        os << "project: expected feature dim " << cfg_.input_dim << ", got "
           << (x.ndim() == 2 ? x.cols() : 0);
        throw DimensionError(os.str());
    }
    Tensor y = fc(tape, x, params_.get("proj.W"), params_.get("proj.b"));
    return layer_norm(tape, y, params_.get("proj.ln.gamma"), params_.get("proj.ln.beta"));
}

std::vector<PyramidLevel> Model::msm_forward(Tape* tape, const Tensor& projected) const {
    if (projected.rows() < cfg_.min_input_len()) {
        std::ostringstream os;
        os << "msm_forward: input length " << projected.rows()
           << " is shorter than the minimum " << cfg_.min_input_len()
           << " required by " << cfg_.num_levels << " downsampling levels";
        throw ConfigError(os.str());
    }
    MechanicsConfig mc{cfg_.residual, cfg_.eq1_literal};
    std::vector<PyramidLevel> levels;
    Tensor cur = projected;
    for (std::size_t l = 1; l <= cfg_.num_levels; ++l) {
        Tensor pooled = avgpool2(tape, cur);
        Tensor feat = mechanics_unit(tape, pooled, unit_params("msm." + std::to_string(l)), mc);
        levels.push_back({feat, 1 << static_cast<int>(l), static_cast<int>(l)});
        cur = feat;
    }
    return levels;
}

std::vector<PyramidLevel> Model::tfpn_fuse(Tape* tape, std::vector<PyramidLevel> levels,
                                           Tensor* full_res) const {
    const std::size_t L = levels.size();
    const std::size_t steps = cfg_.neck_stages - 1;
    for (std::size_t s = 0; s < steps; ++s) {
        if (s + 1 < L) {
            // coarse level L-1-s fused into the next finer level
            const std::size_t from = L - 1 - s, to = L - 2 - s;
            Tensor up = linear_upsample2(tape, levels[from].features,
                                         levels[to].features.rows());
            levels[to].features = add(tape, levels[to].features, up);
        } else if (s + 1 == L && full_res) {
            // extra stage: fuse the finest level into the projected features
            Tensor up = linear_upsample2(tape, levels[0].features, full_res->rows());
            *full_res = add(tape, *full_res, up);
        }
    }
    return levels;
}

Tensor Model::head_branch(Tape* tape, const Tensor& x, const std::string& prefix,
                          bool relu_output) const {
    Tensor h = fc(tape, x, params_.get(prefix + ".fc1.W"), params_.get(prefix + ".fc1.b"));
    h = layer_norm(tape, h, params_.get(prefix + ".ln1.gamma"), params_.get(prefix + ".ln1.beta"));
    h = relu(tape, h);
    h = fc(tape, h, params_.get(prefix + ".fc2.W"), params_.get(prefix + ".fc2.b"));
    h = layer_norm(tape, h, params_.get(prefix + ".ln2.gamma"), params_.get(prefix + ".ln2.beta"));
    h = relu(tape, h);
    h = fc(tape, h, params_.get(prefix + ".fc3.W"), params_.get(prefix + ".fc3.b"));
    if (relu_output) h = relu(tape, h);
    return h;
}

std::vector<HeadOutput> Model::heads_forward(Tape* tape,
                                             const std::vector<PyramidLevel>& levels) const {
    std::vector<HeadOutput> outs;
    outs.reserve(levels.size());
    for (const auto& lvl : levels) {
        HeadOutput out;
        out.class_logits = head_branch(tape, lvl.features, "head.cls", false);
        out.distances = head_branch(tape, lvl.features, "head.reg", true);
        out.stride = lvl.stride;
        outs.push_back(std::move(out));
    }
    return outs;
}

ForwardResult Model::forward(Tape* tape, const Tensor& x, std::size_t valid_frames) const {
    ForwardResult r;
    r.projected = project(tape, x);
    auto levels = msm_forward(tape, r.projected);
    r.levels = tfpn_fuse(tape, std::move(levels), &r.projected);
    r.heads = heads_forward(tape, r.levels);
    for (const auto& lvl : r.levels) {
        const double s = static_cast<double>(lvl.stride);
        std::size_t count = 0;
        for (std::size_t i = 0; i < lvl.features.rows(); ++i) {
            if ((static_cast<double>(i) + 0.5) * s < static_cast<double>(valid_frames))
                ++count;
        }
        r.valid_len.push_back(count);
    }
    return r;
}

// ---- checkpoint I/O ----

namespace {

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
    if (!is) throw FormatError("checkpoint: truncated header");
    return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    std::uint32_t bits = read_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

constexpr char kCkptMagic[4] = {'T', 'D', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("checkpoint: cannot open " + path + " for writing");
    os.write(kCkptMagic, 4);
    write_u32(os, kCkptVersion);
    const auto& cfg = model.config();
    write_u32(os, static_cast<std::uint32_t>(cfg.input_dim));
    write_u32(os, static_cast<std::uint32_t>(cfg.width));
    write_u32(os, static_cast<std::uint32_t>(cfg.num_levels));
    write_u32(os, static_cast<std::uint32_t>(cfg.neck_stages));
    write_u32(os, static_cast<std::uint32_t>(cfg.num_classes));
    write_u32(os, cfg.residual ? 1 : 0);
    write_u32(os, cfg.eq1_literal ? 1 : 0);

    const auto& ps = model.params();
    write_u32(os, static_cast<std::uint32_t>(ps.order().size()));
    for (const auto& name : ps.order()) {
        const Tensor& t = ps.get(name);
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(t.ndim()));
        for (auto d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
        for (double v : t.values()) write_f32(os, static_cast<float>(v));
    }
    if (!os) throw FormatError("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic");
    if (read_u32(is) != kCkptVersion)
        throw FormatError("checkpoint: unsupported version");

    ModelConfig cfg;
    cfg.input_dim = read_u32(is);
    cfg.width = read_u32(is);
    cfg.num_levels = read_u32(is);
    cfg.neck_stages = read_u32(is);
    cfg.num_classes = read_u32(is);
    cfg.residual = read_u32(is) != 0;
    cfg.eq1_literal = read_u32(is) != 0;

    Model model(cfg, 0);
    const std::uint32_t count = read_u32(is);
    if (count != model.params().order().size())
        throw FormatError("checkpoint: parameter count mismatch");
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw FormatError("checkpoint: truncated name");
        if (!model.params().contains(name))
            throw FormatError("checkpoint: unknown parameter " + name);
        Tensor& t = model.params().get(name);
        const std::uint32_t ndim = read_u32(is);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = read_u32(is);
        if (shape != t.shape())
            throw FormatError("checkpoint: shape mismatch for " + name);
        for (double& v : t.values()) v = static_cast<double>(read_f32(is));
    }
    return model;
}

}  // namespace tadml
