#pragma once

// The four networks of the pipeline: feature extractor D, generator G,
// critic F and detector H.
//
// Every network keeps its parameters in a name-ordered map, so a network is
// an ordinary value: copying it deep-copies the weights and iteration order
// is stable across runs (checkpoints and gradient checks rely on that).

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ifom/autograd.hpp"
#include "ifom/image.hpp"

namespace ifom {

using ParamMap = std::map<std::string, Parameter>;

enum class ArchId { tiny, paper_fingerprint, paper_face };
enum class Pooling { global_average, flatten };

inline std::string_view to_string(ArchId a) {
    switch (a) {
        case ArchId::tiny: return "tiny";
        case ArchId::paper_fingerprint: return "paper_fingerprint";
        case ArchId::paper_face: return "paper_face";
    }
    return "tiny";
}

inline ArchId parse_arch(std::string_view s) {
    if (s == "tiny") return ArchId::tiny;
    if (s == "paper_fingerprint") return ArchId::paper_fingerprint;
    if (s == "paper_face") return ArchId::paper_face;
    throw InvalidInput("unknown arch_id '" + std::string(s) + "'");
}

inline std::string_view to_string(Pooling p) { return p == Pooling::flatten ? "flatten" : "global_average"; }

inline Pooling parse_pooling(std::string_view s) {
    if (s == "global_average") return Pooling::global_average;
    if (s == "flatten") return Pooling::flatten;
    throw InvalidInput("unknown pooling '" + std::string(s) + "'");
}

struct BackboneConfig {
    ArchId arch_id = ArchId::tiny;
    std::array<std::size_t, 3> input_shape{1, 32, 32};  // (C, H, W)
    std::size_t embedding_dim = 32;
    double width_multiplier = 1.0;
    // How the last feature map becomes the embedding.
    Pooling pooling = Pooling::flatten;
    // U-Net style skip inputs for the generator. Off for tiny by default.
    bool generator_skips = false;

    void validate() const {
        if (embedding_dim < 8) throw InvalidInput("embedding_dim must be >= 8");
        if (!(width_multiplier > 0)) throw InvalidInput("width_multiplier must be positive");
        if (input_shape[0] == 0 || input_shape[1] < 8 || input_shape[2] < 8)
            throw InvalidInput("input_shape must be (C>=1, H>=8, W>=8)");
    }

    Shape image_shape() const { return {input_shape[0], input_shape[1], input_shape[2]}; }

    bool operator==(const BackboneConfig&) const = default;

    static BackboneConfig tiny(std::size_t channels = 1, std::size_t size = 32) {
        BackboneConfig c;
        c.input_shape = {channels, size, size};
        return c;
    }

    static BackboneConfig paper_fingerprint(double width = 1.0) {
        BackboneConfig c;
        c.arch_id = ArchId::paper_fingerprint;
        c.input_shape = {1, 224, 224};
        c.embedding_dim = 1280;
        c.width_multiplier = width;
        c.pooling = Pooling::global_average;
        c.generator_skips = true;
        return c;
    }

    static BackboneConfig paper_face(double width = 1.0) {
        BackboneConfig c;
        c.arch_id = ArchId::paper_face;
        c.input_shape = {3, 256, 256};
        c.embedding_dim = 512;
        c.width_multiplier = width;
        c.pooling = Pooling::global_average;
        c.generator_skips = true;
        return c;
    }
};

struct EmbeddingVector {
    std::vector<double> values;
    bool operator==(const EmbeddingVector&) const = default;
};

namespace nn {

inline void add_conv(ParamMap& pm, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                     std::size_t groups, std::mt19937_64& rng) {
    const std::size_t fan_in = (in / groups) * k * k;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor w({out, in / groups, k, k});
    for (double& v : w.vec()) v = dist(rng);
    pm.emplace(name + ".weight", Parameter(std::move(w)));
    pm.emplace(name + ".bias", Parameter(Tensor({out})));
}

inline void add_linear(ParamMap& pm, const std::string& name, std::size_t in, std::size_t out, double stddev,
                       std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor w({out, in});
    for (double& v : w.vec()) v = dist(rng);
    pm.emplace(name + ".weight", Parameter(std::move(w)));
    pm.emplace(name + ".bias", Parameter(Tensor({out})));
}

inline Parameter& get(ParamMap& pm, const std::string& key) {
    auto it = pm.find(key);
    if (it == pm.end()) throw InvalidInput("missing parameter '" + key + "'");
    return it->second;
}

inline Var linear(Tape& t, ParamMap& pm, const std::string& name, Var x) {
    return ag::linear(x, t.param(get(pm, name + ".weight")), t.param(get(pm, name + ".bias")));
}

inline std::size_t scaled(std::size_t base, double mult) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(base) * mult)));
}

inline Var act(Var x) { return ag::leaky_relu(x, 0.2); }

inline std::size_t count(const ParamMap& pm) {
    std::size_t n = 0;
    for (const auto& [_, p] : pm) n += p.value.numel();
    return n;
}

}  // namespace nn

struct ConvLayer {
    std::string name;
    std::size_t in = 0, out = 0, k = 3, stride = 1, pad = 1, groups = 1;

    Var apply(Tape& t, ParamMap& pm, Var x) const {
        return ag::conv2d(x, t.param(nn::get(pm, name + ".weight")), t.param(nn::get(pm, name + ".bias")), stride, pad,
                          groups);
    }
};

/// One trunk stage. `plain` is conv + activation; `basic` is a two-conv
/// residual block; `inverted` is expand / depthwise / project.
struct Block {
    enum class Kind { plain, basic, inverted };
    Kind kind = Kind::plain;
    std::vector<ConvLayer> convs;
    std::optional<ConvLayer> shortcut;
    bool residual = false;

    Var apply(Tape& t, ParamMap& pm, Var x) const {
        switch (kind) {
            case Kind::plain: return nn::act(convs[0].apply(t, pm, x));
            case Kind::basic: {
                Var h = nn::act(convs[0].apply(t, pm, x));
                h = convs[1].apply(t, pm, h);
                Var s = shortcut ? shortcut->apply(t, pm, x) : x;
                return nn::act(ag::add(h, s));
            }
            case Kind::inverted: {
                Var h = x;
                for (std::size_t i = 0; i + 1 < convs.size(); ++i) h = nn::act(convs[i].apply(t, pm, h));
                h = convs.back().apply(t, pm, h);
                return residual ? ag::add(h, x) : h;
            }
        }
        return x;
    }
};

/// Resolution level of the trunk: spatial size and channel count of the
/// last feature map at that size.
struct Level {
    std::size_t h, w, channels;
};

struct ExtractorOutput {
    Var z;
    std::vector<Var> skips;  // one per Level, finest first
};

/// Feature extractor D: image (N, C, H, W) -> embedding (N, embedding_dim).
class Extractor {
public:
    Extractor() = default;

    Extractor(const BackboneConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        cfg_.validate();
        build_blocks();
        for (const Block& b : blocks_) {
            for (const ConvLayer& c : b.convs) nn::add_conv(params_, c.name, c.in, c.out, c.k, c.groups, rng);
            if (b.shortcut) nn::add_conv(params_, b.shortcut->name, b.shortcut->in, b.shortcut->out, 1, 1, rng);
        }
        const Level& last = levels_.back();
        const std::size_t pooled = cfg_.pooling == Pooling::flatten ? last.channels * last.h * last.w : last.channels;
        nn::add_linear(params_, "proj", pooled, cfg_.embedding_dim, std::sqrt(1.0 / static_cast<double>(pooled)), rng);
    }

    const BackboneConfig& config() const { return cfg_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    const std::vector<Level>& levels() const { return levels_; }
    std::size_t parameter_count() const { return nn::count(params_); }

    ExtractorOutput forward(Tape& t, Var x) {
        check_input(x.value());
        std::vector<Var> skips(levels_.size(), x);
        std::size_t level = 0;
        Var h = x;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            h = blocks_[i].apply(t, params_, h);
            level = level_of_block_[i];
            skips[level] = h;
        }
        Var pooled = cfg_.pooling == Pooling::flatten ? ag::flatten(h) : ag::global_avg_pool(h);
        return {nn::linear(t, params_, "proj", pooled), std::move(skips)};
    }

    void check_input(const Tensor& x) const {
        if (x.rank() != 4 || x.dim(1) != cfg_.input_shape[0] || x.dim(2) != cfg_.input_shape[1] ||
            x.dim(3) != cfg_.input_shape[2])
            throw InvalidInput("extractor expects (N, " + std::to_string(cfg_.input_shape[0]) + ", " +
                               std::to_string(cfg_.input_shape[1]) + ", " + std::to_string(cfg_.input_shape[2]) +
                               "), got " + shape_str(x.shape()));
    }

private:
    void push(Block b, std::size_t stride, std::size_t out_channels) {
        std::size_t h = levels_.empty() ? cfg_.input_shape[1] : levels_.back().h;
        std::size_t w = levels_.empty() ? cfg_.input_shape[2] : levels_.back().w;
        if (stride == 2 || levels_.empty()) {
            if (stride == 2) {
                if (h % 2 || w % 2)
                    throw InvalidInput("input " + std::to_string(cfg_.input_shape[1]) + "x" +
                                       std::to_string(cfg_.input_shape[2]) + " is not divisible by the trunk stride");
                h /= 2;
                w /= 2;
            }
            levels_.push_back({h, w, out_channels});
        } else {
            levels_.back().channels = out_channels;
        }
        blocks_.push_back(std::move(b));
        level_of_block_.push_back(levels_.size() - 1);
    }

    void build_blocks() {
        const double m = cfg_.width_multiplier;
        std::size_t in = cfg_.input_shape[0];
        auto plain = [&](const std::string& name, std::size_t out, std::size_t stride) {
            Block b;
            b.convs.push_back({name, in, out, 3, stride, 1, 1});
            push(std::move(b), stride, out);
            in = out;
        };
        switch (cfg_.arch_id) {
            case ArchId::tiny: {
                const std::array<std::size_t, 3> widths{8, 16, 32};
                for (std::size_t i = 0; i < widths.size(); ++i)
                    plain("conv" + std::to_string(i), nn::scaled(widths[i], m), 2);
                break;
            }
            case ArchId::paper_face: {
                // ResNet18 layout: stem, four stages of two basic blocks.
                plain("stem", nn::scaled(64, m), 2);
                const std::array<std::size_t, 4> widths{64, 128, 256, 512};
                for (std::size_t s = 0; s < widths.size(); ++s) {
                    for (std::size_t r = 0; r < 2; ++r) {
                        const std::size_t out = nn::scaled(widths[s], m);
                        const std::size_t stride = (s > 0 && r == 0) ? 2 : 1;
                        const std::string base = "layer" + std::to_string(s + 1) + "." + std::to_string(r);
                        Block b;
                        b.kind = Block::Kind::basic;
                        b.convs.push_back({base + ".conv1", in, out, 3, stride, 1, 1});
                        b.convs.push_back({base + ".conv2", out, out, 3, 1, 1, 1});
                        if (stride != 1 || in != out) b.shortcut = ConvLayer{base + ".down", in, out, 1, stride, 0, 1};
                        push(std::move(b), stride, out);
                        in = out;
                    }
                }
                break;
            }
            case ArchId::paper_fingerprint: {
                // MobileNetV2 layout: (expansion, channels, repeats, stride).
                plain("stem", nn::scaled(32, m), 2);
                const std::array<std::array<std::size_t, 4>, 7> settings{{
                    {1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                    {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1},
                }};
                std::size_t idx = 0;
                for (const auto& [t, c, n, s] : settings) {
                    for (std::size_t r = 0; r < n; ++r, ++idx) {
                        const std::size_t out = nn::scaled(c, m);
                        const std::size_t stride = r == 0 ? s : 1;
                        const std::size_t hidden = in * t;
                        const std::string base = "block" + std::to_string(idx);
                        Block b;
                        b.kind = Block::Kind::inverted;
                        if (t != 1) b.convs.push_back({base + ".expand", in, hidden, 1, 1, 0, 1});
                        b.convs.push_back({base + ".dw", hidden, hidden, 3, stride, 1, hidden});
                        b.convs.push_back({base + ".project", hidden, out, 1, 1, 0, 1});
                        b.residual = stride == 1 && in == out;
                        push(std::move(b), stride, out);
                        in = out;
                    }
                }
                Block head;
                head.convs.push_back({"head", in, nn::scaled(1280, m), 1, 1, 0, 1});
                push(std::move(head), 1, nn::scaled(1280, m));
                break;
            }
        }
    }

    BackboneConfig cfg_;
    ParamMap params_;
    std::vector<Block> blocks_;
    std::vector<std::size_t> level_of_block_;
    std::vector<Level> levels_;
};

/// Generator G: embedding (plus optional extractor skips) -> image in [0, 1].
class Generator {
public:
    Generator() = default;

    Generator(const Extractor& d, std::mt19937_64& rng) : cfg_(d.config()), levels_(d.levels()) {
        const Level& coarse = levels_.back();
        nn::add_linear(params_, "fc", cfg_.embedding_dim, coarse.channels * coarse.h * coarse.w,
                       std::sqrt(2.0 / static_cast<double>(cfg_.embedding_dim)), rng);
        for (std::size_t l = levels_.size(); l-- > 0;) {
            std::size_t in = levels_[l].channels * (cfg_.generator_skips ? 2 : 1);
            std::size_t out = l == 0 ? cfg_.input_shape[0] : levels_[l - 1].channels;
            nn::add_conv(params_, "up" + std::to_string(l), in, out, 3, 1, rng);
        }
    }

    const BackboneConfig& config() const { return cfg_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    std::size_t parameter_count() const { return nn::count(params_); }

    /// z (N, embedding_dim) -> (N, C, H, W). `skips` must hold one map per
    /// extractor level when generator_skips is enabled.
    Var forward(Tape& t, Var z, std::span<const Var> skips = {}) {
        const Tensor& zv = z.value();
        if (zv.rank() != 2 || zv.dim(1) != cfg_.embedding_dim)
            throw InvalidInput("generator expects (N, " + std::to_string(cfg_.embedding_dim) + "), got " +
                               shape_str(zv.shape()));
        if (cfg_.generator_skips && skips.size() != levels_.size())
            throw InvalidInput("generator needs " + std::to_string(levels_.size()) + " skip maps");
        const std::size_t n = zv.dim(0);
        const Level& coarse = levels_.back();
        Var h = nn::act(ag::reshape(nn::linear(t, params_, "fc", z), {n, coarse.channels, coarse.h, coarse.w}));
        for (std::size_t l = levels_.size(); l-- > 0;) {
            if (cfg_.generator_skips) h = ag::concat_channels(h, skips[l]);
            h = ag::upsample2x(h);
            ConvLayer conv{"up" + std::to_string(l), 0, 0, 3, 1, 1, 1};
            h = conv.apply(t, params_, h);
            h = l == 0 ? ag::sigmoid(h) : nn::act(h);
        }
        return h;
    }

private:
    BackboneConfig cfg_;
    std::vector<Level> levels_;
    ParamMap params_;
};

/// Extractor trunk followed by a linear map to one scalar. Used as the
/// Wasserstein critic F (raw output) and as the detector H (sigmoid output).
class ScalarHead {
public:
    ScalarHead() = default;

    ScalarHead(Extractor trunk, double weight_std, std::mt19937_64& rng) : trunk_(std::move(trunk)) {
        nn::add_linear(head_, "head", trunk_.config().embedding_dim, 1, weight_std, rng);
    }

    Extractor& trunk() { return trunk_; }
    const Extractor& trunk() const { return trunk_; }
    ParamMap& head() { return head_; }
    const ParamMap& head() const { return head_; }

    /// Raw scalar per sample, shape (N).
    Var logits(Tape& t, Var x) {
        Var z = trunk_.forward(t, x).z;
        Var v = nn::linear(t, head_, "head", z);
        return ag::reshape(v, {v.value().dim(0)});
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        for (auto& [k, p] : trunk_.params()) fn("trunk/" + k, p);
        for (auto& [k, p] : head_) fn("head/" + k, p);
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) const {
        for (const auto& [k, p] : trunk_.params()) fn("trunk/" + k, p);
        for (const auto& [k, p] : head_) fn("head/" + k, p);
    }

    /// Clamps every parameter into [-c, c].
    void clip(double c) {
        for_each_param([c](const std::string&, Parameter& p) {
            for (double& v : p.value.vec()) v = std::clamp(v, -c, c);
        });
    }

    double max_abs_param() const {
        double m = 0.0;
        for_each_param([&m](const std::string&, const Parameter& p) { m = std::max(m, max_abs(p.value)); });
        return m;
    }

private:
    Extractor trunk_;
    ParamMap head_;
};

using Critic = ScalarHead;
using Detector = ScalarHead;

inline constexpr double kDefaultCriticClip = 0.01;
inline constexpr double kHeadInitStd = 0.01;

struct ModelBundle {
    Extractor extractor;
    Generator generator;
    Critic critic;
    std::optional<Detector> detector;

    /// Fresh D, G, F from independent streams of `seed`. F starts clipped.
    static ModelBundle create(const BackboneConfig& cfg, std::uint64_t seed, double critic_clip = kDefaultCriticClip) {
        std::seed_seq sd{seed, std::uint64_t{1}}, sg{seed, std::uint64_t{2}}, sf{seed, std::uint64_t{3}};
        std::mt19937_64 rd(sd), rg(sg), rf(sf);
        ModelBundle b;
        b.extractor = Extractor(cfg, rd);
        b.generator = Generator(b.extractor, rg);
        b.critic = Critic(Extractor(cfg, rf), std::sqrt(1.0 / static_cast<double>(cfg.embedding_dim)), rf);
        b.critic.clip(critic_clip);
        return b;
    }
};

inline Tensor batch_pixels(std::span<const ImageSample> images) {
    std::vector<Tensor> px;
    px.reserve(images.size());
    for (const auto& im : images) px.push_back(im.pixels);
    return stack(px);
}

/// H from D: trunk copied, head weights ~ N(0, head_std), bias 0.
inline Detector init_detector_from_extractor(const Extractor& d, std::mt19937_64& rng, double head_std = kHeadInitStd) {
    return Detector(d, head_std, rng);
}

inline Detector init_detector_from_extractor(const Extractor& d, std::uint64_t seed, double head_std = kHeadInitStd) {
    std::seed_seq ss{seed, std::uint64_t{4}};
    std::mt19937_64 rng(ss);
    return init_detector_from_extractor(d, rng, head_std);
}

// Inference entry points. The networks are stateless between calls (no
// batch statistics or dropout), so evaluation is deterministic.

inline std::vector<EmbeddingVector> embed(Extractor& d, std::span<const ImageSample> images) {
    if (images.empty()) return {};
    Tape t(false);
    Tensor z = d.forward(t, t.constant(batch_pixels(images))).z.value();
    std::vector<EmbeddingVector> out(images.size());
    const std::size_t k = z.dim(1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].values.assign(z.data() + i * k, z.data() + (i + 1) * k);
    return out;
}

inline EmbeddingVector embed(Extractor& d, const ImageSample& image) {
    return embed(d, std::span<const ImageSample>(&image, 1)).front();
}

inline ImageSample generate(Generator& g, const EmbeddingVector& z, std::span<const Tensor> skips = {}) {
    Tape t(false);
    Var zv = t.constant(Tensor({1, z.values.size()}, z.values));
    std::vector<Var> sk;
    for (const Tensor& s : skips) sk.push_back(t.constant(s));
    Tensor y = g.forward(t, zv, sk).value();
    const auto& c = g.config().input_shape;
    return ImageSample{y.reshaped({c[0], c[1], c[2]}), g.config().input_shape[0] == 3 ? Modality::face : Modality::fingerprint,
                       Label::unlabeled, {}};
}

inline std::vector<double> discriminate(Critic& f, std::span<const ImageSample> images) {
    if (images.empty()) return {};
    Tape t(false);
    return f.logits(t, t.constant(batch_pixels(images))).value().vec();
}

inline double discriminate(Critic& f, const ImageSample& image) {
    return discriminate(f, std::span<const ImageSample>(&image, 1)).front();
}

inline std::vector<double> score(Detector& h, std::span<const ImageSample> images) {
    if (images.empty()) return {};
    Tape t(false);
    return ag::sigmoid(h.logits(t, t.constant(batch_pixels(images)))).value().vec();
}

inline double score(Detector& h, const ImageSample& image) {
    return score(h, std::span<const ImageSample>(&image, 1)).front();
}

}  // namespace ifom
