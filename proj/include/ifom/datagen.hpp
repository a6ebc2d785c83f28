#pragma once

// Synthetic bona fide / attack imagery, dataset manifests and evaluation
// protocol splits.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ifom/image.hpp"

namespace ifom {

// ---------------------------------------------------------------------------
// Generator regimes

/// Texture family of one synthetic regime. A regime stands in for an
/// attack material (or a sensor / dataset, depending on how the data is
/// labelled).
struct FingerprintRegime {
    std::string key;
    double period_lo, period_hi;  // bona fide ridge period band in pixels
    double attack_period_factor;  // attack ridge period = bona fide * factor
    int blotches_lo, blotches_hi;
    double blotch_strength;
};

struct FaceRegime {
    std::string key;
    double grating_period;  // moire period in pixels
    double grating_amplitude;
    double contrast_loss;
};

inline const std::vector<FingerprintRegime>& fingerprint_regimes() {
    static const std::vector<FingerprintRegime> r{
        {"latex-analog", 3.6, 4.4, 1.22, 1, 3, 0.55},
        {"gelatine-analog", 5.4, 6.6, 0.82, 1, 3, 0.55},
        {"silicone-analog", 4.4, 5.4, 1.30, 2, 4, 0.45},
    };
    return r;
}

inline const std::vector<FaceRegime>& face_regimes() {
    static const std::vector<FaceRegime> r{
        {"print-analog", 3.0, 0.05, 0.15},
        {"replay-analog", 5.0, 0.06, 0.13},
        {"mask-analog", 7.0, 0.04, 0.20},
    };
    return r;
}

template <typename R>
std::size_t regime_index(const std::vector<R>& table, const std::string& key) {
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i].key == key) return i;
    std::string known;
    for (const auto& r : table) known += (known.empty() ? "" : ", ") + r.key;
    throw InvalidInput("unknown generator_regime '" + key + "' (known: " + known + ")");
}

struct SyntheticSpec {
    Modality modality = Modality::fingerprint;
    std::size_t height = 32, width = 32;
    std::size_t n_per_class = 10;
    std::string generator_regime = "latex-analog";
    double noise_std = 0.03;
    std::uint64_t seed = 0;

    void validate() const {
        if (height < 16 || width < 16) throw InvalidInput("synthetic image_size must be at least 16x16");
        if (n_per_class < 2) throw InvalidInput("n_per_class must be at least 2");
        if (!(noise_std >= 0.0)) throw InvalidInput("noise_std must be non-negative");
        if (modality == Modality::fingerprint)
            regime_index(fingerprint_regimes(), generator_regime);
        else
            regime_index(face_regimes(), generator_regime);
    }
};

/// Independent stream for one sample: a function of (seed, regime, class,
/// index) only, so samples can be generated in any order or in parallel.
inline std::mt19937_64 sample_rng(const SyntheticSpec& spec, Label cls, std::size_t index) {
    std::size_t r = spec.modality == Modality::fingerprint ? regime_index(fingerprint_regimes(), spec.generator_regime)
                                                           : regime_index(face_regimes(), spec.generator_regime);
    std::seed_seq ss{spec.seed, static_cast<std::uint64_t>(spec.modality == Modality::face), static_cast<std::uint64_t>(r),
                     static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(index)};
    return std::mt19937_64(ss);
}

namespace detail {

inline double uni(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline void add_noise_and_clip(Tensor& px, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, std > 0 ? std : 1.0);
    for (double& v : px.vec()) v = std::clamp(v + (std > 0 ? n(rng) : 0.0), 0.0, 1.0);
}

}  // namespace detail

/// Arched ridge pattern inside a soft elliptical finger mask on a white
/// background. Attacks shift the ridge period, lose contrast and carry
/// smeared blotches.
inline ImageSample gen_fingerprint(const SyntheticSpec& spec, Label cls, std::mt19937_64& rng) {
    spec.validate();
    if (spec.modality != Modality::fingerprint) throw InvalidInput("gen_fingerprint needs a fingerprint spec");
    if (cls == Label::unlabeled) throw InvalidInput("gen_fingerprint needs a class");
    using detail::uni;
    const FingerprintRegime& reg = fingerprint_regimes()[regime_index(fingerprint_regimes(), spec.generator_regime)];
    const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);

    const double cx = W / 2 + uni(rng, -0.08, 0.08) * W, cy = H / 2 + uni(rng, -0.08, 0.08) * H;
    const double rx = uni(rng, 0.32, 0.42) * W, ry = uni(rng, 0.38, 0.48) * H;
    // Core point of the arches, possibly far outside the image.
    const double core_angle = uni(rng, 0.0, 2 * std::numbers::pi);
    const double core_dist = uni(rng, 0.3, 2.0) * W;
    const double ox = cx + core_dist * std::cos(core_angle), oy = cy + core_dist * std::sin(core_angle);
    double period = uni(rng, reg.period_lo, reg.period_hi);
    double contrast = uni(rng, 0.7, 0.9);
    const double phase0 = uni(rng, 0.0, 2 * std::numbers::pi);
    const bool attack = cls == Label::attack;
    if (attack) {
        period *= reg.attack_period_factor;
        contrast *= uni(rng, 0.75, 0.9);
    }
    struct Blotch {
        double x, y, r, s;
    };
    std::vector<Blotch> blotches;
    if (attack) {
        const int k = std::uniform_int_distribution<int>(reg.blotches_lo, reg.blotches_hi)(rng);
        for (int i = 0; i < k; ++i) {
            const double a = uni(rng, 0, 2 * std::numbers::pi), d = std::sqrt(uni(rng, 0, 1)) * 0.8;
            blotches.push_back({cx + d * rx * std::cos(a), cy + d * ry * std::sin(a), uni(rng, 0.06, 0.12) * W,
                                reg.blotch_strength * uni(rng, 0.7, 1.0)});
        }
    }

    Tensor px({1, spec.height, spec.width});
    for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            const double r = std::hypot((fx - cx) / rx, (fy - cy) / ry);
            const double mask = 1.0 / (1.0 + std::exp(-(1.0 - r) / 0.06));
            const double phase = 2 * std::numbers::pi * std::hypot(fx - ox, fy - oy) / period + phase0;
            const double ridge = 0.5 + 0.5 * std::cos(phase);
            double v = 1.0 - mask * contrast * ridge;
            for (const Blotch& b : blotches) {
                const double w = b.s * std::exp(-((fx - b.x) * (fx - b.x) + (fy - b.y) * (fy - b.y)) / (2 * b.r * b.r));
                v = (1.0 - w) * v + w * (1.0 - mask * contrast * 0.5);
            }
            px[y * spec.width + x] = v;
        }
    detail::add_noise_and_clip(px, spec.noise_std, rng);
    return ImageSample{std::move(px), Modality::fingerprint, cls, {}};
}

/// Mirror-symmetric face-like blob composition (RGB). Attacks overlay a
/// periodic grating and lose contrast.
inline ImageSample gen_face(const SyntheticSpec& spec, Label cls, std::mt19937_64& rng) {
    spec.validate();
    if (spec.modality != Modality::face) throw InvalidInput("gen_face needs a face spec");
    if (cls == Label::unlabeled) throw InvalidInput("gen_face needs a class");
    using detail::uni;
    const FaceRegime& reg = face_regimes()[regime_index(face_regimes(), spec.generator_regime)];
    const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);

    struct Blob {
        double x, y, sx, sy;
        std::array<double, 3> color;
        double weight;
    };
    const std::array<double, 3> bg{uni(rng, 0.1, 0.4), uni(rng, 0.1, 0.4), uni(rng, 0.1, 0.4)};
    const std::array<double, 3> skin{uni(rng, 0.6, 0.9), uni(rng, 0.45, 0.7), uni(rng, 0.35, 0.6)};
    const double cx = W / 2;
    std::vector<Blob> blobs;
    blobs.push_back({cx, H * uni(rng, 0.48, 0.55), W * uni(rng, 0.25, 0.32), H * uni(rng, 0.32, 0.4), skin, 1.0});
    const double eye_dx = W * uni(rng, 0.12, 0.18), eye_y = H * uni(rng, 0.38, 0.45), eye_s = W * uni(rng, 0.04, 0.06);
    const std::array<double, 3> dark{0.1, 0.08, 0.08};
    blobs.push_back({cx - eye_dx, eye_y, eye_s, eye_s * 0.7, dark, 0.9});
    blobs.push_back({cx + eye_dx, eye_y, eye_s, eye_s * 0.7, dark, 0.9});
    blobs.push_back({cx, H * uni(rng, 0.68, 0.74), W * uni(rng, 0.08, 0.12), H * 0.03, {0.6, 0.2, 0.2}, 0.8});
    blobs.push_back({cx, H * 0.55, W * 0.03, H * 0.07, {skin[0] * 0.85, skin[1] * 0.85, skin[2] * 0.85}, 0.6});

    const double gratings_phase = uni(rng, 0.0, 2 * std::numbers::pi);
    const double g_angle = uni(rng, 0.0, std::numbers::pi);
    const bool attack = cls == Label::attack;
    Tensor px({3, spec.height, spec.width});
    for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            std::array<double, 3> v = bg;
            for (const Blob& b : blobs) {
                const double d = ((fx - b.x) / b.sx) * ((fx - b.x) / b.sx) + ((fy - b.y) / b.sy) * ((fy - b.y) / b.sy);
                const double w = b.weight * std::exp(-0.5 * d * d);
                for (int c = 0; c < 3; ++c) v[c] = (1 - w) * v[c] + w * b.color[c];
            }
            for (int c = 0; c < 3; ++c) {
                double p = v[c];
                if (attack) {
                    p = 0.5 + (p - 0.5) * (1.0 - reg.contrast_loss);
                    const double proj = fx * std::cos(g_angle) + fy * std::sin(g_angle);
                    p += reg.grating_amplitude * std::sin(2 * std::numbers::pi * proj / reg.grating_period + gratings_phase);
                }
                px[(static_cast<std::size_t>(c) * spec.height + y) * spec.width + x] = p;
            }
        }
    detail::add_noise_and_clip(px, spec.noise_std, rng);
    return ImageSample{std::move(px), Modality::face, cls, {}};
}

inline ImageSample generate_sample(const SyntheticSpec& spec, Label cls, std::size_t index) {
    auto rng = sample_rng(spec, cls, index);
    return spec.modality == Modality::fingerprint ? gen_fingerprint(spec, cls, rng) : gen_face(spec, cls, rng);
}

// ---------------------------------------------------------------------------
// Raster I/O: binary PGM (1 channel) and PPM (3 channels), 8-bit.

inline void write_raster(const std::string& path, const Tensor& px) {
    const std::size_t C = px.dim(0), H = px.dim(1), W = px.dim(2);
    if (C != 1 && C != 3) throw InvalidInput("raster output needs 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << (C == 1 ? "P5" : "P6") << '\n' << W << ' ' << H << "\n255\n";
    std::vector<unsigned char> buf(C * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c)
                buf[(y * W + x) * C + c] =
                    static_cast<unsigned char>(std::lround(std::clamp(px[(c * H + y) * W + x], 0.0, 1.0) * 255.0));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Tensor read_raster(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw IoError(path + ": not a binary PGM/PPM file");
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
            in >> std::ws;
        }
        long v = -1;
        in >> v;
        if (!in || v <= 0) throw IoError(path + ": malformed header");
        return static_cast<std::size_t>(v);
    };
    const std::size_t W = next_int(), H = next_int(), maxval = next_int();
    if (maxval != 255) throw IoError(path + ": only 8-bit rasters are supported");
    in.get();
    const std::size_t C = magic == "P5" ? 1 : 3;
    std::vector<unsigned char> buf(C * H * W);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw IoError(path + ": truncated pixel data");
    Tensor px({C, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c) px[(c * H + y) * W + x] = buf[(y * W + x) * C + c] / 255.0;
    return px;
}

// ---------------------------------------------------------------------------
// Manifests

inline constexpr int kManifestSchemaVersion = 1;

struct ManifestEntry {
    std::string id;
    Label label = Label::unlabeled;
    Meta meta;
    std::optional<std::string> path;  // on-disk raster, relative to the manifest
    // Inline synthetic source, used when `path` is absent.
    std::optional<SyntheticSpec> synthetic;
    std::size_t index = 0;
};

struct DatasetManifest {
    int schema_version = kManifestSchemaVersion;
    Modality modality = Modality::fingerprint;
    std::vector<ManifestEntry> entries;
};

inline nlohmann::ordered_json to_json(const SyntheticSpec& s) {
    return {{"modality", to_string(s.modality)}, {"height", s.height},       {"width", s.width},
            {"n_per_class", s.n_per_class},       {"generator_regime", s.generator_regime},
            {"noise_std", s.noise_std},           {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    s.modality = parse_modality(j.at("modality").get<std::string>());
    s.height = j.at("height").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    s.n_per_class = j.at("n_per_class").get<std::size_t>();
    s.generator_regime = j.at("generator_regime").get<std::string>();
    s.noise_std = j.at("noise_std").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline std::string manifest_to_string(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["schema_version"] = m.schema_version;
    j["modality"] = to_string(m.modality);
    auto& rows = j["samples"] = nlohmann::ordered_json::array();
    for (const auto& e : m.entries) {
        nlohmann::ordered_json r;
        r["id"] = e.id;
        r["label"] = to_string(e.label);
        r["meta"] = e.meta;
        if (e.path) {
            r["path"] = *e.path;
        } else if (e.synthetic) {
            r["synthetic"] = to_json(*e.synthetic);
            r["index"] = e.index;
        }
        rows.push_back(std::move(r));
    }
    return j.dump(1) + "\n";
}

inline DatasetManifest manifest_from_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest parse error: ") + e.what());
    }
    if (!j.contains("schema_version")) throw IoError("manifest lacks schema_version");
    DatasetManifest m;
    try {
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != kManifestSchemaVersion)
            throw Incompatible("manifest schema_version " + std::to_string(m.schema_version) + " is not supported");
        m.modality = parse_modality(j.at("modality").get<std::string>());
        for (const auto& r : j.at("samples")) {
            ManifestEntry e;
            e.id = r.at("id").get<std::string>();
            e.label = parse_label(r.at("label").get<std::string>());
            if (r.contains("meta")) e.meta = r.at("meta").get<Meta>();
            if (r.contains("path")) {
                e.path = r.at("path").get<std::string>();
            } else if (r.contains("synthetic")) {
                e.synthetic = synthetic_spec_from_json(r.at("synthetic"));
                e.index = r.at("index").get<std::size_t>();
            } else {
                throw IoError("manifest row '" + e.id + "' has neither path nor synthetic source");
            }
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest schema error: ") + e.what());
    }
    return m;
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path);
    out << manifest_to_string(m);
}

inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return manifest_from_string(text);
}

/// Which meta key the synthetic regime is written to.
enum class RegimeRole { material, sensor, dataset };

inline RegimeRole parse_regime_role(std::string_view s) {
    if (s == "material") return RegimeRole::material;
    if (s == "sensor") return RegimeRole::sensor;
    if (s == "dataset") return RegimeRole::dataset;
    throw InvalidInput("unknown regime_role '" + std::string(s) + "'");
}

inline std::string_view to_string(RegimeRole r) {
    switch (r) {
        case RegimeRole::material: return "material";
        case RegimeRole::sensor: return "sensor";
        case RegimeRole::dataset: return "dataset";
    }
    return "material";
}

/// Inline manifest: n_per_class bona fide and n_per_class attack rows per
/// regime. `base` supplies everything but the regime.
inline DatasetManifest synthetic_manifest(const SyntheticSpec& base, const std::vector<std::string>& regimes,
                                          RegimeRole role = RegimeRole::material) {
    if (regimes.empty()) throw InvalidInput("at least one regime is required");
    DatasetManifest m;
    m.modality = base.modality;
    for (const auto& regime : regimes) {
        SyntheticSpec s = base;
        s.generator_regime = regime;
        s.validate();
        for (Label cls : {Label::bona_fide, Label::attack}) {
            for (std::size_t i = 0; i < s.n_per_class; ++i) {
                ManifestEntry e;
                e.id = regime + "/" + std::string(to_string(cls)) + "/" + std::to_string(i);
                e.label = cls;
                e.meta = {{"regime", regime},
                          {"material", "none"},
                          {"sensor", "sensor-0"},
                          {"dataset", "synthetic"},
                          {"subject", regime + "-" + std::to_string(i)}};
                if (role == RegimeRole::material) {
                    if (cls == Label::attack) e.meta["material"] = regime;
                } else {
                    e.meta[std::string(to_string(role))] = regime;
                }
                e.synthetic = s;
                e.index = i;
                m.entries.push_back(std::move(e));
            }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Datasets

/// Indexed image collection. Pixels and labels are separate accessors so a
/// wrapper can observe label access.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual const Tensor& pixels(std::size_t i) const = 0;
    virtual Label label(std::size_t i) const = 0;
    virtual const std::string& id(std::size_t i) const = 0;
    virtual Modality modality() const = 0;
};

class InMemoryDataset : public Dataset {
public:
    InMemoryDataset() = default;
    InMemoryDataset(Modality m, std::vector<ImageSample> samples, std::vector<std::string> ids = {})
        : modality_(m), samples_(std::move(samples)), ids_(std::move(ids)) {
        if (ids_.empty())
            for (std::size_t i = 0; i < samples_.size(); ++i) ids_.push_back(std::to_string(i));
        if (ids_.size() != samples_.size()) throw InvalidInput("dataset ids and samples differ in length");
    }

    std::size_t size() const override { return samples_.size(); }
    const Tensor& pixels(std::size_t i) const override { return samples_.at(i).pixels; }
    Label label(std::size_t i) const override { return samples_.at(i).label; }
    const std::string& id(std::size_t i) const override { return ids_.at(i); }
    Modality modality() const override { return modality_; }

    const ImageSample& sample(std::size_t i) const { return samples_.at(i); }
    const std::vector<ImageSample>& samples() const { return samples_; }

private:
    Modality modality_ = Modality::fingerprint;
    std::vector<ImageSample> samples_;
    std::vector<std::string> ids_;
};

/// Forwards to another dataset and counts label() calls.
class LabelCountingDataset : public Dataset {
public:
    explicit LabelCountingDataset(const Dataset& inner) : inner_(inner) {}

    std::size_t size() const override { return inner_.size(); }
    const Tensor& pixels(std::size_t i) const override { return inner_.pixels(i); }
    Label label(std::size_t i) const override {
        ++label_reads_;
        return inner_.label(i);
    }
    const std::string& id(std::size_t i) const override { return inner_.id(i); }
    Modality modality() const override { return inner_.modality(); }

    std::size_t label_reads() const { return label_reads_.load(); }

private:
    const Dataset& inner_;
    mutable std::atomic<std::size_t> label_reads_{0};
};

/// Worker count from IFOM_NUM_WORKERS (default 1).
inline std::size_t loader_workers() {
    const char* env = std::getenv("IFOM_NUM_WORKERS");
    if (env == nullptr) return 1;
    try {
        long v = std::stol(env);
        return v > 0 ? static_cast<std::size_t>(v) : 1;
    } catch (const std::exception&) {
        return 1;
    }
}

/// Materializes every manifest row. Rows are partitioned across workers by
/// index and stored in manifest order, so the result does not depend on
/// the worker count.
inline InMemoryDataset load_dataset(const DatasetManifest& m, const std::filesystem::path& base_dir = {},
                                    std::size_t workers = loader_workers()) {
    std::vector<ImageSample> samples(m.entries.size());
    std::vector<std::string> ids(m.entries.size());
    std::vector<std::string> errors(m.entries.size());
    auto load_one = [&](std::size_t i) {
        const ManifestEntry& e = m.entries[i];
        try {
            ImageSample s;
            if (e.path) {
                std::filesystem::path p(*e.path);
                s.pixels = read_raster((p.is_absolute() ? p : base_dir / p).string());
                s.modality = m.modality;
            } else if (e.synthetic) {
                const Label cls = e.label == Label::unlabeled ? Label::bona_fide : e.label;
                s = generate_sample(*e.synthetic, cls, e.index);
            }
            s.label = e.label;
            s.meta = e.meta;
            samples[i] = std::move(s);
            ids[i] = e.id;
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, m.entries.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < m.entries.size(); ++i) load_one(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < m.entries.size(); i += workers) load_one(i);
            });
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw IoError("loading '" + m.entries[i].id + "': " + errors[i]);
    return InMemoryDataset(m.modality, std::move(samples), std::move(ids));
}

// ---------------------------------------------------------------------------
// Protocol splits

enum class Protocol { cross_material, cross_sensor, cross_dataset };

inline std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::cross_material: return "cross_material";
        case Protocol::cross_sensor: return "cross_sensor";
        case Protocol::cross_dataset: return "cross_dataset";
    }
    return "cross_material";
}

inline Protocol parse_protocol(std::string_view s) {
    if (s == "cross_material") return Protocol::cross_material;
    if (s == "cross_sensor") return Protocol::cross_sensor;
    if (s == "cross_dataset") return Protocol::cross_dataset;
    throw InvalidInput("unknown protocol '" + std::string(s) + "'");
}

inline std::string default_split_key(Protocol p) {
    switch (p) {
        case Protocol::cross_material: return "material";
        case Protocol::cross_sensor: return "sensor";
        case Protocol::cross_dataset: return "dataset";
    }
    return "material";
}

struct ProtocolSplit {
    Protocol name = Protocol::cross_material;
    DatasetManifest train;
    DatasetManifest test;
};

/// cross_material: attacks whose `key` value is held out go to test, other
/// attacks to train; bona fide rows are spread over train and test in
/// manifest order so that a `bonafide_test_fraction` share lands in test.
/// cross_sensor / cross_dataset: every row whose `key` value is held out
/// goes to test, everything else to train.
inline ProtocolSplit make_protocol_split(const DatasetManifest& full, Protocol protocol,
                                         const std::set<std::string>& holdout, std::string key = {},
                                         double bonafide_test_fraction = 0.5) {
    if (key.empty()) key = default_split_key(protocol);
    if (holdout.empty()) throw InvalidInput("protocol split needs at least one held-out value");
    if (!(bonafide_test_fraction >= 0.0 && bonafide_test_fraction <= 1.0))
        throw InvalidInput("bonafide_test_fraction must lie in [0, 1]");
    ProtocolSplit s;
    s.name = protocol;
    s.train.modality = s.test.modality = full.modality;
    s.train.schema_version = s.test.schema_version = full.schema_version;
    std::size_t bonafide_seen = 0;
    for (const auto& e : full.entries) {
        const bool needs_key = protocol != Protocol::cross_material || e.label == Label::attack;
        auto it = e.meta.find(key);
        if (needs_key && it == e.meta.end())
            throw InvalidInput("manifest row '" + e.id + "' lacks split key '" + key + "'");
        bool to_test = false;
        if (protocol == Protocol::cross_material && e.label != Label::attack) {
            const double k = static_cast<double>(bonafide_seen++);
            to_test = std::floor((k + 1) * bonafide_test_fraction) > std::floor(k * bonafide_test_fraction);
        } else {
            to_test = holdout.count(it->second) > 0;
        }
        (to_test ? s.test : s.train).entries.push_back(e);
    }
    return s;
}

}  // namespace ifom
