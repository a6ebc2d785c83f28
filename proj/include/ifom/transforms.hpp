#pragma once

// De-Folding and De-Mixing input transforms.
//
// Folding cuts an image into patches at randomized positions, flips the
// patches toward a common orientation when their flag is set, resizes every
// patch back to the full image size and averages them. Mixing is a convex
// combination of two images.

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "ifom/image.hpp"

namespace ifom {

struct FoldSpec {
    Modality modality = Modality::face;
    double cut_v = 0.5;
    std::optional<double> cut_h;  // fingerprint only
    std::vector<bool> flips;       // 2 for face, 4 for fingerprint

    bool operator==(const FoldSpec&) const = default;
};

struct MixSpec {
    double epsilon = 0.5;
};

inline constexpr double kCutMin = 0.25;
inline constexpr double kCutMax = 0.75;

template <typename Rng>
FoldSpec sample_fold_spec(Rng& rng, Modality modality) {
    std::uniform_real_distribution<double> cut(kCutMin, kCutMax);
    std::bernoulli_distribution coin(0.5);
    FoldSpec s;
    s.modality = modality;
    s.cut_v = cut(rng);
    std::size_t nflips = 2;
    if (modality == Modality::fingerprint) {
        s.cut_h = cut(rng);
        nflips = 4;
    }
    for (std::size_t i = 0; i < nflips; ++i) s.flips.push_back(coin(rng));
    return s;
}

template <typename Rng>
MixSpec sample_mix_spec(Rng& rng) {
    return MixSpec{std::uniform_real_distribution<double>(0.0, 1.0)(rng)};
}

namespace detail {

// Rectangular region of a (C, H, W) image with optional flips.
struct Patch {
    std::size_t y0, x0, h, w;
    bool flip_h = false;  // mirror columns
    bool flip_v = false;  // mirror rows
};

// Resizes a patch to (H, W) with corner-aligned bilinear sampling and adds
// it, scaled by `weight`, into `out`.
inline void accumulate_resized(const Tensor& src, const Patch& p, double weight, Tensor& out) {
    const std::size_t C = src.dim(0), H = src.dim(1), W = src.dim(2);
    const double sy = H > 1 ? static_cast<double>(p.h - 1) / static_cast<double>(H - 1) : 0.0;
    const double sx = W > 1 ? static_cast<double>(p.w - 1) / static_cast<double>(W - 1) : 0.0;
    auto fetch = [&](std::size_t c, std::size_t py, std::size_t px) {
        std::size_t yy = p.flip_v ? p.h - 1 - py : py;
        std::size_t xx = p.flip_h ? p.w - 1 - px : px;
        return src[(c * H + p.y0 + yy) * W + p.x0 + xx];
    };
    for (std::size_t y = 0; y < H; ++y) {
        const double fy = static_cast<double>(y) * sy;
        const std::size_t y0 = std::min(static_cast<std::size_t>(fy), p.h - 1);
        const std::size_t y1 = std::min(y0 + 1, p.h - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < W; ++x) {
            const double fx = static_cast<double>(x) * sx;
            const std::size_t x0 = std::min(static_cast<std::size_t>(fx), p.w - 1);
            const std::size_t x1 = std::min(x0 + 1, p.w - 1);
            const double tx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < C; ++c) {
                const double top = (1.0 - tx) * fetch(c, y0, x0) + tx * fetch(c, y0, x1);
                const double bot = (1.0 - tx) * fetch(c, y1, x0) + tx * fetch(c, y1, x1);
                out[(c * H + y) * W + x] += weight * ((1.0 - ty) * top + ty * bot);
            }
        }
    }
}

inline std::size_t cut_index(double frac, std::size_t extent) {
    const std::size_t c = static_cast<std::size_t>(std::lround(frac * static_cast<double>(extent)));
    if (c == 0 || c >= extent) throw InvalidSpec("cut at " + std::to_string(frac) + " yields a zero-size patch");
    return c;
}

inline Tensor average_patches(const Tensor& src, std::span<const Patch> patches) {
    Tensor out(src.shape());
    const double wgt = 1.0 / static_cast<double>(patches.size());
    for (const Patch& p : patches) accumulate_resized(src, p, wgt, out);
    for (double& v : out.vec()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

inline void check_pixels(const Tensor& px) {
    if (px.rank() != 3 || px.dim(1) < 8 || px.dim(2) < 8)
        throw InvalidInput("fold: image must be (C, H>=8, W>=8), got " + shape_str(px.shape()));
}

}  // namespace detail

/// Face folding on raw (C, H, W) pixels: a vertical cut into left/right
/// patches, each optionally mirrored horizontally.
inline Tensor fold_face_pixels(const Tensor& px, const FoldSpec& spec) {
    detail::check_pixels(px);
    if (spec.modality != Modality::face || spec.flips.size() != 2 || spec.cut_h)
        throw InvalidSpec("fold_face needs a face spec with two flip flags and no horizontal cut");
    const std::size_t H = px.dim(1), W = px.dim(2);
    const std::size_t c = detail::cut_index(spec.cut_v, W);
    const std::array<detail::Patch, 2> patches{{
        {0, 0, H, c, spec.flips[0], false},
        {0, c, H, W - c, spec.flips[1], false},
    }};
    return detail::average_patches(px, patches);
}

/// Fingerprint folding on raw pixels: quadrants cut at (cut_v*W, cut_h*H).
/// A set flag maps its quadrant into the top-left frame: top-right mirrors
/// columns, bottom-left mirrors rows, bottom-right mirrors both; top-left is
/// already canonical.
inline Tensor fold_fingerprint_pixels(const Tensor& px, const FoldSpec& spec) {
    detail::check_pixels(px);
    if (spec.modality != Modality::fingerprint || spec.flips.size() != 4 || !spec.cut_h)
        throw InvalidSpec("fold_fingerprint needs a fingerprint spec with four flip flags and both cuts");
    const std::size_t H = px.dim(1), W = px.dim(2);
    const std::size_t cx = detail::cut_index(spec.cut_v, W);
    const std::size_t cy = detail::cut_index(*spec.cut_h, H);
    const auto& f = spec.flips;
    const std::array<detail::Patch, 4> patches{{
        {0, 0, cy, cx, false, false},
        {0, cx, cy, W - cx, f[1], false},
        {cy, 0, H - cy, cx, false, f[2]},
        {cy, cx, H - cy, W - cx, f[3], f[3]},
    }};
    return detail::average_patches(px, patches);
}

inline Tensor fold_pixels(const Tensor& px, const FoldSpec& spec) {
    return spec.modality == Modality::face ? fold_face_pixels(px, spec) : fold_fingerprint_pixels(px, spec);
}

inline ImageSample fold_face(const ImageSample& image, const FoldSpec& spec) {
    if (image.modality != Modality::face) throw InvalidInput("fold_face on a non-face image");
    return ImageSample{fold_face_pixels(image.pixels, spec), image.modality, image.label, image.meta};
}

inline ImageSample fold_fingerprint(const ImageSample& image, const FoldSpec& spec) {
    if (image.modality != Modality::fingerprint) throw InvalidInput("fold_fingerprint on a non-fingerprint image");
    return ImageSample{fold_fingerprint_pixels(image.pixels, spec), image.modality, image.label, image.meta};
}

/// eps * a + (1 - eps) * b, elementwise.
inline Tensor mix_pixels(const Tensor& a, const Tensor& b, double eps) {
    if (a.shape() != b.shape())
        throw InvalidInput("mix: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidInput("mix: epsilon outside [0, 1]");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = eps * a[i] + (1.0 - eps) * b[i];
    return out;
}

inline ImageSample mix(const ImageSample& xi, const ImageSample& xj, const MixSpec& spec) {
    if (xi.modality != xj.modality) throw InvalidInput("mix: modality mismatch");
    ImageSample out{mix_pixels(xi.pixels, xj.pixels, spec.epsilon), xi.modality, Label::unlabeled, {}};
    for (const auto& [k, v] : xi.meta) out.meta["i." + k] = v;
    for (const auto& [k, v] : xj.meta) out.meta["j." + k] = v;
    return out;
}

}  // namespace ifom
