#pragma once

#include <map>
#include <string>
#include <string_view>

#include "ifom/error.hpp"
#include "ifom/tensor.hpp"

namespace ifom {

enum class Modality { face, fingerprint };
enum class Label { bona_fide, attack, unlabeled };

inline std::string_view to_string(Modality m) { return m == Modality::face ? "face" : "fingerprint"; }

inline std::string_view to_string(Label l) {
    switch (l) {
        case Label::bona_fide: return "bona_fide";
        case Label::attack: return "attack";
        case Label::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline Modality parse_modality(std::string_view s) {
    if (s == "face") return Modality::face;
    if (s == "fingerprint") return Modality::fingerprint;
    throw InvalidInput("unknown modality '" + std::string(s) + "'");
}

inline Label parse_label(std::string_view s) {
    if (s == "bona_fide") return Label::bona_fide;
    if (s == "attack") return Label::attack;
    if (s == "unlabeled") return Label::unlabeled;
    throw InvalidInput("unknown label '" + std::string(s) + "'");
}

/// Attack = 1, bona fide = 0. Unlabeled samples have no target.
inline double label_target(Label l) {
    if (l == Label::unlabeled) throw InvalidInput("unlabeled sample has no training target");
    return l == Label::attack ? 1.0 : 0.0;
}

using Meta = std::map<std::string, std::string>;

/// One image, pixels (C, H, W) in [0, 1].
struct ImageSample {
    Tensor pixels;
    Modality modality = Modality::fingerprint;
    Label label = Label::unlabeled;
    Meta meta;

    std::size_t channels() const { return pixels.dim(0); }
    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }
};

/// Throws InvalidInput unless the sample satisfies the pixel-domain invariants.
inline void validate(const ImageSample& s) {
    if (s.pixels.rank() != 3) throw InvalidInput("image must be (C, H, W), got " + shape_str(s.pixels.shape()));
    if (s.height() < 8 || s.width() < 8)
        throw InvalidInput("image must be at least 8x8, got " + shape_str(s.pixels.shape()));
    for (double v : s.pixels.values())
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("pixel value outside [0, 1]");
}

}  // namespace ifom
