#pragma once

// Training objectives. Each function builds its value on the caller's Tape
// so the same expression serves for reporting and for backpropagation.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ifom/autograd.hpp"

namespace ifom {

struct LossValue {
    double value = 0.0;
    std::map<std::string, double> components;
};

struct NoiseSpec {
    double mean = 0.0;
    double std = 0.1;
    bool per_element = true;
};

/// Mean over the batch of the per-sample L2 norm of (y - x). With
/// `squared` the per-sample squared norm is used instead.
inline Var loss_reconstruction(Var y, Var x, bool squared = false) {
    if (y.shape() != x.shape())
        throw InvalidInput("reconstruction: shape " + shape_str(y.shape()) + " vs " + shape_str(x.shape()));
    if (y.value().rank() == 0 || y.value().dim(0) == 0) throw InvalidInput("reconstruction: empty batch");
    Var d = ag::sub(y, x);
    return ag::mean(squared ? ag::row_sqnorm(d) : ag::row_norm(d));
}

struct AdversarialTerms {
    Var generator;  // -mean F(fake), minimized by G and D
    Var critic;     // -(mean F(real) - mean F(fake)), minimized by F
    double gap = 0.0;  // mean F(real) - mean F(fake)
};

/// Wasserstein terms from critic outputs on real and fake batches.
inline AdversarialTerms loss_adversarial(Var critic_real, Var critic_fake) {
    if (critic_real.value().numel() == 0 || critic_fake.value().numel() == 0)
        throw InvalidInput("adversarial: empty batch");
    Var mr = ag::mean(critic_real);
    Var mf = ag::mean(critic_fake);
    return {ag::scale(mf, -1.0), ag::sub(mf, mr), mr.value()[0] - mf.value()[0]};
}

/// Draws the per-sample noise tensor for the topological loss.
template <typename Rng>
Tensor sample_topological_noise(const Shape& shape, const NoiseSpec& noise, Rng& rng) {
    Tensor d(shape, noise.mean);
    if (noise.std <= 0.0) return d;
    std::normal_distribution<double> dist(noise.mean, noise.std);
    if (noise.per_element) {
        for (double& v : d.vec()) v = dist(rng);
    } else {
        const std::size_t stride = d.numel() / shape[0];
        for (std::size_t r = 0; r < shape[0]; ++r) {
            double s = dist(rng);
            for (std::size_t k = 0; k < stride; ++k) d[r * stride + k] = s;
        }
    }
    return d;
}

/// Mean over the batch of || z_ij - (eps z_i + (1 - eps) z_j) + delta ||.
/// `delta` is a constant: no gradient reaches it.
inline Var loss_topological(Var z_ij, Var z_i, Var z_j, std::span<const double> eps, const Tensor& delta) {
    if (z_ij.shape() != z_i.shape() || z_ij.shape() != z_j.shape())
        throw InvalidInput("topological: embedding batch shapes differ");
    if (z_ij.value().dim(0) != eps.size())
        throw InvalidInput("topological: " + std::to_string(eps.size()) + " mixing weights for " +
                           std::to_string(z_ij.value().dim(0)) + " samples");
    for (double e : eps)
        if (!(e >= 0.0 && e <= 1.0)) throw InvalidInput("topological: epsilon outside [0, 1]");
    std::vector<double> rest(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) rest[i] = 1.0 - eps[i];
    Var mixed = ag::add(ag::scale_rows(z_i, eps), ag::scale_rows(z_j, rest));
    Var r = ag::add_const(ag::sub(z_ij, mixed), delta);
    return ag::mean(ag::row_norm(r));
}

template <typename Rng>
Var loss_topological(Var z_ij, Var z_i, Var z_j, std::span<const double> eps, const NoiseSpec& noise, Rng& rng) {
    return loss_topological(z_ij, z_i, z_j, eps, sample_topological_noise(z_ij.shape(), noise, rng));
}

inline constexpr double kProbabilityClamp = 1e-7;

inline Var loss_crossentropy(Var probs, std::span<const double> targets) {
    return ag::binary_cross_entropy(probs, targets, kProbabilityClamp);
}

/// Plain-value form of the cross entropy, for reporting.
inline double crossentropy(std::span<const double> v, std::span<const double> u) {
    if (v.size() != u.size()) throw InvalidInput("crossentropy: length mismatch");
    Tape t(false);
    return loss_crossentropy(t.constant(Tensor({v.size()}, std::vector<double>(v.begin(), v.end()))), u).value()[0];
}

/// E || delta ||_2 for delta ~ N(0, std^2 I_d): the chi mean scaled by std.
inline double expected_noise_norm(std::size_t d, double std) {
    const double nd = static_cast<double>(d);
    return std * std::sqrt(2.0) * std::exp(std::lgamma((nd + 1.0) / 2.0) - std::lgamma(nd / 2.0));
}

inline const std::vector<std::string>& pretrain_loss_terms() {
    static const std::vector<std::string> names{"reconstruction", "adversarial", "topological"};
    return names;
}

/// Unit-weight sum of the three pretraining terms.
inline LossValue combined_pretrain_loss(const std::map<std::string, double>& parts) {
    LossValue out;
    for (const auto& name : pretrain_loss_terms()) {
        auto it = parts.find(name);
        if (it == parts.end()) throw InvalidInput("combined loss: missing component '" + name + "'");
        out.components[name] = it->second;
        out.value += it->second;
    }
    return out;
}

}  // namespace ifom
