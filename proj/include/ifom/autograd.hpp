#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape records every operation of one forward computation in creation
// order, so reverse iteration is a valid topological order for the
// backward sweep. Parameters are leaves that accumulate into their own
// gradient buffer when Tape::backward runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ifom/error.hpp"
#include "ifom/tensor.hpp"

namespace ifom {

/// A trainable array with its accumulated gradient.
struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor v) : value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

class Tape {
public:
    /// With record = false no backward closures are kept (inference mode).
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_; }

    Var constant(Tensor t) { return push(std::move(t), false); }

    Var param(Parameter& p) {
        const bool frozen = std::find(frozen_.begin(), frozen_.end(), &p) != frozen_.end();
        Var v = push(p.value, record_ && !frozen);
        nodes_[v.id].param = &p;
        return v;
    }

    /// Parameters frozen on this tape enter as constants (no gradient).
    template <typename ParamRange>
    void freeze(ParamRange& params) {
        for (auto& [_, p] : params) frozen_.push_back(&p);
    }

    /// Detached copy of v: same value, no gradient path.
    Var detach(Var v) { return constant(v.value()); }

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    /// Gradient buffer of v, allocated on first use.
    Tensor& grad(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.numel() != n.value.numel()) n.grad = Tensor::zeros_like(n.value);
        return n.grad;
    }

    /// Creates a node whose gradient flows to `parents` through `back`.
    /// `back` receives the output gradient and is called at most once.
    Var op(Tensor out, std::initializer_list<Var> parents, std::function<void(const Tensor&)> back) {
        bool ng = false;
        if (record_)
            for (Var p : parents) ng = ng || nodes_[p.id].needs_grad;
        Var v = push(std::move(out), ng);
        if (ng) nodes_[v.id].backward = std::move(back);
        return v;
    }

    /// Seeds d(loss)/d(loss) = 1 and sweeps in reverse, accumulating into
    /// every Parameter reached.
    void backward(Var loss) {
        if (!record_) throw InvalidInput("backward on a non-recording tape");
        if (value(loss).numel() != 1) throw InvalidInput("backward needs a scalar loss");
        grad(loss)[0] += 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.numel() == 0) continue;
            if (n.backward) n.backward(n.grad);
            if (n.param != nullptr) {
                auto& g = n.param->grad.vec();
                const auto& src = n.grad.vec();
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
            }
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(const Tensor&)> backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };

    Var push(Tensor t, bool needs_grad) {
        nodes_.push_back(Node{std::move(t), Tensor{}, {}, nullptr, needs_grad});
        return Var{this, nodes_.size() - 1};
    }

    bool record_;
    std::vector<Node> nodes_;
    std::vector<const Parameter*> frozen_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace detail {

inline void require_same(const Var& a, const Var& b, const char* what) {
    if (a.shape() != b.shape())
        throw InvalidInput(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void accumulate(Tape& t, Var target, const Tensor& g) {
    if (!t.needs_grad(target)) return;
    auto& dst = t.grad(target).vec();
    const auto& src = g.vec();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename Fn>
Var unary(Var a, Fn fwd_and_deriv) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    Tensor out(x.shape());
    Tensor deriv(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        auto [y, d] = fwd_and_deriv(x[i]);
        out[i] = y;
        deriv[i] = d;
    }
    return t.op(std::move(out), {a}, [&t, a, deriv = std::move(deriv)](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        auto& dst = t.grad(a).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * deriv[i];
    });
}

}  // namespace detail

inline Var add(Var a, Var b) {
    detail::require_same(a, b, "add");
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return t.op(std::move(out), {a, b}, [&t, a, b](const Tensor& g) {
        detail::accumulate(t, a, g);
        detail::accumulate(t, b, g);
    });
}

inline Var sub(Var a, Var b) {
    detail::require_same(a, b, "sub");
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return t.op(std::move(out), {a, b}, [&t, a, b](const Tensor& g) {
        detail::accumulate(t, a, g);
        if (!t.needs_grad(b)) return;
        auto& dst = t.grad(b).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= g[i];
    });
}

inline Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (double& v : out.vec()) v *= s;
    return t.op(std::move(out), {a}, [&t, a, s](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        auto& dst = t.grad(a).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * g[i];
    });
}

/// a + c for a constant tensor c (no gradient to c).
inline Var add_const(Var a, const Tensor& c) {
    if (a.shape() != c.shape())
        throw InvalidInput("add_const: shape " + shape_str(a.shape()) + " vs " + shape_str(c.shape()));
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c[i];
    return t.op(std::move(out), {a}, [&t, a](const Tensor& g) { detail::accumulate(t, a, g); });
}

/// Multiplies sample n (leading axis) by weights[n].
inline Var scale_rows(Var a, std::span<const double> weights) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    if (x.rank() == 0 || x.dim(0) != weights.size())
        throw InvalidInput("scale_rows: " + std::to_string(weights.size()) + " weights for shape " + shape_str(x.shape()));
    std::size_t stride = x.numel() / x.dim(0);
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= weights[i / stride];
    std::vector<double> w(weights.begin(), weights.end());
    return t.op(std::move(out), {a}, [&t, a, w = std::move(w), stride](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        auto& dst = t.grad(a).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * w[i / stride];
    });
}

inline Var relu(Var a) {
    return detail::unary(a, [](double x) { return std::pair{x > 0 ? x : 0.0, x > 0 ? 1.0 : 0.0}; });
}

inline Var leaky_relu(Var a, double slope = 0.2) {
    return detail::unary(a, [slope](double x) { return std::pair{x > 0 ? x : slope * x, x > 0 ? 1.0 : slope}; });
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
    return detail::unary(a, [](double x) {
        double s = sigmoid(x);
        return std::pair{s, s * (1.0 - s)};
    });
}

inline Var reshape(Var a, Shape s) {
    Tape& t = *a.tape;
    Tensor out = a.value().reshaped(std::move(s));
    return t.op(std::move(out), {a}, [&t, a](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        auto& dst = t.grad(a).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    });
}

/// Flattens all but the leading axis.
inline Var flatten(Var a) {
    std::size_t n = a.value().dim(0);
    return reshape(a, {n, a.value().numel() / n});
}

inline Var sum(Var a) {
    Tape& t = *a.tape;
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return t.op(Tensor({1}, s), {a}, [&t, a](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        for (double& d : t.grad(a).vec()) d += g[0];
    });
}

inline Var mean(Var a) {
    std::size_t n = a.value().numel();
    if (n == 0) throw InvalidInput("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Per-sample Euclidean norm over all non-leading axes: (N, ...) -> (N).
/// The subgradient at a zero row is taken as 0.
inline Var row_norm(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    std::size_t n = x.dim(0), stride = x.numel() / n;
    Tensor out({n});
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < stride; ++k) s += x[r * stride + k] * x[r * stride + k];
        out[r] = std::sqrt(s);
    }
    Tensor norms = out;
    return t.op(std::move(out), {a}, [&t, a, norms = std::move(norms), stride](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        const Tensor& x = a.value();
        auto& dst = t.grad(a).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            double nr = norms[i / stride];
            if (nr > 0) dst[i] += g[i / stride] * x[i] / nr;
        }
    });
}

/// Per-sample squared Euclidean norm: (N, ...) -> (N).
inline Var row_sqnorm(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    std::size_t n = x.dim(0), stride = x.numel() / n;
    Tensor out({n});
    for (std::size_t i = 0; i < x.numel(); ++i) out[i / stride] += x[i] * x[i];
    return t.op(std::move(out), {a}, [&t, a, stride](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        const Tensor& x = a.value();
        auto& dst = t.grad(a).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += 2.0 * g[i / stride] * x[i];
    });
}

/// Binary cross-entropy, averaged, with probabilities clamped to
/// [clamp, 1 - clamp]. Clamped entries pass no gradient.
inline Var binary_cross_entropy(Var probs, std::span<const double> targets, double clamp = 1e-7) {
    Tape& t = *probs.tape;
    const Tensor& v = probs.value();
    if (v.numel() != targets.size())
        throw InvalidInput("binary_cross_entropy: " + std::to_string(v.numel()) + " probabilities vs " +
                           std::to_string(targets.size()) + " targets");
    if (targets.empty()) throw InvalidInput("binary_cross_entropy: empty batch");
    const double n = static_cast<double>(targets.size());
    double total = 0.0;
    Tensor deriv(v.shape());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double raw = v[i];
        double p = std::clamp(raw, clamp, 1.0 - clamp);
        double u = targets[i];
        total -= u * std::log(p) + (1.0 - u) * std::log(1.0 - p);
        bool inside = raw > clamp && raw < 1.0 - clamp;
        deriv[i] = inside ? (-u / p + (1.0 - u) / (1.0 - p)) / n : 0.0;
    }
    return t.op(Tensor({1}, total / n), {probs}, [&t, probs, deriv = std::move(deriv)](const Tensor& g) {
        if (!t.needs_grad(probs)) return;
        auto& dst = t.grad(probs).vec();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * deriv[i];
    });
}

/// x (N, I) times weight (O, I) transposed, plus bias (O).
inline Var linear(Var x, Var weight, Var bias) {
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1) || bias.value().numel() != wv.dim(0))
        throw InvalidInput("linear: input " + shape_str(xv.shape()) + " weight " + shape_str(wv.shape()));
    const std::size_t n = xv.dim(0), in = xv.dim(1), outd = wv.dim(0);
    Tensor out({n, outd});
    CMapMat X(xv.data(), n, in), W(wv.data(), outd, in);
    MapMat Y(out.data(), n, outd);
    Y.noalias() = X * W.transpose();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < outd; ++o) Y(r, o) += bias.value()[o];
    return t.op(std::move(out), {x, weight, bias}, [&t, x, weight, bias, n, in, outd](const Tensor& g) {
        CMapMat G(g.data(), n, outd);
        if (t.needs_grad(x)) {
            MapMat(t.grad(x).data(), n, in).noalias() += G * CMapMat(weight.value().data(), outd, in);
        }
        if (t.needs_grad(weight)) {
            MapMat(t.grad(weight).data(), outd, in).noalias() += G.transpose() * CMapMat(x.value().data(), n, in);
        }
        if (t.needs_grad(bias)) {
            auto& db = t.grad(bias).vec();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t o = 0; o < outd; ++o) db[o] += G(r, o);
        }
    });
}

struct ConvGeometry {
    std::size_t n, c, h, w;        // input
    std::size_t o, k, stride, pad;  // filter
    std::size_t groups;
    std::size_t ho, wo;

    std::size_t cg() const { return c / groups; }
    std::size_t og() const { return o / groups; }
    std::size_t rows() const { return cg() * k * k; }
    std::size_t cols() const { return n * ho * wo; }
};

namespace detail {

// Unfolds group g of x into a (cg*k*k, n*ho*wo) matrix.
inline void im2col(const double* x, const ConvGeometry& q, std::size_t g, double* col) {
    const std::size_t P = q.ho * q.wo, cols = q.cols();
    for (std::size_t ci = 0; ci < q.cg(); ++ci) {
        const std::size_t chan = g * q.cg() + ci;
        for (std::size_t ky = 0; ky < q.k; ++ky)
            for (std::size_t kx = 0; kx < q.k; ++kx) {
                double* row = col + ((ci * q.k + ky) * q.k + kx) * cols;
                for (std::size_t s = 0; s < q.n; ++s) {
                    const double* plane = x + (s * q.c + chan) * q.h * q.w;
                    double* dst = row + s * P;
                    for (std::size_t oy = 0; oy < q.ho; ++oy) {
                        const long iy = static_cast<long>(oy * q.stride + ky) - static_cast<long>(q.pad);
                        for (std::size_t ox = 0; ox < q.wo; ++ox) {
                            const long ix = static_cast<long>(ox * q.stride + kx) - static_cast<long>(q.pad);
                            bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(q.h) && ix < static_cast<long>(q.w);
                            dst[oy * q.wo + ox] = inside ? plane[iy * static_cast<long>(q.w) + ix] : 0.0;
                        }
                    }
                }
            }
    }
}

inline void col2im(const double* col, const ConvGeometry& q, std::size_t g, double* dx) {
    const std::size_t P = q.ho * q.wo, cols = q.cols();
    for (std::size_t ci = 0; ci < q.cg(); ++ci) {
        const std::size_t chan = g * q.cg() + ci;
        for (std::size_t ky = 0; ky < q.k; ++ky)
            for (std::size_t kx = 0; kx < q.k; ++kx) {
                const double* row = col + ((ci * q.k + ky) * q.k + kx) * cols;
                for (std::size_t s = 0; s < q.n; ++s) {
                    double* plane = dx + (s * q.c + chan) * q.h * q.w;
                    const double* src = row + s * P;
                    for (std::size_t oy = 0; oy < q.ho; ++oy) {
                        const long iy = static_cast<long>(oy * q.stride + ky) - static_cast<long>(q.pad);
                        if (iy < 0 || iy >= static_cast<long>(q.h)) continue;
                        for (std::size_t ox = 0; ox < q.wo; ++ox) {
                            const long ix = static_cast<long>(ox * q.stride + kx) - static_cast<long>(q.pad);
                            if (ix < 0 || ix >= static_cast<long>(q.w)) continue;
                            plane[iy * static_cast<long>(q.w) + ix] += src[oy * q.wo + ox];
                        }
                    }
                }
            }
    }
}

}  // namespace detail

/// 2-D convolution. x (N, C, H, W), weight (O, C/groups, k, k), bias (O).
inline Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad, std::size_t groups = 1) {
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(2) != wv.dim(3) || groups == 0 || xv.dim(1) % groups != 0 ||
        wv.dim(0) % groups != 0 || wv.dim(1) * groups != xv.dim(1) || bias.value().numel() != wv.dim(0))
        throw InvalidInput("conv2d: input " + shape_str(xv.shape()) + " weight " + shape_str(wv.shape()) +
                           " groups " + std::to_string(groups));
    ConvGeometry q{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), stride, pad, groups, 0, 0};
    if (q.h + 2 * pad < q.k || q.w + 2 * pad < q.k) throw InvalidInput("conv2d: kernel larger than padded input");
    q.ho = (q.h + 2 * pad - q.k) / stride + 1;
    q.wo = (q.w + 2 * pad - q.k) / stride + 1;

    const std::size_t P = q.ho * q.wo, rows = q.rows(), cols = q.cols(), og = q.og();
    Tensor out({q.n, q.o, q.ho, q.wo});
    std::vector<double> col(rows * cols);
    RowMat prod(og, cols);
    for (std::size_t g = 0; g < groups; ++g) {
        detail::im2col(xv.data(), q, g, col.data());
        prod.noalias() = CMapMat(wv.data() + g * og * rows, og, rows) * CMapMat(col.data(), rows, cols);
        for (std::size_t oc = 0; oc < og; ++oc) {
            const std::size_t chan = g * og + oc;
            const double b = bias.value()[chan];
            for (std::size_t s = 0; s < q.n; ++s) {
                double* dst = out.data() + (s * q.o + chan) * P;
                const double* src = prod.data() + oc * cols + s * P;
                for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
            }
        }
    }
    return t.op(std::move(out), {x, weight, bias}, [&t, x, weight, bias, q](const Tensor& gout) {
        const std::size_t P = q.ho * q.wo, rows = q.rows(), cols = q.cols(), og = q.og();
        std::vector<double> col(rows * cols);
        RowMat G(og, cols);
        RowMat dcol;
        for (std::size_t g = 0; g < q.groups; ++g) {
            for (std::size_t oc = 0; oc < og; ++oc) {
                const std::size_t chan = g * og + oc;
                for (std::size_t s = 0; s < q.n; ++s) {
                    const double* src = gout.data() + (s * q.o + chan) * P;
                    std::copy(src, src + P, G.data() + oc * cols + s * P);
                }
            }
            if (t.needs_grad(bias)) {
                auto& db = t.grad(bias).vec();
                for (std::size_t oc = 0; oc < og; ++oc) db[g * og + oc] += G.row(static_cast<Eigen::Index>(oc)).sum();
            }
            if (t.needs_grad(weight)) {
                detail::im2col(x.value().data(), q, g, col.data());
                MapMat(t.grad(weight).data() + g * og * rows, og, rows).noalias() +=
                    G * CMapMat(col.data(), rows, cols).transpose();
            }
            if (t.needs_grad(x)) {
                dcol.noalias() = CMapMat(weight.value().data() + g * og * rows, og, rows).transpose() * G;
                detail::col2im(dcol.data(), q, g, t.grad(x).data());
            }
        }
    });
}

/// Nearest-neighbour 2x upsampling of (N, C, H, W).
inline Var upsample2x(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    if (x.rank() != 4) throw InvalidInput("upsample2x: expects rank 4, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xx = 0; xx < 2 * w; ++xx)
                out[(p * 2 * h + y) * 2 * w + xx] = x[(p * h + y / 2) * w + xx / 2];
    return t.op(std::move(out), {a}, [&t, a, n, c, h, w](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        auto& dst = t.grad(a).vec();
        for (std::size_t p = 0; p < n * c; ++p)
            for (std::size_t y = 0; y < 2 * h; ++y)
                for (std::size_t xx = 0; xx < 2 * w; ++xx)
                    dst[(p * h + y / 2) * w + xx / 2] += g[(p * 2 * h + y) * 2 * w + xx];
    });
}

/// (N, C, H, W) -> (N, C).
inline Var global_avg_pool(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    if (x.rank() != 4) throw InvalidInput("global_avg_pool: expects rank 4, got " + shape_str(x.shape()));
    const std::size_t nc = x.dim(0) * x.dim(1), P = x.dim(2) * x.dim(3);
    Tensor out({x.dim(0), x.dim(1)});
    for (std::size_t p = 0; p < nc; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i) s += x[p * P + i];
        out[p] = s / static_cast<double>(P);
    }
    return t.op(std::move(out), {a}, [&t, a, nc, P](const Tensor& g) {
        if (!t.needs_grad(a)) return;
        auto& dst = t.grad(a).vec();
        for (std::size_t p = 0; p < nc; ++p)
            for (std::size_t i = 0; i < P; ++i) dst[p * P + i] += g[p] / static_cast<double>(P);
    });
}

/// Concatenates (N, C1, H, W) and (N, C2, H, W) along channels.
inline Var concat_channels(Var a, Var b) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rank() != 4 || y.rank() != 4 || x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3))
        throw InvalidInput("concat_channels: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    const std::size_t n = x.dim(0), ca = x.dim(1) * x.dim(2) * x.dim(3), cb = y.dim(1) * y.dim(2) * y.dim(3);
    Tensor out({n, x.dim(1) + y.dim(1), x.dim(2), x.dim(3)});
    for (std::size_t s = 0; s < n; ++s) {
        std::copy_n(x.data() + s * ca, ca, out.data() + s * (ca + cb));
        std::copy_n(y.data() + s * cb, cb, out.data() + s * (ca + cb) + ca);
    }
    return t.op(std::move(out), {a, b}, [&t, a, b, n, ca, cb](const Tensor& g) {
        for (std::size_t s = 0; s < n; ++s) {
            if (t.needs_grad(a)) {
                double* d = t.grad(a).data() + s * ca;
                for (std::size_t i = 0; i < ca; ++i) d[i] += g[s * (ca + cb) + i];
            }
            if (t.needs_grad(b)) {
                double* d = t.grad(b).data() + s * cb;
                for (std::size_t i = 0; i < cb; ++i) d[i] += g[s * (ca + cb) + ca + i];
            }
        }
    });
}

}  // namespace ag
}  // namespace ifom
