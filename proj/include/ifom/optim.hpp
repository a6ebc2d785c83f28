#pragma once

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "ifom/autograd.hpp"
#include "ifom/models.hpp"
#include "ifom/error.hpp"

namespace ifom {

enum class OptimizerKind { adam, sgd };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw InvalidInput("unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double momentum = 0.9;  // sgd only
    double weight_decay = 0.0;
    double eps = 1e-8;
};

/// Adam or SGD with momentum. Weight decay is added to the gradient (L2).
/// State is keyed by parameter name so it can be checkpointed.
class Optimizer {
public:
    Optimizer() = default;
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

    /// One update over every group. Group prefixes keep the state of
    /// several parameter maps apart.
    void step(std::initializer_list<std::pair<std::string, ParamMap*>> groups) {
        ++steps_;
        for (const auto& [prefix, pm] : groups) update(*pm, prefix);
    }

    void step(ParamMap& params) { step({{"", &params}}); }

    std::size_t steps() const { return steps_; }

    // Checkpointing access.
    std::map<std::string, Tensor>& first_moments() { return m_; }
    std::map<std::string, Tensor>& second_moments() { return v_; }
    const std::map<std::string, Tensor>& first_moments() const { return m_; }
    const std::map<std::string, Tensor>& second_moments() const { return v_; }
    void set_steps(std::size_t s) { steps_ = s; }

private:
    void update(ParamMap& params, const std::string& prefix) {
        const double lr = cfg_.learning_rate;
        for (auto& [name, p] : params) {
            const std::string key = prefix + name;
            auto& g = p.grad.vec();
            auto& w = p.value.vec();
            if (cfg_.kind == OptimizerKind::adam) {
                Tensor& m = slot(m_, key, p.value);
                Tensor& v = slot(v_, key, p.value);
                const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
                const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double gi = g[i] + cfg_.weight_decay * w[i];
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
                    w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                }
            } else {
                Tensor& buf = slot(m_, key, p.value);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double gi = g[i] + cfg_.weight_decay * w[i];
                    buf[i] = cfg_.momentum * buf[i] + gi;
                    w[i] -= lr * buf[i];
                }
            }
        }
    }

    static Tensor& slot(std::map<std::string, Tensor>& store, const std::string& key, const Tensor& like) {
        auto it = store.find(key);
        if (it == store.end()) it = store.emplace(key, Tensor::zeros_like(like)).first;
        return it->second;
    }

    OptimizerConfig cfg_;
    std::size_t steps_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

inline void zero_grads(ParamMap& params) {
    for (auto& [_, p] : params) p.zero_grad();
}

}  // namespace ifom
