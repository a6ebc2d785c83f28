#pragma once

// Joint De-Folding + De-Mixing pretraining of the extractor, followed by
// supervised fine-tuning of the detector.
//
// One pretraining step performs three updates in order:
//   1. G and D minimize L_r + L_g(generator side) on folded inputs,
//   2. F maximizes L_g, then is clipped to [-c, c],
//   3. D minimizes L_t on mixed inputs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ifom/checkpoint.hpp"
#include "ifom/datagen.hpp"
#include "ifom/losses.hpp"
#include "ifom/models.hpp"
#include "ifom/optim.hpp"
#include "ifom/transforms.hpp"

namespace ifom {

struct PretrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    std::size_t batch_size = 16;
    std::size_t epochs = 10;
    double critic_clip = kDefaultCriticClip;
    NoiseSpec noise{};
    std::uint64_t seed = 0;
    Modality modality = Modality::fingerprint;
    bool squared_reconstruction = false;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw InvalidInput("pretrain learning_rate must be non-negative");
        if (batch_size < 2) throw InvalidInput("pretrain batch_size must be at least 2");
        if (!(critic_clip > 0.0)) throw InvalidInput("critic_clip must be positive");
        if (noise.std < 0.0) throw InvalidInput("noise std must be non-negative");
    }

    OptimizerConfig optimizer_config() const {
        OptimizerConfig o;
        o.kind = optimizer;
        o.learning_rate = learning_rate;
        o.beta1 = beta1;
        o.beta2 = beta2;
        o.weight_decay = weight_decay;
        return o;
    }

    // Published settings for the full-size backbones.
    static PretrainConfig paper_fingerprint() {
        PretrainConfig c;
        c.learning_rate = 1e-6;
        c.weight_decay = 5e-4;
        c.batch_size = 12;
        return c;
    }
    static PretrainConfig paper_face() {
        PretrainConfig c;
        c.learning_rate = 1e-4;
        c.weight_decay = 5e-4;
        c.batch_size = 32;
        c.modality = Modality::face;
        return c;
    }
};

struct FinetuneConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw InvalidInput("finetune learning_rate must be non-negative");
        if (batch_size < 1) throw InvalidInput("finetune batch_size must be positive");
    }

    OptimizerConfig optimizer_config() const {
        OptimizerConfig o;
        o.kind = optimizer;
        o.learning_rate = learning_rate;
        o.momentum = momentum;
        o.weight_decay = weight_decay;
        return o;
    }

    static FinetuneConfig paper_fingerprint() {
        FinetuneConfig c;
        c.learning_rate = 1e-4;
        c.weight_decay = 5e-4;
        c.batch_size = 128;
        return c;
    }
    static FinetuneConfig paper_face() {
        FinetuneConfig c;
        c.optimizer = OptimizerKind::sgd;
        c.learning_rate = 1e-2;
        c.momentum = 0.9;
        c.weight_decay = 5e-4;
        return c;
    }
};

struct HistoryRecord {
    std::string phase;  // "pretrain" or "finetune"
    std::size_t epoch = 0;
    std::size_t step = 0;  // global, monotone within a phase
    std::map<std::string, double> losses;
};

struct TrainingHistory {
    std::vector<HistoryRecord> records;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
};

/// Everything pretraining mutates; checkpointed as a unit so a resumed run
/// continues bit-identically.
struct PretrainState {
    ModelBundle bundle;
    Optimizer opt_extractor, opt_generator, opt_critic;
    std::size_t epochs_done = 0;
    std::size_t steps_done = 0;

    static PretrainState create(const BackboneConfig& backbone, const PretrainConfig& cfg) {
        cfg.validate();
        PretrainState s;
        s.bundle = ModelBundle::create(backbone, cfg.seed, cfg.critic_clip);
        s.opt_extractor = Optimizer(cfg.optimizer_config());
        s.opt_generator = Optimizer(cfg.optimizer_config());
        s.opt_critic = Optimizer(cfg.optimizer_config());
        return s;
    }
};

namespace detail {

inline void zero_critic(Critic& f) {
    zero_grads(f.trunk().params());
    zero_grads(f.head());
}

inline void step_critic(Optimizer& opt, Critic& f) {
    opt.step({{"trunk/", &f.trunk().params()}, {"head/", &f.head()}});
}

inline Tensor fold_batch(const Tensor& x, Modality modality, std::mt19937_64& rng) {
    Tensor out(x.shape());
    const std::size_t per = x.numel() / x.dim(0);
    const Shape img{x.dim(1), x.dim(2), x.dim(3)};
    for (std::size_t k = 0; k < x.dim(0); ++k) {
        Tensor px(img, std::vector<double>(x.data() + k * per, x.data() + (k + 1) * per));
        Tensor f = fold_pixels(px, sample_fold_spec(rng, modality));
        std::copy(f.data(), f.data() + per, out.data() + k * per);
    }
    return out;
}

}  // namespace detail

/// Random derangement of [0, n) (no fixed points); falls back to a shift
/// by one if rejection sampling does not find one quickly.
inline std::vector<std::size_t> pair_permutation(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    if (n < 2) return p;
    for (int attempt = 0; attempt < 32; ++attempt) {
        std::shuffle(p.begin(), p.end(), rng);
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) ok = p[i] != i;
        if (ok) return p;
    }
    for (std::size_t i = 0; i < n; ++i) p[i] = (i + 1) % n;
    return p;
}

inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
    const std::size_t per = x.numel() / x.dim(0);
    Shape s = x.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy(x.data() + idx[k] * per, x.data() + (idx[k] + 1) * per, out.data() + k * per);
    return out;
}

/// One joint pretraining step on aligned batches x_i, x_j of shape
/// (N, C, H, W). Never looks at labels.
inline HistoryRecord pretrain_step(PretrainState& st, const Tensor& x_i, const Tensor& x_j, const PretrainConfig& cfg,
                                   std::mt19937_64& rng) {
    if (x_i.rank() != 4 || x_i.shape() != x_j.shape())
        throw InvalidInput("pretrain_step: batches must share a (N, C, H, W) shape");
    if (x_i.dim(0) < 2) throw InvalidInput("pretrain_step: batch must hold at least 2 samples");
    Extractor& D = st.bundle.extractor;
    Generator& G = st.bundle.generator;
    Critic& F = st.bundle.critic;
    const std::size_t n = x_i.dim(0);
    st.opt_extractor.set_learning_rate(cfg.learning_rate);
    st.opt_generator.set_learning_rate(cfg.learning_rate);
    st.opt_critic.set_learning_rate(cfg.learning_rate);
    HistoryRecord rec;
    rec.phase = "pretrain";

    // De-Folding: both halves of the pair are folded and reconstructed.
    const Tensor real = concat_rows(x_i, x_j);
    const Tensor folded = detail::fold_batch(real, cfg.modality, rng);
    Tensor fake_value;
    {
        zero_grads(D.params());
        zero_grads(G.params());
        Tape t;
        t.freeze(F.trunk().params());
        t.freeze(F.head());
        ExtractorOutput enc = D.forward(t, t.constant(folded));
        Var y = G.forward(t, enc.z, enc.skips);
        Var lr = loss_reconstruction(y, t.constant(real), cfg.squared_reconstruction);
        // Generator side of L_g: the real-image term carries no G/D gradient.
        Var g_side = ag::scale(ag::mean(F.logits(t, y)), -1.0);
        t.backward(ag::add(lr, g_side));
        st.opt_extractor.step(D.params());
        st.opt_generator.step(G.params());
        rec.losses["L_r"] = lr.value()[0];
        rec.losses["L_g"] = g_side.value()[0];
        fake_value = y.value();
    }

    // Critic update on the detached reconstructions.
    {
        detail::zero_critic(F);
        Tape t;
        AdversarialTerms adv = loss_adversarial(F.logits(t, t.constant(real)), F.logits(t, t.constant(fake_value)));
        t.backward(adv.critic);
        detail::step_critic(st.opt_critic, F);
        F.clip(cfg.critic_clip);
        rec.losses["critic_gap"] = adv.gap;
    }

    // De-Mixing with one epsilon per pair, shared by image and embedding.
    {
        std::vector<double> eps(n);
        for (double& e : eps) e = sample_mix_spec(rng).epsilon;
        Tensor mixed(x_i.shape());
        const std::size_t per = x_i.numel() / n;
        for (std::size_t i = 0; i < x_i.numel(); ++i)
            mixed[i] = eps[i / per] * x_i[i] + (1.0 - eps[i / per]) * x_j[i];
        zero_grads(D.params());
        Tape t;
        Var zi = D.forward(t, t.constant(x_i)).z;
        Var zj = D.forward(t, t.constant(x_j)).z;
        Var zij = D.forward(t, t.constant(mixed)).z;
        Var lt = loss_topological(zij, zi, zj, eps, cfg.noise, rng);
        t.backward(lt);
        st.opt_extractor.step(D.params());
        rec.losses["L_t"] = lt.value()[0];
    }

    const LossValue total = combined_pretrain_loss(
        {{"reconstruction", rec.losses["L_r"]}, {"adversarial", rec.losses["L_g"]}, {"topological", rec.losses["L_t"]}});
    rec.losses["total"] = total.value;
    return rec;
}

/// Per-epoch stream: depends only on (seed, epoch) so a resumed run draws
/// the same numbers as an uninterrupted one.
inline std::mt19937_64 epoch_rng(std::uint64_t seed, std::uint64_t phase, std::size_t epoch) {
    std::seed_seq ss{seed, phase, static_cast<std::uint64_t>(epoch)};
    return std::mt19937_64(ss);
}

// ---------------------------------------------------------------------------
// Pretraining checkpoints

inline nlohmann::json to_json(const PretrainConfig& c) {
    return {{"optimizer", to_string(c.optimizer)},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"critic_clip", c.critic_clip},
            {"noise_std", c.noise.std},
            {"seed", c.seed},
            {"modality", to_string(c.modality)},
            {"squared_reconstruction", c.squared_reconstruction}};
}

inline nlohmann::json to_json(const FinetuneConfig& c) {
    return {{"optimizer", to_string(c.optimizer)}, {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},              {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},          {"epochs", c.epochs},
            {"seed", c.seed}};
}

inline void save_pretrain_state(const std::string& path, const PretrainState& st, const PretrainConfig& cfg) {
    Archive a;
    a.meta["kind"] = "pretrain";
    a.meta["backbone"] = to_json(st.bundle.extractor.config());
    a.meta["seed"] = cfg.seed;
    a.meta["config"] = to_json(cfg);
    a.meta["epochs_done"] = st.epochs_done;
    a.meta["steps_done"] = st.steps_done;
    put_params(a, "D/", st.bundle.extractor.params());
    put_params(a, "G/", st.bundle.generator.params());
    put_scalar_head(a, "F/", st.bundle.critic);
    put_optimizer(a, "optD/", st.opt_extractor);
    put_optimizer(a, "optG/", st.opt_generator);
    put_optimizer(a, "optF/", st.opt_critic);
    save_archive(path, a);
}

inline PretrainState load_pretrain_state(const std::string& path, const BackboneConfig& backbone,
                                         const PretrainConfig& cfg) {
    Archive a = load_archive(path);
    if (a.meta.value("kind", "") != "pretrain") throw Incompatible(path + " is not a pretraining checkpoint");
    check_backbone(a, backbone);
    PretrainState st = PretrainState::create(backbone, cfg);
    get_params(a, "D/", st.bundle.extractor.params());
    get_params(a, "G/", st.bundle.generator.params());
    get_scalar_head(a, "F/", st.bundle.critic);
    get_optimizer(a, "optD/", st.opt_extractor);
    get_optimizer(a, "optG/", st.opt_generator);
    get_optimizer(a, "optF/", st.opt_critic);
    st.epochs_done = a.meta.at("epochs_done").get<std::size_t>();
    st.steps_done = a.meta.at("steps_done").get<std::size_t>();
    return st;
}

/// Extractor-only view of a pretraining checkpoint (what fine-tuning needs).
inline Extractor load_extractor(const std::string& path) {
    Archive a = load_archive(path);
    if (a.meta.value("kind", "") != "pretrain") throw Incompatible(path + " is not a pretraining checkpoint");
    const BackboneConfig cfg = backbone_from_json(a.meta.at("backbone"));
    std::mt19937_64 rng(0);
    Extractor d(cfg, rng);
    get_params(a, "D/", d.params());
    return d;
}

struct PretrainOptions {
    std::filesystem::path checkpoint_dir;  // empty: no per-epoch checkpoints
    std::function<void(const HistoryRecord&)> on_step;
};

inline std::string epoch_checkpoint_name(std::size_t epoch) {
    return "pretrain_epoch_" + std::to_string(epoch) + ".ckpt";
}

/// Runs epochs [st.epochs_done, cfg.epochs). Each epoch visits a fresh
/// shuffle in floor(n / batch_size) full batches; each batch is paired with
/// a derangement of itself.
inline TrainingHistory pretrain(PretrainState& st, const Dataset& data, const PretrainConfig& cfg,
                                const PretrainOptions& opts = {}) {
    cfg.validate();
    if (data.size() == 0) throw InvalidInput("pretrain: empty dataset");
    const std::size_t steps_per_epoch = data.size() / cfg.batch_size;
    if (steps_per_epoch == 0)
        throw InvalidInput("pretrain: dataset of " + std::to_string(data.size()) + " is smaller than batch_size");
    const auto started = std::chrono::steady_clock::now();
    TrainingHistory h;
    h.seed = cfg.seed;
    for (std::size_t epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
        auto rng = epoch_rng(cfg.seed, 100, epoch);
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<Tensor> batch;
            for (std::size_t k = 0; k < cfg.batch_size; ++k) batch.push_back(data.pixels(order[s * cfg.batch_size + k]));
            const Tensor x_i = stack(batch);
            const auto perm = pair_permutation(cfg.batch_size, rng);
            const Tensor x_j = gather_rows(x_i, perm);
            HistoryRecord rec = pretrain_step(st, x_i, x_j, cfg, rng);
            rec.epoch = epoch;
            rec.step = st.steps_done++;
            if (opts.on_step) opts.on_step(rec);
            h.records.push_back(std::move(rec));
        }
        st.epochs_done = epoch + 1;
        if (!opts.checkpoint_dir.empty())
            save_pretrain_state((opts.checkpoint_dir / epoch_checkpoint_name(epoch + 1)).string(), st, cfg);
    }
    h.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return h;
}

struct FinetuneResult {
    Detector detector;
    TrainingHistory history;
};

/// Builds H from D and minimizes the cross entropy over the labeled set.
inline FinetuneResult finetune(const Extractor& d, const Dataset& data, const FinetuneConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw InvalidInput("finetune: empty dataset");
    std::vector<double> targets(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Label l = data.label(i);
        if (l == Label::unlabeled) throw InvalidInput("finetune: sample '" + data.id(i) + "' is unlabeled");
        targets[i] = label_target(l);
    }
    const auto started = std::chrono::steady_clock::now();
    FinetuneResult r{init_detector_from_extractor(d, cfg.seed), {}};
    r.history.seed = cfg.seed;
    Detector& H = r.detector;
    Optimizer opt(cfg.optimizer_config());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = epoch_rng(cfg.seed, 200, epoch);
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < data.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(data.size(), b + cfg.batch_size);
            std::vector<Tensor> batch;
            std::vector<double> u;
            for (std::size_t k = b; k < e; ++k) {
                batch.push_back(data.pixels(order[k]));
                u.push_back(targets[order[k]]);
            }
            zero_grads(H.trunk().params());
            zero_grads(H.head());
            Tape t;
            Var v = ag::sigmoid(H.logits(t, t.constant(stack(batch))));
            Var lc = loss_crossentropy(v, u);
            t.backward(lc);
            opt.step({{"trunk/", &H.trunk().params()}, {"head/", &H.head()}});
            r.history.records.push_back({"finetune", epoch, step++, {{"L_c", lc.value()[0]}}});
        }
    }
    r.history.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return r;
}

/// Spoofness scores for every sample of a dataset, in dataset order.
inline std::vector<double> score_dataset(Detector& h, const Dataset& data, std::size_t batch_size = 128) {
    std::vector<double> out;
    out.reserve(data.size());
    for (std::size_t b = 0; b < data.size(); b += batch_size) {
        std::vector<Tensor> batch;
        for (std::size_t k = b; k < std::min(data.size(), b + batch_size); ++k) batch.push_back(data.pixels(k));
        Tape t(false);
        const Tensor s = ag::sigmoid(h.logits(t, t.constant(stack(batch)))).value();
        out.insert(out.end(), s.vec().begin(), s.vec().end());
    }
    return out;
}

/// Newline-delimited JSON, one record per step.
inline void write_history(const std::string& path, const TrainingHistory& h) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history " + path);
    for (const auto& r : h.records) {
        nlohmann::ordered_json j;
        j["phase"] = r.phase;
        j["epoch"] = r.epoch;
        j["step"] = r.step;
        j["losses"] = r.losses;
        out << j.dump() << '\n';
    }
}

inline TrainingHistory read_history(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read history " + path);
    TrainingHistory h;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        h.records.push_back({j.at("phase").get<std::string>(), j.at("epoch").get<std::size_t>(),
                             j.at("step").get<std::size_t>(), j.at("losses").get<std::map<std::string, double>>()});
    }
    return h;
}

}  // namespace ifom
