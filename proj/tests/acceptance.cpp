// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ifom/ifom.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/pipeline.hpp"
#include "support/transform_properties.hpp"

using namespace ifom;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

const nlohmann::json& golden() {
    static const nlohmann::json g = [] {
        std::ifstream in(std::string(IFOM_GOLDEN_DIR) + "/calibration.json");
        return nlohmann::json::parse(in);
    }();
    return g;
}

double budget(const char* key) { return golden().at("runtime_budget_seconds").at(key).get<double>(); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

template <typename Fn>
double timed(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict metric_oracle() {
    std::size_t mismatches = 0;
    double worst = 0;
    const double secs = timed([&] {
        std::mt19937_64 rng(20240101);
        for (int k = 0; k < 1000; ++k) {
            const ScoreSet s = oracle::random_score_set(rng, 200);
            const double d[] = {std::abs(eer(s) - oracle::eer(s)), std::abs(auc(s) - oracle::auc_sweep(s)),
                                std::abs(tdr_at_fdr(s, 0.01) - oracle::tdr_at_fdr(s, 0.01)),
                                std::abs(ace(s, 0.5) - oracle::ace(s, 0.5))};
            bool bad = auc(s) != oracle::auc_pairs(s);
            for (double x : d) {
                worst = std::max(worst, x);
                bad = bad || x > 1e-12;
            }
            mismatches += bad;
        }
    });
    const bool fast = secs < budget("metric_oracle");
    return {mismatches == 0 && fast, "1000 sets, mismatches " + std::to_string(mismatches) + ", max |diff| " +
                                         fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

Verdict hand_instance() {
    const ScoreSet s{{0.9, 0.8, 0.4}, {0.1, 0.2, 0.6}};
    const double e = eer(s), a = auc(s), c = ace(s, 0.5);
    const bool ok = std::abs(e - 1.0 / 3.0) < 1e-12 && std::abs(a - 8.0 / 9.0) < 1e-12 && std::abs(c - 1.0 / 3.0) < 1e-12;
    return {ok, "EER " + fmt(e, 17) + ", AUC " + fmt(a, 17) + ", ACE " + fmt(c, 17)};
}

Verdict transform_properties() {
    std::vector<std::pair<std::string, props::Outcome>> runs;
    const double secs = timed([&] {
        runs.emplace_back("mix_endpoints", props::mix_endpoints(500, 1));
        runs.emplace_back("mix_self", props::mix_self(500, 2));
        runs.emplace_back("mix_symmetry", props::mix_symmetry(500, 3));
        runs.emplace_back("fold_shape_range_determinism", props::fold_shape_range_determinism(500, 4));
        runs.emplace_back("fold_symmetric_equality", props::fold_symmetric_equality(500, 5));
    });
    bool ok = secs < budget("transform_properties");
    std::string detail;
    for (const auto& [name, o] : runs) {
        ok = ok && o.ok() && o.cases == 500;
        if (!o.ok()) detail += name + " failed (" + o.first_failure + "); ";
    }
    return {ok, detail + "5 properties x 500 cases, " + fmt(secs, 3) + " s"};
}

Verdict gradient_check() {
    double worst = 0;
    std::size_t checked = 0;
    bool counts_ok = true;
    const double secs = timed([&] {
        for (std::uint64_t seed : {1, 2, 3}) {
            gradcheck::Scenario s(seed);
            std::mt19937_64 rng(seed * 31);
            for (const auto& r :
                 {gradcheck::check([&](Tape& t) { return s.reconstruction(t); }, s.dg(), 20, rng),
                  gradcheck::check([&](Tape& t) { return s.adversarial(t); }, s.dgf(), 20, rng),
                  gradcheck::check([&](Tape& t) { return s.topological(t); }, s.d(), 20, rng),
                  gradcheck::check([&](Tape& t) { return s.crossentropy(t); }, s.h(), 20, rng)}) {
                worst = std::max(worst, r.max_rel());
                checked += r.entries.size();
                counts_ok = counts_ok && r.entries.size() == 20;
            }
        }
    });
    const bool ok = counts_ok && worst < 1e-4 && secs < budget("gradient_check");
    return {ok, "4 losses x 3 seeds x 20 params (" + std::to_string(checked) + " checked), max rel err " + fmt(worst) +
                    ", " + fmt(secs, 3) + " s"};
}

Verdict collapse_guard() {
    // One embedding from the tiny extractor stands in for z_i, z_j and z_ij.
    auto b = ModelBundle::create(BackboneConfig::tiny(), 0);
    SyntheticSpec spec;
    const EmbeddingVector z = embed(b.extractor, generate_sample(spec, Label::bona_fide, 0));
    const std::size_t d = z.values.size();
    const Tensor zt({1, d}, z.values);
    std::mt19937_64 rng(99);
    NoiseSpec noise;
    double sum = 0;
    const int draws = 10000;
    for (int k = 0; k < draws; ++k) {
        Tape t(false);
        const std::vector<double> eps{sample_mix_spec(rng).epsilon};
        sum += loss_topological(t.constant(zt), t.constant(zt), t.constant(zt), eps, noise, rng).value()[0];
    }
    const double n = static_cast<double>(d);
    const double expected = 0.1 * std::sqrt(2.0) * std::tgamma((n + 1) / 2) / std::tgamma(n / 2);
    const double measured = sum / draws, rel = std::abs(measured - expected) / expected;
    return {rel < 0.02, "d=" + std::to_string(d) + ", measured " + fmt(measured, 6) + ", chi mean " + fmt(expected, 6) +
                            ", rel diff " + fmt(rel, 3)};
}

Verdict determinism_resume() {
    const InMemoryDataset data = pipeline::fingerprint_data(16, 7, {"latex-analog", "gelatine-analog"});
    PretrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 11;
    const auto dir = pipeline::temp_dir("acceptance_resume");
    bool same = false, resumed_same = false;
    const double secs = timed([&] {
        PretrainState a = PretrainState::create(BackboneConfig::tiny(), cfg);
        PretrainOptions opts;
        opts.checkpoint_dir = dir;
        pretrain(a, data, cfg, opts);
        PretrainState b = PretrainState::create(BackboneConfig::tiny(), cfg);
        pretrain(b, data, cfg);
        same = pipeline::bit_identical(pipeline::flatten_state(a), pipeline::flatten_state(b));
        PretrainState c = load_pretrain_state((dir / epoch_checkpoint_name(1)).string(), BackboneConfig::tiny(), cfg);
        pretrain(c, data, cfg);
        resumed_same = pipeline::bit_identical(pipeline::flatten_state(a), pipeline::flatten_state(c));
    });
    return {same && resumed_same && secs < budget("determinism_resume"),
            std::string("repeat ") + (same ? "identical" : "DIFFERS") + ", resume from epoch 1 " +
                (resumed_same ? "identical" : "DIFFERS") + ", " + fmt(secs, 3) + " s"};
}

Verdict label_blindness() {
    const InMemoryDataset data = pipeline::fingerprint_data(16, 8, {"latex-analog", "gelatine-analog"});
    LabelCountingDataset counted(data);
    PretrainConfig cfg;
    cfg.epochs = 2;
    PretrainState st = PretrainState::create(BackboneConfig::tiny(), cfg);
    const TrainingHistory h = pretrain(st, counted, cfg);
    const std::size_t reads = counted.label_reads();
    return {reads == 0 && !h.records.empty(),
            std::to_string(h.records.size()) + " pretraining steps, label reads " + std::to_string(reads)};
}

struct DeskData {
    DatasetManifest full;
    ProtocolSplit split;
};

DeskData desk_data() {
    const auto& g = golden().at("desk_experiment");
    SyntheticSpec spec;
    spec.n_per_class = g.at("n_per_class");
    std::vector<std::string> regimes = g.at("regimes");
    std::set<std::string> holdout = g.at("holdout");
    DeskData d;
    d.full = synthetic_manifest(spec, regimes);
    d.split = make_protocol_split(d.full, Protocol::cross_material, holdout);
    return d;
}

Verdict desk_experiment() {
    const auto& g = golden().at("desk_experiment");
    const DeskData dd = desk_data();
    const InMemoryDataset train = load_dataset(dd.split.train, {}, 1), test = load_dataset(dd.split.test, {}, 1);
    const std::size_t seeds = g.at("seeds");
    const double min_drop = g.at("min_reconstruction_reduction");
    double sum_ifom = 0, sum_scratch = 0, worst_drop = 1;
    std::string per_seed;
    const double secs = timed([&] {
        for (std::size_t s = 0; s < seeds; ++s) {
            const pipeline::DeskSeed r =
                pipeline::desk_seed(train, test, s, g.at("pretrain_epochs"), g.at("finetune_epochs"));
            sum_ifom += r.auc_ifom;
            sum_scratch += r.auc_scratch;
            const double drop = 1.0 - r.lr_last / r.lr_first;
            worst_drop = std::min(worst_drop, drop);
            per_seed += " [seed " + std::to_string(s) + ": " + fmt(r.auc_ifom) + " vs " + fmt(r.auc_scratch) + ", L_r " +
                        fmt(r.lr_first) + "->" + fmt(r.lr_last) + "]";
            std::printf("      seed %zu: AUC IF-OM %.4f scratch %.4f, L_r %.4f -> %.4f\n", s, r.auc_ifom, r.auc_scratch,
                        r.lr_first, r.lr_last);
            std::fflush(stdout);
        }
    });
    const double mi = sum_ifom / static_cast<double>(seeds), ms = sum_scratch / static_cast<double>(seeds);
    const bool ok = mi >= ms && worst_drop >= min_drop && secs < budget("desk_experiment");
    return {ok, std::to_string(dd.full.entries.size()) + " images, mean test AUC IF-OM " + fmt(mi) + " vs scratch " +
                    fmt(ms) + ", min L_r reduction " + fmt(100 * worst_drop, 3) + "%, " + fmt(secs, 4) + " s"};
}

Verdict protocol_soundness() {
    const auto& g = golden().at("desk_experiment");
    const DeskData dd = desk_data();
    const std::set<std::string> holdout = g.at("holdout");
    std::size_t leaked = 0, held_in_test = 0;
    for (const auto& e : dd.split.train.entries)
        leaked += e.label == Label::attack && holdout.count(e.meta.at("material"));
    for (const auto& e : dd.split.test.entries) held_in_test += e.label == Label::attack;
    std::multiset<std::string> full, parts;
    for (const auto& e : dd.full.entries) full.insert(e.id);
    for (const auto* m : {&dd.split.train, &dd.split.test})
        for (const auto& e : m->entries) parts.insert(e.id);
    std::set<std::string> train_ids, overlap;
    for (const auto& e : dd.split.train.entries) train_ids.insert(e.id);
    for (const auto& e : dd.split.test.entries)
        if (train_ids.count(e.id)) overlap.insert(e.id);
    const bool partition = full == parts && overlap.empty() && full.size() == std::set<std::string>(full.begin(), full.end()).size();
    return {leaked == 0 && partition && held_in_test > 0,
            "held-out attacks in train " + std::to_string(leaked) + ", in test " + std::to_string(held_in_test) +
                ", train " + std::to_string(dd.split.train.entries.size()) + " + test " +
                std::to_string(dd.split.test.entries.size()) + " = " + std::to_string(dd.full.entries.size()) +
                (partition ? ", exact partition" : ", NOT a partition")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"metric oracle suite", metric_oracle},
        {"hand-checkable metric instance", hand_instance},
        {"transform property suite", transform_properties},
        {"gradient correctness", gradient_check},
        {"collapse guard", collapse_guard},
        {"determinism and resume", determinism_resume},
        {"label blindness", label_blindness},
        {"desk-scale experiment", desk_experiment},
        {"protocol soundness", protocol_soundness},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!only.empty() && !only.count(k + 1)) continue;
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
