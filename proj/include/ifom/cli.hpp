#pragma once

// Command surface: datagen, pretrain, finetune, evaluate, metrics, inspect.
//
// Configuration is one JSON document. Values are layered as
//   built-in defaults < config file < environment < command-line flags
// and the merged document is written to <out>/resolved_config.json before
// any work starts. Wall-clock data goes to <out>/run_info.json only.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ifom/checkpoint.hpp"
#include "ifom/datagen.hpp"
#include "ifom/metrics.hpp"
#include "ifom/training.hpp"

namespace ifom::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Every accepted key with its default. A key absent here is rejected.
inline ojson default_config() {
    const PretrainConfig p;
    const FinetuneConfig f;
    const BackboneConfig b = BackboneConfig::tiny();
    return ojson{
        {"seed", 0},
        {"out", "ifom_out"},
        {"num_workers", 1},
        {"data",
         {{"modality", "fingerprint"},
          {"image_size", {32, 32}},
          {"n_per_class", 10},
          {"regimes", {"latex-analog", "gelatine-analog"}},
          {"noise_std", 0.03},
          {"regime_role", "material"},
          {"write_images", true},
          {"manifest", ""},
          {"train_manifest", ""},
          {"test_manifest", ""}}},
        {"protocol", {{"name", ""}, {"holdout", ojson::array()}, {"key", ""}, {"bonafide_test_fraction", 0.5}}},
        {"backbone",
         {{"arch_id", std::string(to_string(b.arch_id))},
          {"input_shape", nullptr},
          {"embedding_dim", b.embedding_dim},
          {"width_multiplier", b.width_multiplier},
          {"pooling", std::string(to_string(b.pooling))},
          {"generator_skips", b.generator_skips}}},
        {"pretrain",
         {{"optimizer", std::string(to_string(p.optimizer))},
          {"beta1", p.beta1},
          {"beta2", p.beta2},
          {"learning_rate", p.learning_rate},
          {"weight_decay", p.weight_decay},
          {"batch_size", p.batch_size},
          {"epochs", p.epochs},
          {"critic_clip", p.critic_clip},
          {"noise_std", p.noise.std},
          {"squared_reconstruction", p.squared_reconstruction},
          {"resume", ""}}},
        {"finetune",
         {{"optimizer", std::string(to_string(f.optimizer))},
          {"learning_rate", f.learning_rate},
          {"momentum", f.momentum},
          {"weight_decay", f.weight_decay},
          {"batch_size", f.batch_size},
          {"epochs", f.epochs},
          {"pretrained", ""},
          {"from_scratch", false}}},
        {"evaluate", {{"checkpoint", ""}}},
        {"metrics", {{"scores", ""}}},
        {"inspect", {{"checkpoint", ""}}},
    };
}

namespace detail {

inline bool same_kind(const ojson& def, const ojson& v) {
    if (def.is_null()) return true;
    if (def.is_number()) return v.is_number();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array();
    if (def.is_object()) return v.is_object();
    return false;
}

inline void merge_into(ojson& base, const ojson& overlay, const std::string& where) {
    if (!overlay.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : overlay.items()) {
        const std::string path = where.empty() ? k : where + "." + k;
        if (!base.contains(k)) throw ConfigError("unknown config key '" + path + "'");
        ojson& slot = base[k];
        if (!same_kind(slot, v)) throw ConfigError("config key '" + path + "' has the wrong type");
        if (slot.is_object())
            merge_into(slot, v, path);
        else
            slot = v;
    }
}

inline std::vector<std::string> strings(const ojson& j, const char* what) {
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw ConfigError(std::string(what) + " must be a list of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace detail

/// Flag values given on the command line; unset members leave lower
/// layers untouched.
struct Overrides {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> protocol;
    bool from_scratch = false;
};

/// Layers defaults, file, environment and flags into one document.
inline ojson resolve_config(const Overrides& flags) {
    ojson cfg = default_config();
    if (flags.config_path) {
        std::ifstream in(*flags.config_path);
        if (!in) throw ConfigError("cannot read config file " + *flags.config_path);
        ojson file;
        try {
            file = ojson::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + *flags.config_path + ": " + e.what());
        }
        detail::merge_into(cfg, file, "");
    }
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (v == nullptr || *v == '\0') return std::nullopt;
        return std::string(v);
    };
    try {
        if (auto v = env("IFOM_SEED")) cfg["seed"] = std::stoull(*v);
        if (auto v = env("IFOM_NUM_WORKERS")) cfg["num_workers"] = std::stoul(*v);
    } catch (const std::exception&) {
        throw ConfigError("IFOM_SEED and IFOM_NUM_WORKERS must be non-negative integers");
    }
    if (auto v = env("IFOM_OUT")) cfg["out"] = *v;
    if (auto v = env("IFOM_PROTOCOL")) cfg["protocol"]["name"] = *v;

    if (flags.seed) cfg["seed"] = *flags.seed;
    if (flags.out) cfg["out"] = *flags.out;
    if (flags.protocol) cfg["protocol"]["name"] = *flags.protocol;
    if (flags.from_scratch) cfg["finetune"]["from_scratch"] = true;

    // Derived values are written back so the echo is complete.
    const Modality m = parse_modality(cfg["data"]["modality"].get<std::string>());
    auto& shape = cfg["backbone"]["input_shape"];
    if (shape.is_null()) {
        const auto& sz = cfg["data"]["image_size"];
        if (sz.size() != 2) throw ConfigError("data.image_size must be [height, width]");
        shape = {m == Modality::face ? 3 : 1, sz[0], sz[1]};
    }
    return cfg;
}

/// Typed view of a resolved document.
struct RunConfig {
    ojson doc;
    std::uint64_t seed = 0;
    fs::path out;
    std::size_t num_workers = 1;
    SyntheticSpec synthetic;
    std::vector<std::string> regimes;
    RegimeRole regime_role = RegimeRole::material;
    bool write_images = true;
    std::string manifest, train_manifest, test_manifest;
    std::optional<Protocol> protocol;
    std::set<std::string> holdout;
    std::string split_key;
    double bonafide_test_fraction = 0.5;
    BackboneConfig backbone;
    PretrainConfig pretrain;
    std::string resume;
    FinetuneConfig finetune;
    std::string pretrained;
    bool from_scratch = false;
    std::string evaluate_checkpoint, metrics_scores, inspect_checkpoint;
};

inline RunConfig typed_config(const ojson& doc) {
    RunConfig c;
    c.doc = doc;
    try {
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.out = doc.at("out").get<std::string>();
        c.num_workers = std::max<std::size_t>(1, doc.at("num_workers").get<std::size_t>());

        const auto& d = doc.at("data");
        c.synthetic.modality = parse_modality(d.at("modality").get<std::string>());
        c.synthetic.height = d.at("image_size").at(0).get<std::size_t>();
        c.synthetic.width = d.at("image_size").at(1).get<std::size_t>();
        c.synthetic.n_per_class = d.at("n_per_class").get<std::size_t>();
        c.synthetic.noise_std = d.at("noise_std").get<double>();
        c.synthetic.seed = c.seed;
        c.regimes = detail::strings(d.at("regimes"), "data.regimes");
        if (c.regimes.empty()) throw ConfigError("data.regimes must not be empty");
        for (const auto& r : c.regimes) {
            SyntheticSpec s = c.synthetic;
            s.generator_regime = r;
            s.validate();
        }
        c.regime_role = parse_regime_role(d.at("regime_role").get<std::string>());
        c.write_images = d.at("write_images").get<bool>();
        c.manifest = d.at("manifest").get<std::string>();
        c.train_manifest = d.at("train_manifest").get<std::string>();
        c.test_manifest = d.at("test_manifest").get<std::string>();

        const auto& p = doc.at("protocol");
        const std::string pname = p.at("name").get<std::string>();
        if (!pname.empty()) c.protocol = parse_protocol(pname);
        for (const auto& h : detail::strings(p.at("holdout"), "protocol.holdout")) c.holdout.insert(h);
        c.split_key = p.at("key").get<std::string>();
        c.bonafide_test_fraction = p.at("bonafide_test_fraction").get<double>();

        const auto& b = doc.at("backbone");
        c.backbone.arch_id = parse_arch(b.at("arch_id").get<std::string>());
        c.backbone.input_shape = b.at("input_shape").get<std::array<std::size_t, 3>>();
        c.backbone.embedding_dim = b.at("embedding_dim").get<std::size_t>();
        c.backbone.width_multiplier = b.at("width_multiplier").get<double>();
        c.backbone.pooling = parse_pooling(b.at("pooling").get<std::string>());
        c.backbone.generator_skips = b.at("generator_skips").get<bool>();
        c.backbone.validate();

        const auto& pt = doc.at("pretrain");
        c.pretrain.optimizer = parse_optimizer(pt.at("optimizer").get<std::string>());
        c.pretrain.beta1 = pt.at("beta1").get<double>();
        c.pretrain.beta2 = pt.at("beta2").get<double>();
        c.pretrain.learning_rate = pt.at("learning_rate").get<double>();
        c.pretrain.weight_decay = pt.at("weight_decay").get<double>();
        c.pretrain.batch_size = pt.at("batch_size").get<std::size_t>();
        c.pretrain.epochs = pt.at("epochs").get<std::size_t>();
        c.pretrain.critic_clip = pt.at("critic_clip").get<double>();
        c.pretrain.noise.std = pt.at("noise_std").get<double>();
        c.pretrain.squared_reconstruction = pt.at("squared_reconstruction").get<bool>();
        c.pretrain.seed = c.seed;
        c.pretrain.modality = c.synthetic.modality;
        c.pretrain.validate();
        c.resume = pt.at("resume").get<std::string>();

        const auto& ft = doc.at("finetune");
        c.finetune.optimizer = parse_optimizer(ft.at("optimizer").get<std::string>());
        c.finetune.learning_rate = ft.at("learning_rate").get<double>();
        c.finetune.momentum = ft.at("momentum").get<double>();
        c.finetune.weight_decay = ft.at("weight_decay").get<double>();
        c.finetune.batch_size = ft.at("batch_size").get<std::size_t>();
        c.finetune.epochs = ft.at("epochs").get<std::size_t>();
        c.finetune.seed = c.seed;
        c.finetune.validate();
        c.pretrained = ft.at("pretrained").get<std::string>();
        c.from_scratch = ft.at("from_scratch").get<bool>();

        c.evaluate_checkpoint = doc.at("evaluate").at("checkpoint").get<std::string>();
        c.metrics_scores = doc.at("metrics").at("scores").get<std::string>();
        c.inspect_checkpoint = doc.at("inspect").at("checkpoint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    } catch (const InvalidSpec& e) {
        throw ConfigError(e.what());
    }
    if (c.out.empty()) throw ConfigError("out must not be empty");
    return c;
}

// ---------------------------------------------------------------------------
// Shared plumbing

inline void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << s;
}

inline std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Creates the output directory and echoes the resolved configuration.
inline void prepare_output(const RunConfig& c, const std::string& command, std::ostream& log) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw IoError("cannot create output directory " + c.out.string() + ": " + ec.message());
    write_text(c.out / "resolved_config.json", c.doc.dump(2) + "\n");
    log << "resolved config\n" << c.doc.dump(2) << '\n';
    ojson info{{"command", command}, {"version", kVersion}, {"started_utc", utc_now()}};
    write_text(c.out / "run_info.json", info.dump(2) + "\n");
}

inline void finish_run_info(const RunConfig& c, double seconds) {
    const fs::path p = c.out / "run_info.json";
    std::ifstream in(p);
    ojson info = in ? ojson::parse(in, nullptr, false) : ojson::object();
    if (info.is_discarded()) info = ojson::object();
    info["finished_utc"] = utc_now();
    info["wall_seconds"] = seconds;
    write_text(p, info.dump(2) + "\n");
}

struct LoadedSet {
    InMemoryDataset data;
    DatasetManifest manifest;
};

inline LoadedSet load_manifest_file(const std::string& path, std::size_t workers) {
    DatasetManifest m = read_manifest(path);
    InMemoryDataset d = load_dataset(m, fs::path(path).parent_path(), workers);
    return {std::move(d), std::move(m)};
}

/// Train or test data: an explicit manifest wins; otherwise the general
/// manifest, split by the configured protocol when one is set.
inline LoadedSet resolve_split(const RunConfig& c, bool train) {
    const std::string& explicit_path = train ? c.train_manifest : c.test_manifest;
    if (!explicit_path.empty()) return load_manifest_file(explicit_path, c.num_workers);
    if (c.manifest.empty())
        throw ConfigError(std::string("no data: set data.") + (train ? "train_manifest" : "test_manifest") +
                          " or data.manifest");
    DatasetManifest full = read_manifest(c.manifest);
    const fs::path base = fs::path(c.manifest).parent_path();
    if (c.protocol) {
        ProtocolSplit s = make_protocol_split(full, *c.protocol, c.holdout, c.split_key, c.bonafide_test_fraction);
        full = train ? std::move(s.train) : std::move(s.test);
    }
    InMemoryDataset d = load_dataset(full, base, c.num_workers);
    return {std::move(d), std::move(full)};
}

inline ScoreSet labeled_scores(const Dataset& data, const std::vector<double>& scores, std::vector<ScoreRow>* rows) {
    ScoreSet s;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Label l = data.label(i);
        if (l == Label::unlabeled) throw InvalidInput("evaluate: sample '" + data.id(i) + "' is unlabeled");
        (l == Label::attack ? s.attack_scores : s.bonafide_scores).push_back(scores[i]);
        if (rows) rows->push_back({data.id(i), std::string(to_string(l)), scores[i]});
    }
    return s;
}

inline std::string raster_extension(Modality m) { return m == Modality::face ? ".ppm" : ".pgm"; }

// ---------------------------------------------------------------------------
// Commands. Each assumes prepare_output has run.

inline int cmd_datagen(const RunConfig& c, std::ostream& log = std::cout) {
    DatasetManifest m = synthetic_manifest(c.synthetic, c.regimes, c.regime_role);
    if (c.write_images) {
        std::vector<std::string> errors(m.entries.size());
        const std::size_t workers = std::min(c.num_workers, std::max<std::size_t>(1, m.entries.size()));
        auto write_one = [&](std::size_t i) {
            ManifestEntry& e = m.entries[i];
            try {
                const fs::path rel = fs::path("images") / (e.id + raster_extension(m.modality));
                fs::create_directories((c.out / rel).parent_path());
                write_raster((c.out / rel).string(), generate_sample(*e.synthetic, e.label, e.index).pixels);
                e.path = rel.generic_string();
                e.synthetic.reset();
                e.index = 0;
            } catch (const std::exception& ex) {
                errors[i] = ex.what();
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < m.entries.size(); i += workers) write_one(i);
            });
        for (auto& t : pool) t.join();
        for (const auto& err : errors)
            if (!err.empty()) throw IoError(err);
    }
    write_manifest((c.out / "manifest.json").string(), m);

    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& e : m.entries) ++counts[{e.meta.at("regime"), std::string(to_string(e.label))}];
    for (const auto& [k, n] : counts) log << k.first << ' ' << k.second << ' ' << n << '\n';
    log << "total " << m.entries.size() << '\n';

    if (c.protocol) {
        ProtocolSplit s = make_protocol_split(m, *c.protocol, c.holdout, c.split_key, c.bonafide_test_fraction);
        write_manifest((c.out / "train_manifest.json").string(), s.train);
        write_manifest((c.out / "test_manifest.json").string(), s.test);
        log << "split " << to_string(*c.protocol) << " train " << s.train.entries.size() << " test "
            << s.test.entries.size() << '\n';
    }
    return kExitOk;
}

inline int cmd_pretrain(const RunConfig& c, std::ostream& log = std::cout) {
    LoadedSet train = resolve_split(c, true);
    if (train.data.modality() != c.pretrain.modality)
        throw Incompatible("manifest modality does not match data.modality");
    PretrainState st = c.resume.empty() ? PretrainState::create(c.backbone, c.pretrain)
                                        : load_pretrain_state(c.resume, c.backbone, c.pretrain);
    const fs::path ckdir = c.out / "checkpoints";
    fs::create_directories(ckdir);
    PretrainOptions opts;
    opts.checkpoint_dir = ckdir;
    TrainingHistory h = pretrain(st, train.data, c.pretrain, opts);
    save_pretrain_state((c.out / "pretrain.ckpt").string(), st, c.pretrain);
    write_history((c.out / "history.ndjson").string(), h);
    if (!h.records.empty())
        log << "pretrain steps " << h.records.size() << " L_r " << format_double(h.records.front().losses.at("L_r"))
            << " -> " << format_double(h.records.back().losses.at("L_r")) << '\n';
    else
        log << "pretrain: no steps run\n";
    return kExitOk;
}

/// The extractor fine-tuning starts from: pretrained weights, or a fresh
/// draw with the same initializer pretraining would have used.
inline Extractor finetune_start(const RunConfig& c) {
    if (c.from_scratch) return ModelBundle::create(c.backbone, c.seed, kDefaultCriticClip).extractor;
    if (c.pretrained.empty()) throw ConfigError("finetune.pretrained is required unless --from-scratch is given");
    Archive a = load_archive(c.pretrained);
    if (a.meta.value("kind", "") != "pretrain") throw Incompatible(c.pretrained + " is not a pretraining checkpoint");
    check_backbone(a, c.backbone);
    return load_extractor(c.pretrained);
}

inline int cmd_finetune(const RunConfig& c, std::ostream& log = std::cout) {
    Extractor d = finetune_start(c);
    LoadedSet train = resolve_split(c, true);
    FinetuneResult r = finetune(d, train.data, c.finetune);
    save_detector((c.out / "detector.ckpt").string(), r.detector,
                  {{"from_scratch", c.from_scratch}, {"seed", c.seed}, {"finetune", to_json(c.finetune)}});
    write_history((c.out / "history.ndjson").string(), r.history);
    if (!r.history.records.empty())
        log << "finetune steps " << r.history.records.size() << " L_c "
            << format_double(r.history.records.front().losses.at("L_c")) << " -> "
            << format_double(r.history.records.back().losses.at("L_c")) << '\n';
    return kExitOk;
}

inline void emit_report(const RunConfig& c, const ScoreSet& s, std::ostream& log) {
    const MetricReport rep = evaluate_scores(s);
    write_text(c.out / "report.txt", format_report(rep));
    write_roc_file((c.out / "roc.csv").string(), roc(s));
    log << format_report(rep);
}

inline int cmd_evaluate(const RunConfig& c, std::ostream& log = std::cout) {
    if (c.evaluate_checkpoint.empty()) throw ConfigError("evaluate.checkpoint is required");
    Detector h = load_detector(c.evaluate_checkpoint);
    LoadedSet test = resolve_split(c, false);
    const std::vector<double> scores = score_dataset(h, test.data);
    std::vector<ScoreRow> rows;
    const ScoreSet s = labeled_scores(test.data, scores, &rows);
    write_score_file((c.out / "scores.csv").string(), rows);
    emit_report(c, s, log);
    return kExitOk;
}

inline int cmd_metrics(const RunConfig& c, std::ostream& log = std::cout) {
    if (c.metrics_scores.empty()) throw ConfigError("metrics.scores is required");
    emit_report(c, to_score_set(read_score_file(c.metrics_scores)), log);
    return kExitOk;
}

inline int cmd_inspect(const RunConfig& c, std::ostream& log = std::cout) {
    if (c.inspect_checkpoint.empty()) throw ConfigError("inspect.checkpoint is required");
    Archive a = load_archive(c.inspect_checkpoint);
    std::size_t total = 0;
    ojson groups = ojson::object();
    for (const auto& [name, t] : a.tensors) {
        total += t.numel();
        const std::string g = name.substr(0, name.find('/'));
        groups[g] = groups.value(g, std::size_t{0}) + t.numel();
    }
    ojson summary{{"path", c.inspect_checkpoint},
                  {"format_version", kCheckpointFormatVersion},
                  {"meta", a.meta},
                  {"tensors", a.tensors.size()},
                  {"values", total},
                  {"values_by_group", groups}};
    write_text(c.out / "inspect.json", summary.dump(2) + "\n");
    log << summary.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"IF-OM: de-folding / de-mixing pretraining and presentation attack detection"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Overrides flags;
    std::string config_path, out, protocol;
    std::uint64_t seed = 0;
    const std::vector<std::string> protocols{"cross_material", "cross_sensor", "cross_dataset"};
    std::map<std::string, CLI::App*> subs;
    for (const char* name : {"datagen", "pretrain", "finetune", "evaluate", "metrics", "inspect"}) {
        CLI::App* s = app.add_subcommand(name);
        s->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        s->add_option("--seed", seed, "random seed");
        s->add_option("--out", out, "output directory");
        if (std::string(name) != "metrics" && std::string(name) != "inspect")
            s->add_option("--protocol", protocol, "evaluation protocol")->check(CLI::IsMember(protocols));
        if (std::string(name) == "finetune")
            s->add_flag("--from-scratch", flags.from_scratch, "start from a freshly initialized extractor");
        subs[name] = s;
    }
    subs["datagen"]->description("generate a synthetic dataset and manifest");
    subs["pretrain"]->description("self-supervised pretraining of the extractor");
    subs["finetune"]->description("supervised fine-tuning of the detector");
    subs["evaluate"]->description("score a test set and report metrics");
    subs["metrics"]->description("metrics from an existing score file");
    subs["inspect"]->description("summarize a checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, log, err);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    std::string command;
    for (const auto& [name, s] : subs)
        if (s->parsed()) command = name;
    CLI::App* s = subs[command];
    if (s->count("--config")) flags.config_path = config_path;
    if (s->count("--seed")) flags.seed = seed;
    if (s->count("--out")) flags.out = out;
    if (s->get_option_no_throw("--protocol") && s->count("--protocol")) flags.protocol = protocol;

    RunConfig cfg;
    try {
        cfg = typed_config(resolve_config(flags));
    } catch (const std::exception& e) {
        err << "ifom " << command << ": configuration error: " << e.what() << '\n';
        return kExitUsage;
    }
    const auto started = std::chrono::steady_clock::now();
    try {
        prepare_output(cfg, command, log);
        int rc = kExitOk;
        if (command == "datagen") rc = cmd_datagen(cfg, log);
        if (command == "pretrain") rc = cmd_pretrain(cfg, log);
        if (command == "finetune") rc = cmd_finetune(cfg, log);
        if (command == "evaluate") rc = cmd_evaluate(cfg, log);
        if (command == "metrics") rc = cmd_metrics(cfg, log);
        if (command == "inspect") rc = cmd_inspect(cfg, log);
        finish_run_info(cfg, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
        return rc;
    } catch (const ConfigError& e) {
        err << "ifom " << command << ": configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "ifom " << command << ": " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace ifom::cli
