#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ifom/datagen.hpp"
#include "support/linear_probe.hpp"
#include "support/texture_stats.hpp"

using namespace ifom;

namespace {

nlohmann::json golden() {
    std::ifstream in(std::string(IFOM_GOLDEN_DIR) + "/calibration.json");
    return nlohmann::json::parse(in);
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ifom_datagen_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

Modality modality_of(const std::string& regime) {
    for (const auto& r : fingerprint_regimes())
        if (r.key == regime) return Modality::fingerprint;
    return Modality::face;
}

SyntheticSpec spec_for(const std::string& regime, std::size_t n, std::uint64_t seed) {
    SyntheticSpec s;
    s.generator_regime = regime;
    s.modality = modality_of(regime);
    s.n_per_class = n;
    s.seed = seed;
    return s;
}

std::vector<std::string> all_regimes() {
    std::vector<std::string> v;
    for (const auto& r : fingerprint_regimes()) v.push_back(r.key);
    for (const auto& r : face_regimes()) v.push_back(r.key);
    return v;
}

std::set<std::string> ids(const DatasetManifest& m) {
    std::set<std::string> out;
    for (const auto& e : m.entries) out.insert(e.id);
    return out;
}

}  // namespace

TEST(Generator, DeterministicPerSeedAndIndex) {
    for (const auto& regime : all_regimes()) {
        const SyntheticSpec s = spec_for(regime, 4, 7);
        for (Label cls : {Label::bona_fide, Label::attack}) {
            EXPECT_EQ(generate_sample(s, cls, 2).pixels, generate_sample(s, cls, 2).pixels) << regime;
            EXPECT_FALSE(generate_sample(s, cls, 2).pixels == generate_sample(s, cls, 3).pixels) << regime;
        }
        SyntheticSpec other = s;
        other.seed = 8;
        EXPECT_FALSE(generate_sample(s, Label::attack, 0).pixels == generate_sample(other, Label::attack, 0).pixels);
    }
}

TEST(Generator, ValidImageSamples) {
    for (const auto& regime : all_regimes()) {
        SyntheticSpec s = spec_for(regime, 4, 1);
        s.height = 24;
        s.width = 40;
        for (Label cls : {Label::bona_fide, Label::attack})
            for (std::size_t i = 0; i < 4; ++i) {
                const ImageSample x = generate_sample(s, cls, i);
                EXPECT_NO_THROW(validate(x));
                EXPECT_EQ(x.pixels.shape(), (Shape{s.modality == Modality::face ? 3u : 1u, 24, 40}));
                EXPECT_EQ(x.label, cls);
                for (double v : x.pixels.vec()) {
                    ASSERT_GE(v, 0.0);
                    ASSERT_LE(v, 1.0);
                }
            }
    }
}

TEST(Generator, InvalidSpecs) {
    SyntheticSpec s;
    s.generator_regime = "wood-analog";
    EXPECT_THROW(s.validate(), InvalidInput);
    s = SyntheticSpec{};
    s.height = 8;
    EXPECT_THROW(s.validate(), InvalidInput);
    s = SyntheticSpec{};
    s.modality = Modality::face;  // fingerprint regime on a face spec
    EXPECT_THROW(s.validate(), InvalidInput);
}

TEST(Generator, LinearProbeAccuracyInCalibratedBand) {
    const auto g = golden().at("linear_probe");
    const double lo = g.at("accuracy_band")[0], hi = g.at("accuracy_band")[1];
    const std::size_t n = g.at("n_per_class");
    for (const auto& regime : all_regimes()) {
        const double acc = probe::heldout_accuracy(probe::draw(spec_for(regime, n, g.at("train_seed"))),
                                                   probe::draw(spec_for(regime, n, g.at("test_seed"))));
        EXPECT_GE(acc, lo) << regime;
        EXPECT_LE(acc, hi) << regime;
    }
}

TEST(Generator, RegimesHaveDistinctDominantFrequency) {
    const auto g = golden().at("regime_frequency");
    const std::size_t n = g.at("n_per_class");
    const double margin = g.at("margin"), min_freq = g.at("min_frequency");
    std::map<std::string, double> mean;
    for (const auto& regime : all_regimes()) {
        const SyntheticSpec s = spec_for(regime, n, g.at("seed"));
        const Label cls = parse_label(
            g.at(s.modality == Modality::face ? "face_class" : "fingerprint_class").get<std::string>());
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += texture::dominant_frequency(generate_sample(s, cls, i).pixels, min_freq);
        mean[regime] = sum / static_cast<double>(n);
    }
    for (const auto& a : all_regimes())
        for (const auto& b : all_regimes())
            if (a < b && modality_of(a) == modality_of(b)) {
                EXPECT_GT(std::abs(mean[a] - mean[b]), margin) << a << " vs " << b;
            }
}

TEST(Manifest, SyntheticRowsAndMeta) {
    const DatasetManifest m = synthetic_manifest(spec_for("latex-analog", 10, 0), {"latex-analog", "gelatine-analog"});
    ASSERT_EQ(m.entries.size(), 40u);
    EXPECT_EQ(ids(m).size(), 40u);
    for (const auto& e : m.entries) {
        for (const char* k : {"material", "sensor", "dataset", "subject"}) EXPECT_TRUE(e.meta.count(k)) << k;
        EXPECT_EQ(e.meta.at("material"), e.label == Label::attack ? e.meta.at("regime") : "none");
    }
    const DatasetManifest s =
        synthetic_manifest(spec_for("latex-analog", 3, 0), {"latex-analog", "gelatine-analog"}, RegimeRole::sensor);
    for (const auto& e : s.entries) EXPECT_EQ(e.meta.at("sensor"), e.meta.at("regime"));
    EXPECT_THROW(synthetic_manifest(SyntheticSpec{}, {}), InvalidInput);
}

TEST(Manifest, RoundTripAndSchemaVersion) {
    DatasetManifest m = synthetic_manifest(spec_for("print-analog", 3, 4), {"print-analog", "mask-analog"});
    m.entries[0].synthetic.reset();
    m.entries[0].path = "images/x.ppm";
    const std::string text = manifest_to_string(m);
    const DatasetManifest back = manifest_from_string(text);
    EXPECT_EQ(manifest_to_string(back), text);
    EXPECT_EQ(back.modality, Modality::face);
    EXPECT_EQ(*back.entries[0].path, "images/x.ppm");
    EXPECT_EQ(back.entries[1].synthetic->generator_regime, "print-analog");

    auto j = nlohmann::json::parse(text);
    j["schema_version"] = 2;
    EXPECT_THROW(manifest_from_string(j.dump()), Incompatible);
    j.erase("schema_version");
    EXPECT_THROW(manifest_from_string(j.dump()), IoError);
    EXPECT_THROW(manifest_from_string("{not json"), IoError);
    EXPECT_THROW(read_manifest("/nonexistent/manifest.json"), IoError);
}

TEST(Raster, RoundTripQuantizesToEightBits) {
    const auto dir = temp_dir("raster");
    for (const auto& regime : {"latex-analog", "mask-analog"}) {
        const Tensor px = generate_sample(spec_for(regime, 2, 0), Label::attack, 0).pixels;
        const std::string path = (dir / "x.img").string();
        write_raster(path, px);
        const Tensor back = read_raster(path);
        ASSERT_EQ(back.shape(), px.shape());
        for (std::size_t i = 0; i < px.numel(); ++i) {
            EXPECT_LE(std::abs(back[i] - px[i]), 0.5 / 255 + 1e-12);
            EXPECT_EQ(back[i] * 255, std::round(back[i] * 255));
        }
    }
    EXPECT_THROW(write_raster((dir / "y").string(), Tensor({2, 4, 4})), InvalidInput);
    EXPECT_THROW(read_raster((dir / "missing.pgm").string()), IoError);
}

TEST(Loader, IndependentOfWorkerCount) {
    const DatasetManifest m = synthetic_manifest(spec_for("silicone-analog", 6, 2), {"silicone-analog", "latex-analog"});
    const InMemoryDataset a = load_dataset(m, {}, 1), b = load_dataset(m, {}, 4);
    ASSERT_EQ(a.size(), 24u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.pixels(i), b.pixels(i));
        EXPECT_EQ(a.id(i), b.id(i));
        EXPECT_EQ(a.label(i), m.entries[i].label);
    }
}

TEST(Loader, MissingFileNamesTheRow) {
    DatasetManifest m;
    ManifestEntry e;
    e.id = "ghost";
    e.label = Label::attack;
    e.path = "nowhere.pgm";
    m.entries.push_back(e);
    try {
        load_dataset(m, temp_dir("missing"), 1);
        FAIL();
    } catch (const IoError& ex) {
        EXPECT_NE(std::string(ex.what()).find("ghost"), std::string::npos);
    }
}

TEST(Loader, LabelCountingProxy) {
    const InMemoryDataset d = load_dataset(synthetic_manifest(spec_for("latex-analog", 2, 0), {"latex-analog"}), {}, 1);
    LabelCountingDataset c(d);
    c.pixels(0);
    EXPECT_EQ(c.label_reads(), 0u);
    c.label(1);
    c.label(2);
    EXPECT_EQ(c.label_reads(), 2u);
}

TEST(ProtocolSplit, CrossMaterialExcludesHeldOutAttacks) {
    const DatasetManifest full = synthetic_manifest(spec_for("latex-analog", 20, 0),
                                                    {"latex-analog", "gelatine-analog", "silicone-analog"});
    const ProtocolSplit s = make_protocol_split(full, Protocol::cross_material, {"gelatine-analog"});
    std::size_t held_in_test = 0;
    for (const auto& e : s.train.entries)
        EXPECT_FALSE(e.label == Label::attack && e.meta.at("material") == "gelatine-analog") << e.id;
    for (const auto& e : s.test.entries) {
        if (e.label == Label::attack) {
            EXPECT_EQ(e.meta.at("material"), "gelatine-analog");
        }
        held_in_test += e.label == Label::attack;
    }
    EXPECT_EQ(held_in_test, 20u);
    EXPECT_EQ(s.train.entries.size() + s.test.entries.size(), full.entries.size());
}

TEST(ProtocolSplit, PartitionsEveryProtocol) {
    const DatasetManifest full =
        synthetic_manifest(spec_for("latex-analog", 7, 3), {"latex-analog", "gelatine-analog"}, RegimeRole::sensor);
    for (Protocol p : {Protocol::cross_material, Protocol::cross_sensor}) {
        const std::set<std::string> holdout =
            p == Protocol::cross_sensor ? std::set<std::string>{"gelatine-analog"} : std::set<std::string>{"none"};
        const ProtocolSplit s = make_protocol_split(full, p, holdout);
        const auto tr = ids(s.train), te = ids(s.test);
        std::set<std::string> both;
        std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::inserter(both, both.end()));
        EXPECT_TRUE(both.empty());
        std::set<std::string> uni(tr);
        uni.insert(te.begin(), te.end());
        EXPECT_EQ(uni, ids(full));
        EXPECT_EQ(tr.size() + te.size(), full.entries.size());
    }
}

TEST(ProtocolSplit, CrossDatasetGrouping) {
    DatasetManifest full = synthetic_manifest(spec_for("latex-analog", 8, 0), {"latex-analog"});
    const char* groups[] = {"A", "B", "C", "D"};
    for (std::size_t i = 0; i < full.entries.size(); ++i) full.entries[i].meta["dataset"] = groups[i % 4];
    const ProtocolSplit s = make_protocol_split(full, Protocol::cross_dataset, {"C", "D"});
    for (const auto& e : s.train.entries) EXPECT_TRUE(e.meta.at("dataset") == "A" || e.meta.at("dataset") == "B");
    for (const auto& e : s.test.entries) EXPECT_TRUE(e.meta.at("dataset") == "C" || e.meta.at("dataset") == "D");
    EXPECT_EQ(s.train.entries.size(), 8u);
    EXPECT_EQ(s.test.entries.size(), 8u);
}

TEST(ProtocolSplit, CrossMaterialBonaFideFraction) {
    const DatasetManifest full = synthetic_manifest(spec_for("latex-analog", 10, 0), {"latex-analog", "gelatine-analog"});
    const ProtocolSplit s = make_protocol_split(full, Protocol::cross_material, {"gelatine-analog"}, {}, 0.3);
    std::size_t bona_test = 0;
    for (const auto& e : s.test.entries) bona_test += e.label == Label::bona_fide;
    EXPECT_EQ(bona_test, 6u);
}

TEST(ProtocolSplit, Errors) {
    DatasetManifest full = synthetic_manifest(spec_for("latex-analog", 2, 0), {"latex-analog"});
    EXPECT_THROW(make_protocol_split(full, Protocol::cross_material, {}), InvalidInput);
    EXPECT_THROW(make_protocol_split(full, Protocol::cross_material, {"x"}, {}, 1.5), InvalidInput);
    full.entries.back().meta.erase("material");
    EXPECT_THROW(make_protocol_split(full, Protocol::cross_material, {"x"}), InvalidInput);
    EXPECT_THROW(make_protocol_split(full, Protocol::cross_sensor, {"x"}, "rig"), InvalidInput);
    EXPECT_THROW(parse_protocol("cross_planet"), InvalidInput);
}
