#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "augvit/dataio.hpp"
#include "augvit/nn/checkpoint.hpp"

using namespace augvit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("augvit_test_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ImageBuffer random_image(int w, int h, int c, Rng& rng) {
    ImageBuffer img(w, h, c);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.next_below(256));
    return img;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_size = 16;
    cfg.stage_channels = {4, 4, 4, 4};
    cfg.stage_depths = {1, 1, 1, 1};
    cfg.attention_dim = 4;
    cfg.attention_heads = 2;
    cfg.multiscale_kernel = 3;
    cfg.expand_ratio = 2;
    cfg.num_classes = 4;
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// png round trip
// ---------------------------------------------------------------------------

TEST_CASE("png write/read round-trips gray and rgb images") {
    TempDir tmp("png");
    Rng rng(401);
    for (int c : {1, 3}) {
        const ImageBuffer img = random_image(23, 17, c, rng);
        const std::string path = (tmp.path / ("img" + std::to_string(c) + ".png")).string();
        write_png(img, path);
        const ImageBuffer back = read_png(path);
        REQUIRE(back == img);
    }
}

TEST_CASE("png reader reports undecodable files with their path") {
    TempDir tmp("badpng");
    const std::string path = (tmp.path / "broken.png").string();
    std::ofstream(path) << "this is not a png";
    try {
        read_png(path);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// directory loading
// ---------------------------------------------------------------------------

TEST_CASE("load_image_dir loads class-per-directory trees deterministically") {
    TempDir tmp("tree");
    Rng rng(402);
    for (const std::string cls : {"alpha", "beta"}) {
        fs::create_directories(tmp.path / cls);
        for (int i = 0; i < 3; ++i)
            write_png(random_image(20, 20, 1, rng),
                      (tmp.path / cls / ("s" + std::to_string(i) + ".png")).string());
    }
    const Dataset a = load_image_dir(tmp.path.string(), 16);
    REQUIRE(a.size() == 6);
    REQUIRE(a.class_names == std::vector<std::string>{"alpha", "beta"});
    for (const auto& s : a.samples) {
        CHECK(s.first.width == 16);
        CHECK(s.first.height == 16);
    }

    const Dataset b = load_image_dir(tmp.path.string(), 16);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.samples[i].first == b.samples[i].first);
        REQUIRE(a.samples[i].second == b.samples[i].second);
    }
}

TEST_CASE("load_image_dir rejects empty class directories by name") {
    TempDir tmp("empty");
    fs::create_directories(tmp.path / "vacant");
    try {
        load_image_dir(tmp.path.string(), 16);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("vacant") != std::string::npos);
    }
}

TEST_CASE("load_image_dir rejects non-png files") {
    TempDir tmp("mixed");
    fs::create_directories(tmp.path / "cls");
    Rng rng(403);
    write_png(random_image(8, 8, 1, rng), (tmp.path / "cls" / "ok.png").string());
    std::ofstream(tmp.path / "cls" / "stray.bmp") << "x";
    CHECK_THROWS_AS(load_image_dir(tmp.path.string(), 16), std::runtime_error);
}

// ---------------------------------------------------------------------------
// synthetic glyphs
// ---------------------------------------------------------------------------

TEST_CASE("glyphs with zero jitter are pixel-identical within a class") {
    GlyphSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 3;
    spec.image_size = 32;
    spec.stroke_jitter = 0.0;
    spec.seed = 11;
    const Dataset ds = synth_glyphs(spec);
    REQUIRE(ds.size() == 12);
    for (int c = 0; c < 4; ++c)
        for (int i = 1; i < 3; ++i)
            REQUIRE(ds.samples[static_cast<size_t>(c * 3 + i)].first ==
                    ds.samples[static_cast<size_t>(c * 3)].first);
    // and generation itself is deterministic
    const Dataset ds2 = synth_glyphs(spec);
    for (size_t i = 0; i < ds.size(); ++i) REQUIRE(ds.samples[i].first == ds2.samples[i].first);
}

TEST_CASE("glyph counts and sizes follow the spec") {
    GlyphSpec spec;
    spec.num_classes = 10;
    spec.samples_per_class = 20;
    spec.image_size = 48;
    spec.seed = 12;
    const Dataset ds = synth_glyphs(spec);
    REQUIRE(ds.size() == 200);
    REQUIRE(ds.num_classes() == 10);
    for (const auto& s : ds.samples) {
        REQUIRE(s.first.width == 48);
        REQUIRE(s.first.channels == 1);
    }
}

TEST_CASE("glyphs are dark strokes on a white background") {
    GlyphSpec spec;
    spec.num_classes = 10;
    spec.samples_per_class = 4;
    spec.image_size = 64;
    spec.seed = 13;
    const Dataset ds = synth_glyphs(spec);
    for (const auto& [img, cls] : ds.samples) {
        int background = 0, core = 0;
        uint8_t darkest = 255;
        for (uint8_t v : img.pixels) {
            if (v == 255) ++background;
            if (v < 128) ++core;
            darkest = std::min(darkest, v);
        }
        REQUIRE(background > static_cast<int>(img.pixels.size()) / 2);
        REQUIRE(core > 0);         // stroke core below 128
        REQUIRE(darkest < 128);
    }
}

TEST_CASE("inter-class distance exceeds intra-class distance at jitter 0.05") {
    GlyphSpec spec;
    spec.num_classes = 10;
    spec.samples_per_class = 8;
    spec.image_size = 32;
    spec.stroke_jitter = 0.05;
    spec.seed = 14;
    const Dataset ds = synth_glyphs(spec);

    auto dist = [](const ImageBuffer& a, const ImageBuffer& b) {
        double d = 0.0;
        for (size_t i = 0; i < a.pixels.size(); ++i) {
            const double diff = double(a.pixels[i]) - double(b.pixels[i]);
            d += diff * diff;
        }
        return std::sqrt(d);
    };
    double intra = 0.0, inter = 0.0;
    int64_t n_intra = 0, n_inter = 0;
    for (size_t i = 0; i < ds.size(); ++i)
        for (size_t j = i + 1; j < ds.size(); ++j) {
            const double d = dist(ds.samples[i].first, ds.samples[j].first);
            if (ds.samples[i].second == ds.samples[j].second) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    CHECK(inter / n_inter > intra / n_intra);
}

TEST_CASE("distort_samples rewrites only the referenced samples, deterministically") {
    GlyphSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 5;
    spec.image_size = 32;
    spec.seed = 15;
    Dataset a = synth_glyphs(spec);
    Dataset b = synth_glyphs(spec);
    const std::vector<int> targets{0, 4, 7};
    distort_samples(a, targets, 99);
    distort_samples(b, targets, 99);
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.samples[i].first == b.samples[i].first);
        const bool touched =
            std::find(targets.begin(), targets.end(), static_cast<int>(i)) != targets.end();
        ImageBuffer orig = synth_glyphs(spec).samples[i].first;
        if (!touched) REQUIRE(a.samples[i].first == orig);
    }
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round trip is byte-identical with bit-exact probe logits") {
    TempDir tmp("ckpt");
    Model<float> model(tiny_config(), 91);
    Rng rng(404);
    Tensor<float> probe({2, 3, 16, 16});
    for (auto& v : probe.data) v = static_cast<float>(rng.next_double());
    const auto before = model.predict(probe);

    const std::string path = (tmp.path / "model.ckpt").string();
    save_checkpoint(model, path);
    Model<float> loaded = load_checkpoint<float>(path);
    CHECK(loaded.config() == model.config());

    const std::string path2 = (tmp.path / "model2.ckpt").string();
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(b1 == b2);

    const auto after = loaded.predict(probe);
    REQUIRE(after.data == before.data);
}

TEST_CASE("checkpoint rejects a corrupted magic") {
    TempDir tmp("ckptbad");
    Model<float> model(tiny_config(), 92);
    const std::string path = (tmp.path / "m.ckpt").string();
    save_checkpoint(model, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
    }
    try {
        load_checkpoint<float>(path);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
}

TEST_CASE("checkpoint rejects truncation") {
    TempDir tmp("ckpttrunc");
    Model<float> model(tiny_config(), 93);
    const std::string path = (tmp.path / "m.ckpt").string();
    save_checkpoint(model, path);
    const auto sz = fs::file_size(path);
    fs::resize_file(path, sz / 2);
    CHECK_THROWS_AS(load_checkpoint<float>(path), std::runtime_error);
}

TEST_CASE("checkpoint detects block mismatches as config errors") {
    Model<float> model(tiny_config(), 94);
    std::string blob = serialize_checkpoint(model);
    // corrupt the first block name (directly after magic+len+config text)
    const size_t name_at = 5 + 4 + model.config().to_text().size() + 4 + 4;
    blob[name_at] = 'z';
    try {
        deserialize_checkpoint<float>(blob);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
    }
}
