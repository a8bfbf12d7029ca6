#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "augvit/cli.hpp"

using namespace augvit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("augvit_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

size_t count_pngs(const fs::path& dir) {
    size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") ++n;
    return n;
}

ImageBuffer sample_image(uint64_t seed) {
    Rng rng(seed);
    ImageBuffer img(48, 48, 3, 255);
    for (int y = 10; y < 38; ++y)
        for (int x = 10; x < 38; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = static_cast<uint8_t>(rng.next_below(200));
    return img;
}

// tiny brightness-separable two-class PNG tree
void write_toy_tree(const fs::path& root, uint64_t seed, int per_class = 10) {
    Rng rng(seed);
    for (const std::string cls : {"dark", "bright"}) {
        fs::create_directories(root / cls);
        for (int i = 0; i < per_class; ++i) {
            ImageBuffer img(16, 16, 1);
            const double base = cls == "dark" ? 40.0 : 210.0;
            for (auto& p : img.pixels) p = round_to_intensity(base + rng.uniform(-25.0, 25.0));
            write_png(img, (root / cls / ("img" + std::to_string(i) + ".png")).string());
        }
    }
}

const char* kMicroModelConfig = R"([model]
input_size = 16
stage_channels = 4,4,4,4
stage_depths = 1,1,1,1
attention_dim = 4
attention_heads = 2
multiscale_kernel = 3
expand_ratio = 2

[train]
max_epochs = 2
learning_rate = 1e-3
batch_size = 8
patience = 2
seed = 77
)";

}  // namespace

TEST_CASE("augment command writes one png per technique plus the composed result") {
    TempDir tmp("aug");
    const std::string input = tmp.str("input.png");
    write_png(sample_image(601), input);
    const std::string cfg_path = tmp.str("pipe.cfg");
    std::ofstream(cfg_path) << "[clahe]\ntiles_x = 4\ntiles_y = 4\n"
                            << "[rotation]\n[affine]\n[jitter]\n";

    const int rc = run_cli({"augment", "--image", input, "--config", cfg_path, "--seed", "3",
                            "--out", tmp.str("out")});
    REQUIRE(rc == 0);
    for (const std::string name : {"RR.png", "RA.png", "C.png", "CJ.png", "composed.png"})
        REQUIRE(fs::exists(tmp.path / "out" / name));
    CHECK(count_pngs(tmp.path / "out") == 5);
    CHECK(fs::exists(tmp.path / "out" / "manifest.json"));

    // determinism: byte-identical rerun
    REQUIRE(run_cli({"augment", "--image", input, "--config", cfg_path, "--seed", "3", "--out",
                     tmp.str("out2")}) == 0);
    for (const std::string name : {"RR.png", "RA.png", "C.png", "CJ.png", "composed.png"})
        REQUIRE(slurp(tmp.str("out/" + name)) == slurp(tmp.str("out2/" + name)));
}

TEST_CASE("augment with an empty pipeline emits one png identical to the input") {
    TempDir tmp("augempty");
    const std::string input = tmp.str("input.png");
    const ImageBuffer img = sample_image(602);
    write_png(img, input);
    REQUIRE(run_cli({"augment", "--image", input, "--out", tmp.str("out")}) == 0);
    CHECK(count_pngs(tmp.path / "out") == 1);
    CHECK(read_png(tmp.str("out/composed.png")) == img);
}

TEST_CASE("augment rejects a bad config with exit code 1") {
    TempDir tmp("augbad");
    const std::string input = tmp.str("input.png");
    write_png(sample_image(603), input);
    const std::string cfg_path = tmp.str("bad.cfg");
    std::ofstream(cfg_path) << "[rotation]\nmin_deg = 10\nmax_deg = -10\n";
    CHECK(run_cli({"augment", "--image", input, "--config", cfg_path, "--out",
                   tmp.str("out")}) == 1);
    const std::string cfg2 = tmp.str("bad2.cfg");
    std::ofstream(cfg2) << "[nosuch]\nx = 1\n";
    CHECK(run_cli({"augment", "--image", input, "--config", cfg2, "--out", tmp.str("out")}) ==
          1);
}

TEST_CASE("unknown flags are usage errors") {
    CHECK(run_cli({"augment", "--no-such-flag"}) == 1);
    CHECK(run_cli({"bogus-subcommand"}) == 1);
}

TEST_CASE("train command produces checkpoint, history, metrics and manifest") {
    TempDir tmp("train");
    write_toy_tree(tmp.path / "data", 604);
    const std::string cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << kMicroModelConfig;

    const int rc = run_cli({"train", "--data-dir", tmp.str("data"), "--config", cfg_path,
                            "--out", tmp.str("out")});
    REQUIRE(rc == 0);
    for (const std::string name : {"model.ckpt", "history.csv", "metrics.json", "manifest.json"})
        REQUIRE(fs::exists(tmp.path / "out" / name));

    // identical rerun reproduces the history byte for byte
    REQUIRE(run_cli({"train", "--data-dir", tmp.str("data"), "--config", cfg_path, "--out",
                     tmp.str("out2")}) == 0);
    CHECK(slurp(tmp.str("out/history.csv")) == slurp(tmp.str("out2/history.csv")));
    CHECK(slurp(tmp.str("out/model.ckpt")) == slurp(tmp.str("out2/model.ckpt")));

    const auto metrics = nlohmann::json::parse(slurp(tmp.str("out/metrics.json")));
    CHECK(metrics.contains("accuracy"));
    CHECK(metrics.contains("confusion"));
}

TEST_CASE("synthetic training run produces all four artifacts") {
    TempDir tmp("synth");
    const std::string cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << "[model]\ninput_size = 16\nstage_channels = 4,4,4,4\n"
                               "stage_depths = 1,1,1,1\nattention_dim = 4\n"
                               "attention_heads = 2\nmultiscale_kernel = 3\nexpand_ratio = 2\n"
                               "[train]\nmax_epochs = 2\nlearning_rate = 1e-3\n"
                               "batch_size = 16\npatience = 2\nseed = 5\n"
                               "[glyphs]\nnum_classes = 10\nsamples_per_class = 8\n"
                               "image_size = 16\nstroke_jitter = 0.05\nseed = 5\n";
    const int rc = run_cli({"train", "--synthetic", "--config", cfg_path, "--distort-test",
                            "--out", tmp.str("out")});
    REQUIRE(rc == 0);
    for (const std::string name : {"model.ckpt", "history.csv", "metrics.json", "manifest.json"})
        REQUIRE(fs::exists(tmp.path / "out" / name));
    const auto manifest = nlohmann::json::parse(slurp(tmp.str("out/manifest.json")));
    CHECK(manifest["dataset"].get<std::string>() == "synthetic-glyphs");
    CHECK(manifest["command"].get<std::string>() == "train");
    CHECK(manifest["outputs"].size() == 3);
}

TEST_CASE("train with an invalid learning rate fails before any artifacts") {
    TempDir tmp("trainbad");
    write_toy_tree(tmp.path / "data", 605);
    const int rc = run_cli({"train", "--data-dir", tmp.str("data"), "--lr", "0", "--out",
                            tmp.str("out")});
    CHECK(rc == 1);
    CHECK_FALSE(fs::exists(tmp.path / "out" / "model.ckpt"));
}

TEST_CASE("train requires exactly one data source") {
    TempDir tmp("trainsrc");
    CHECK(run_cli({"train", "--out", tmp.str("out")}) == 1);
}

TEST_CASE("sweep over two techniques writes a four-row report that round-trips") {
    TempDir tmp("sweep");
    write_toy_tree(tmp.path / "data", 606);
    const std::string cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << kMicroModelConfig;

    const int rc = run_cli({"sweep", "--data-dir", tmp.str("data"), "--config", cfg_path,
                            "--techniques", "RA,CJ", "--out", tmp.str("out")});
    REQUIRE(rc == 0);
    REQUIRE(fs::exists(tmp.path / "out" / "report.md"));
    REQUIRE(fs::exists(tmp.path / "out" / "report.csv"));
    REQUIRE(fs::exists(tmp.path / "out" / "manifest.json"));

    const auto report = parse_report_csv(slurp(tmp.str("out/report.csv")));
    REQUIRE(report.rows.size() == 4);
    CHECK(report.rows[0].label == "None");
    CHECK(report.rows[1].label == "RA");
    CHECK(report.rows[2].label == "CJ");
    CHECK(report.rows[3].label == "RA + CJ");
    for (const auto& row : report.rows)
        REQUIRE(fs::exists(tmp.path / "out" /
                           ("history_" + cli_detail::sanitize_label(row.label) + ".csv")));

    // the markdown rendering contains the same formatted metrics
    const std::string md = slurp(tmp.str("out/report.md"));
    for (const auto& row : report.rows)
        CHECK(md.find(format_percent(row.accuracy)) != std::string::npos);
}

TEST_CASE("report command re-renders a sweep csv") {
    TempDir tmp("report");
    write_toy_tree(tmp.path / "data", 607);
    const std::string cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << kMicroModelConfig;
    REQUIRE(run_cli({"sweep", "--data-dir", tmp.str("data"), "--config", cfg_path,
                     "--techniques", "RA", "--out", tmp.str("out")}) == 0);
    REQUIRE(run_cli({"report", "--input", tmp.str("out/report.csv"), "--format", "md", "--out",
                     tmp.str("re")}) == 0);
    const std::string md = slurp(tmp.str("re/report.md"));
    CHECK(md.find("| Augmentation Technique |") != std::string::npos);
    CHECK(run_cli({"report", "--input", tmp.str("missing.csv"), "--format", "md", "--out",
                   tmp.str("re2")}) == 2);
}

TEST_CASE("gradcam on a single image writes one overlay of matching size") {
    TempDir tmp("cam");
    write_toy_tree(tmp.path / "data", 608);
    const std::string cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << kMicroModelConfig;
    REQUIRE(run_cli({"train", "--data-dir", tmp.str("data"), "--config", cfg_path, "--out",
                     tmp.str("model")}) == 0);

    const std::string image = tmp.str("data/dark/img0.png");
    REQUIRE(run_cli({"gradcam", "--checkpoint", tmp.str("model/model.ckpt"), "--image", image,
                     "--out", tmp.str("out")}) == 0);
    REQUIRE(fs::exists(tmp.path / "out" / "img0_cam.png"));
    const ImageBuffer ov = read_png(tmp.str("out/img0_cam.png"));
    const ImageBuffer in = read_png(image);
    CHECK(ov.width == in.width);
    CHECK(ov.height == in.height);

    // bad checkpoint path is a runtime failure
    CHECK(run_cli({"gradcam", "--checkpoint", tmp.str("nope.ckpt"), "--image", image, "--out",
                   tmp.str("out2")}) == 2);
}

TEST_CASE("gradcam misclassified scan on a perfect model emits zero overlays") {
    TempDir tmp("camperfect");
    write_toy_tree(tmp.path / "data", 609, 20);
    const std::string cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << "[model]\ninput_size = 16\nstage_channels = 4,4,4,4\n"
                               "stage_depths = 1,1,1,1\nattention_dim = 4\n"
                               "attention_heads = 2\nmultiscale_kernel = 3\nexpand_ratio = 2\n"
                               "[train]\nmax_epochs = 20\nlearning_rate = 1e-2\n"
                               "batch_size = 8\npatience = 20\nseed = 77\n";
    REQUIRE(run_cli({"train", "--data-dir", tmp.str("data"), "--config", cfg_path, "--out",
                     tmp.str("model")}) == 0);
    // fixture precondition: the model must be perfect on the test split
    const auto metrics = nlohmann::json::parse(slurp(tmp.str("model/metrics.json")));
    REQUIRE(metrics["accuracy"].get<double>() == 1.0);

    REQUIRE(run_cli({"gradcam", "--checkpoint", tmp.str("model/model.ckpt"), "--data-dir",
                     tmp.str("data"), "--misclassified", "--seed", "77", "--out",
                     tmp.str("out")}) == 0);
    CHECK(count_pngs(tmp.path / "out") == 0);
    const auto manifest = nlohmann::json::parse(slurp(tmp.str("out/manifest.json")));
    CHECK(manifest["misclassified"].get<int>() == 0);
    CHECK(manifest["note"].get<std::string>() == "none misclassified");
}
