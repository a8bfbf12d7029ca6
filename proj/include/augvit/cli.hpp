#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "augvit/config.hpp"
#include "augvit/gradcam.hpp"
#include "augvit/nn/checkpoint.hpp"
#include "augvit/sweep.hpp"

namespace augvit {

namespace cli_detail {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

// One manifest per artifact-producing command, written alongside the outputs.
struct Manifest {
    json j;
    fs::path dir;

    Manifest(const std::string& command, const fs::path& out_dir, uint64_t seed,
             const std::string& digest)
        : dir(out_dir) {
        j["command"] = command;
        j["seed"] = seed;
        j["config_digest"] = digest;
        j["started_at"] = utc_now();
        j["outputs"] = json::array();
    }

    void add_output(const fs::path& p) { j["outputs"].push_back(p.filename().string()); }

    void note(const std::string& key, const json& value) { j[key] = value; }

    void finish() {
        j["finished_at"] = utc_now();
        write_text(dir / "manifest.json", j.dump(2) + "\n");
    }
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    bool synthetic = false;
    bool distort_test = false;
    std::optional<uint64_t> seed;
    std::string techniques;
};

inline void add_common(CLI::App* cmd, CommonArgs& a, bool with_data = true) {
    cmd->add_option("--config", a.config_path, "text configuration file");
    cmd->add_option("--out", a.out_dir, "output directory")->required();
    cmd->add_option("--seed", a.seed, "seed override (wins over the config file)");
    if (with_data) {
        cmd->add_option("--data-dir", a.data_dir, "class-per-directory PNG tree");
        cmd->add_flag("--synthetic", a.synthetic, "use the synthetic glyph corpus");
        cmd->add_flag("--distort-test", a.distort_test,
                      "apply a one-shot mild rotation+shift to test images after the split");
    }
}

inline AppConfig resolve_config(const CommonArgs& a) {
    AppConfig cfg = a.config_path.empty() ? AppConfig{} : load_app_config(a.config_path);
    if (a.seed) {
        cfg.train.seed = *a.seed;
        cfg.pipeline.seed = *a.seed;
        cfg.glyphs.seed = *a.seed;
    } else {
        // one seed story per run unless the file sets them apart
        cfg.pipeline.seed = cfg.pipeline.seed ? cfg.pipeline.seed : cfg.train.seed;
        cfg.glyphs.seed = cfg.glyphs.seed ? cfg.glyphs.seed : cfg.train.seed;
    }
    if (a.distort_test) cfg.distort_test = true;
    return cfg;
}

inline std::vector<Technique> resolve_universe(const std::string& spec) {
    if (spec.empty()) return default_universe();
    std::vector<Technique> out;
    std::istringstream is(spec);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(technique_from_abbrev(detail::trim(tok)));
    return out;
}

// applies --techniques on top of the config file's enabled blocks
inline void select_techniques(AugmentationPipeline& pl, const std::string& spec) {
    if (spec.empty()) return;
    AugmentationPipeline chosen;
    chosen.seed = pl.seed;
    for (Technique t : resolve_universe(spec)) {
        switch (t) {
            case Technique::RandomRotation:
                chosen.rotation = pl.rotation ? *pl.rotation : RotationParams{};
                break;
            case Technique::RandomAffine:
                chosen.affine = pl.affine ? *pl.affine : AffineParams{};
                break;
            case Technique::Clahe:
                chosen.clahe_params = pl.clahe_params ? *pl.clahe_params : ClaheParams{};
                break;
            case Technique::ColorJitter:
                chosen.jitter = pl.jitter ? *pl.jitter : JitterParams{};
                break;
        }
    }
    pl = chosen;
}

struct PreparedData {
    Dataset dataset;
    SplitIndices split;
};

inline PreparedData prepare_dataset(const CommonArgs& a, AppConfig& cfg) {
    if (a.synthetic ? !a.data_dir.empty() : a.data_dir.empty())
        throw std::invalid_argument("exactly one of --data-dir or --synthetic is required");
    PreparedData out;
    if (a.synthetic) {
        cfg.glyphs.validate();
        out.dataset = synth_glyphs(cfg.glyphs);
        cfg.model.input_size = cfg.glyphs.image_size;
    } else {
        out.dataset = load_image_dir(a.data_dir, cfg.model.input_size);
    }
    cfg.model.num_classes = out.dataset.num_classes();
    cfg.model.validate();
    out.split = split_dataset(out.dataset.labels(), cfg.train.seed);
    if (cfg.distort_test)
        distort_samples(out.dataset, out.split.test, cfg.train.seed, cfg.distort_max_deg,
                        cfg.distort_max_shift);
    return out;
}

inline std::string sanitize_label(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c))) out += c;
        else if (c == '+') out += '_';
    }
    return out.empty() ? "none" : out;
}

inline json metrics_json(const Metrics& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["confusion"] = json::array();
    for (int r = 0; r < m.num_classes; ++r) {
        json row = json::array();
        for (int c = 0; c < m.num_classes; ++c) row.push_back(m.confusion_at(r, c));
        j["confusion"].push_back(row);
    }
    return j;
}

// ---------------------------------------------------------------------------
// command handlers
// ---------------------------------------------------------------------------

inline int cmd_augment(const CommonArgs& args, const std::string& image_path) {
    AppConfig cfg = resolve_config(args);
    select_techniques(cfg.pipeline, args.techniques);
    cfg.pipeline.validate();
    const ImageBuffer input = read_png(image_path);
    fs::create_directories(args.out_dir);

    Manifest manifest("augment", args.out_dir, cfg.pipeline.seed, fnv1a_hex(cfg.digest_text()));
    manifest.note("input_image", image_path);
    manifest.note("pipeline", cfg.pipeline.label());

    // one PNG per enabled technique applied alone, plus the composed pipeline
    for (Technique t : kAllTechniques) {
        if (!cfg.pipeline.enabled(t)) continue;
        AugmentationPipeline single;
        single.seed = cfg.pipeline.seed;
        switch (t) {
            case Technique::RandomRotation: single.rotation = cfg.pipeline.rotation; break;
            case Technique::RandomAffine: single.affine = cfg.pipeline.affine; break;
            case Technique::Clahe: single.clahe_params = cfg.pipeline.clahe_params; break;
            case Technique::ColorJitter: single.jitter = cfg.pipeline.jitter; break;
        }
        const fs::path p = fs::path(args.out_dir) / (std::string(technique_abbrev(t)) + ".png");
        write_png(single.apply(input, 0, 0), p.string());
        manifest.add_output(p);
    }
    const fs::path composed = fs::path(args.out_dir) / "composed.png";
    write_png(cfg.pipeline.apply(input, 0, 0), composed.string());
    manifest.add_output(composed);
    manifest.finish();
    return 0;
}

inline int cmd_train(const CommonArgs& args, AppConfig cfg) {
    select_techniques(cfg.pipeline, args.techniques);
    cfg.pipeline.validate();
    PreparedData data = prepare_dataset(args, cfg);
    fs::create_directories(args.out_dir);

    Manifest manifest("train", args.out_dir, cfg.train.seed, fnv1a_hex(cfg.digest_text()));
    manifest.note("dataset", data.dataset.name);
    manifest.note("pipeline", cfg.pipeline.label());
    manifest.note("model_config", cfg.model.to_text());

    Model<float> model(cfg.model, cfg.train.seed);
    manifest.note("param_count", model.count_params());
    manifest.note("estimated_gflops", model.estimate_flops());
    const TrainHistory hist = train(model, data.dataset, data.split, cfg.pipeline, cfg.train, true);
    const Metrics test = evaluate(model, data.dataset, data.split.test, cfg.train.batch_size);

    const fs::path ckpt = fs::path(args.out_dir) / "model.ckpt";
    save_checkpoint(model, ckpt.string());
    manifest.add_output(ckpt);
    const fs::path hist_csv = fs::path(args.out_dir) / "history.csv";
    write_text(hist_csv, hist.to_csv());
    manifest.add_output(hist_csv);
    const fs::path metrics_path = fs::path(args.out_dir) / "metrics.json";
    json mj = metrics_json(test);
    mj["best_epoch"] = hist.best_epoch;
    mj["stopped_epoch"] = hist.stopped_epoch;
    write_text(metrics_path, mj.dump(2) + "\n");
    manifest.add_output(metrics_path);
    manifest.finish();

    std::cout << "test accuracy " << format_percent(test.accuracy) << " (best epoch "
              << hist.best_epoch << ", stopped after " << hist.stopped_epoch << ")\n";
    return 0;
}

inline int cmd_sweep(const CommonArgs& args, AppConfig cfg) {
    cfg.pipeline.validate();
    const auto universe = resolve_universe(args.techniques);
    PreparedData data = prepare_dataset(args, cfg);
    fs::create_directories(args.out_dir);

    Manifest manifest("sweep", args.out_dir, cfg.train.seed, fnv1a_hex(cfg.digest_text()));
    manifest.note("dataset", data.dataset.name);
    manifest.note("model_config", cfg.model.to_text());

    const SweepReport report = run_sweep<float>(data.dataset, cfg.model, cfg.train, universe,
                                                cfg.pipeline, &data.split, true);

    const fs::path md = fs::path(args.out_dir) / "report.md";
    write_text(md, render_report(report, ReportFormat::markdown));
    manifest.add_output(md);
    const fs::path csv = fs::path(args.out_dir) / "report.csv";
    write_text(csv, render_report(report, ReportFormat::csv));
    manifest.add_output(csv);
    for (const auto& row : report.rows) {
        if (row.failed()) continue;
        const fs::path h = fs::path(args.out_dir) / ("history_" + sanitize_label(row.label) + ".csv");
        write_text(h, row.history.to_csv());
        manifest.add_output(h);
    }
    manifest.note("best_label", report.best_label);
    manifest.note("rows", report.rows.size());
    manifest.finish();

    size_t ok = 0;
    for (const auto& row : report.rows) ok += row.failed() ? 0 : 1;
    std::cout << render_report(report, ReportFormat::markdown);
    return ok >= 1 ? 0 : 2;
}

inline int cmd_gradcam(const CommonArgs& args, const std::string& checkpoint_path,
                       const std::string& image_path, bool misclassified, int target_class,
                       int source_stage) {
    AppConfig cfg = resolve_config(args);
    Model<float> model = load_checkpoint<float>(checkpoint_path);
    fs::create_directories(args.out_dir);

    Manifest manifest("gradcam", args.out_dir, cfg.train.seed, model.config_digest());
    manifest.note("checkpoint", checkpoint_path);

    if (!image_path.empty()) {
        const ImageBuffer img = read_png(image_path);
        int cls = target_class;
        if (cls < 0) {
            const ImageBuffer sized =
                resize_bilinear(img, model.config().input_size, model.config().input_size);
            Tensor<float> batch({1, 3, model.config().input_size, model.config().input_size});
            const auto t = to_tensor<float>(sized, 3);
            std::copy(t.data.begin(), t.data.end(), batch.data.begin());
            const auto logits = model.predict(batch);
            cls = 0;
            for (int c = 1; c < logits.dim(1); ++c)
                if (logits.at(0, c) > logits.at(0, cls)) cls = c;
        }
        const CamMap cam = gradcam(model, img, cls, source_stage);
        const fs::path out = fs::path(args.out_dir) /
                             (fs::path(image_path).stem().string() + "_cam.png");
        write_png(overlay(cam, img), out.string());
        manifest.add_output(out);
        manifest.note("target_class", cls);
        manifest.finish();
        return 0;
    }

    if (!misclassified)
        throw std::runtime_error("gradcam: need --image or --misclassified with a dataset");
    cfg.model = model.config();
    PreparedData data = prepare_dataset(args, cfg);
    if (data.dataset.num_classes() != model.config().num_classes)
        throw std::runtime_error("gradcam: dataset classes do not match the checkpoint");

    const auto preds = predict_indices(model, data.dataset, data.split.test);
    size_t written = 0;
    for (size_t i = 0; i < data.split.test.size(); ++i) {
        const int idx = data.split.test[i];
        const auto& [img, actual] = data.dataset.samples[static_cast<size_t>(idx)];
        const int predicted = preds[i];
        if (predicted == actual) continue;
        const CamMap cam = gradcam(model, img, predicted, source_stage);
        const fs::path out =
            fs::path(args.out_dir) /
            (std::to_string(idx) + "_" + data.dataset.class_names[static_cast<size_t>(predicted)] +
             "_" + data.dataset.class_names[static_cast<size_t>(actual)] + ".png");
        write_png(overlay(cam, img), out.string());
        manifest.add_output(out);
        ++written;
    }
    manifest.note("misclassified", written);
    if (written == 0) {
        manifest.note("note", "none misclassified");
        std::cout << "none misclassified: no overlays written\n";
    }
    manifest.finish();
    return 0;
}

inline int cmd_report(const std::string& input_path, const std::string& format,
                      const std::string& out_dir) {
    std::ifstream is(input_path);
    if (!is) throw std::runtime_error("report: cannot open " + input_path);
    const std::string text((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
    const SweepReport report = parse_report_csv(text);
    fs::create_directories(out_dir);
    Manifest manifest("report", out_dir, report.seed, report.config_digest);
    if (format == "md") {
        const fs::path out = fs::path(out_dir) / "report.md";
        write_text(out, render_report(report, ReportFormat::markdown));
        manifest.add_output(out);
    } else {
        const fs::path out = fs::path(out_dir) / "report.csv";
        write_text(out, render_report(report, ReportFormat::csv));
        manifest.add_output(out);
    }
    manifest.finish();
    return 0;
}

}  // namespace cli_detail

// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
inline int run_cli(int argc, const char* const* argv) {
    using namespace cli_detail;

    CLI::App app{"deterministic augmentation ablation toolkit"};
    app.require_subcommand(1);

    CommonArgs aug_args, train_args, sweep_args, cam_args;
    std::string aug_image;
    std::string cam_checkpoint, cam_image;
    bool cam_misclassified = false;
    int cam_target = -1;
    int cam_stage = 4;
    std::string report_input, report_format = "md", report_out;

    auto* augment = app.add_subcommand("augment", "preview augmentation kernels on one image");
    add_common(augment, aug_args, false);
    augment->add_option("--image", aug_image, "input PNG")->required();
    augment->add_option("--techniques", aug_args.techniques,
                        "comma list of RR,RA,C,CJ (default: config file blocks)");

    auto* train_cmd = app.add_subcommand("train", "train one model under the fixed protocol");
    add_common(train_cmd, train_args);
    train_cmd->add_option("--techniques", train_args.techniques, "enabled techniques");
    std::optional<double> train_lr;
    std::optional<int> train_epochs, train_batch, train_patience;
    train_cmd->add_option("--lr", train_lr, "learning rate override");
    train_cmd->add_option("--epochs", train_epochs, "max epochs override");
    train_cmd->add_option("--batch-size", train_batch, "batch size override");
    train_cmd->add_option("--patience", train_patience, "early-stopping patience override");

    auto* sweep_cmd = app.add_subcommand("sweep", "train every technique subset and report");
    add_common(sweep_cmd, sweep_args);
    sweep_cmd->add_option("--techniques", sweep_args.techniques,
                          "universe for the subset grid (default RR,RA,C,CJ)");
    std::optional<double> sweep_lr;
    std::optional<int> sweep_epochs, sweep_batch, sweep_patience;
    sweep_cmd->add_option("--lr", sweep_lr, "learning rate override");
    sweep_cmd->add_option("--epochs", sweep_epochs, "max epochs override");
    sweep_cmd->add_option("--batch-size", sweep_batch, "batch size override");
    sweep_cmd->add_option("--patience", sweep_patience, "early-stopping patience override");

    auto* cam = app.add_subcommand("gradcam", "class-activation overlays from a checkpoint");
    add_common(cam, cam_args);
    cam->add_option("--checkpoint", cam_checkpoint, "model checkpoint")->required();
    cam->add_option("--image", cam_image, "single input PNG");
    cam->add_flag("--misclassified", cam_misclassified,
                  "scan the test split and write overlays for misclassified samples");
    cam->add_option("--target-class", cam_target, "class index (default: predicted class)");
    cam->add_option("--layer", cam_stage, "instrumented stage output (2, 3 or 4; default 4)")
        ->check(CLI::Range(2, 4));

    auto* report_cmd = app.add_subcommand("report", "re-render a sweep report");
    report_cmd->add_option("--input", report_input, "report.csv produced by sweep")->required();
    report_cmd->add_option("--format", report_format, "md or csv")
        ->check(CLI::IsMember({"md", "csv"}));
    report_cmd->add_option("--out", report_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    auto merge_train_flags = [](AppConfig& cfg, std::optional<double> lr,
                                std::optional<int> epochs, std::optional<int> batch,
                                std::optional<int> patience) {
        if (lr) cfg.train.learning_rate = *lr;
        if (epochs) cfg.train.max_epochs = *epochs;
        if (batch) cfg.train.batch_size = *batch;
        if (patience) cfg.train.patience = *patience;
    };

    // configuration and validation problems exit 1, execution failures exit 2
    AppConfig cfg;
    try {
        if (augment->parsed()) cfg = resolve_config(aug_args);
        auto check_source = [](const CommonArgs& a) {
            if (a.synthetic ? !a.data_dir.empty() : a.data_dir.empty())
                throw std::invalid_argument(
                    "exactly one of --data-dir or --synthetic is required");
        };
        if (train_cmd->parsed()) {
            cfg = resolve_config(train_args);
            merge_train_flags(cfg, train_lr, train_epochs, train_batch, train_patience);
            cfg.train.validate();
            check_source(train_args);
        }
        if (sweep_cmd->parsed()) {
            cfg = resolve_config(sweep_args);
            merge_train_flags(cfg, sweep_lr, sweep_epochs, sweep_batch, sweep_patience);
            cfg.train.validate();
            resolve_universe(sweep_args.techniques);
            check_source(sweep_args);
        }
        if (cam->parsed()) cfg = resolve_config(cam_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (augment->parsed()) return cmd_augment(aug_args, aug_image);
        if (train_cmd->parsed()) return cmd_train(train_args, cfg);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, cfg);
        if (cam->parsed())
            return cmd_gradcam(cam_args, cam_checkpoint, cam_image, cam_misclassified,
                               cam_target, cam_stage);
        if (report_cmd->parsed()) return cmd_report(report_input, report_format, report_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

inline int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("augvit");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace augvit
