#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "augvit/trainer.hpp"

namespace augvit {

// One row of the augmentation-combination grid. A failed row carries NaN
// metrics and the error text; it renders as ERROR without poisoning the rest.
struct SweepRow {
    std::string label;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
    int stopped_epoch = 0;
    double wall_seconds = 0.0;
    std::string error;
    TrainHistory history;

    bool failed() const { return !std::isfinite(accuracy); }
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::string best_label;
    std::string dataset_name;
    uint64_t seed = 0;
    std::string config_digest;  // model config digest shared by every row
    int64_t param_count = 0;
    double total_wall_seconds = 0.0;
};

// Content equality for determinism checks: everything except wall-clock.
inline bool deterministic_equal(const SweepReport& a, const SweepReport& b) {
    if (a.rows.size() != b.rows.size() || a.best_label != b.best_label ||
        a.dataset_name != b.dataset_name || a.seed != b.seed ||
        a.config_digest != b.config_digest || a.param_count != b.param_count)
        return false;
    for (size_t i = 0; i < a.rows.size(); ++i) {
        const auto& x = a.rows[i];
        const auto& y = b.rows[i];
        const bool metrics_equal =
            (x.failed() && y.failed()) ||
            (x.precision == y.precision && x.recall == y.recall && x.f1 == y.f1 &&
             x.accuracy == y.accuracy);
        if (x.label != y.label || !metrics_equal || x.stopped_epoch != y.stopped_epoch)
            return false;
    }
    return true;
}

// argmax accuracy; ties break toward fewer enabled techniques, then the
// lexicographically smaller label
inline std::string pick_best_label(const std::vector<SweepRow>& rows) {
    auto ops_in = [](const std::string& label) {
        if (label == "None") return 0;
        return static_cast<int>(std::count(label.begin(), label.end(), '+')) + 1;
    };
    int best = -1;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].failed()) continue;
        if (best < 0) {
            best = static_cast<int>(i);
            continue;
        }
        const auto& cand = rows[i];
        const auto& cur = rows[static_cast<size_t>(best)];
        if (cand.accuracy > cur.accuracy ||
            (cand.accuracy == cur.accuracy &&
             (ops_in(cand.label) < ops_in(cur.label) ||
              (ops_in(cand.label) == ops_in(cur.label) && cand.label < cur.label))))
            best = static_cast<int>(i);
    }
    return best >= 0 ? rows[static_cast<size_t>(best)].label : "";
}

// Trains one freshly initialized model per technique subset on the identical
// split and records distorted-test metrics. Every row shares the same init
// seed and split, so rows differ only in the augmentation applied.
template <typename T = float>
SweepReport run_sweep(const Dataset& ds, const ModelConfig& model_cfg,
                      const TrainConfig& train_cfg, const std::vector<Technique>& universe,
                      const AugmentationPipeline& pipeline_params,
                      const SplitIndices* fixed_split = nullptr, bool verbose = false) {
    train_cfg.validate();
    model_cfg.validate();
    const auto sweep_start = std::chrono::steady_clock::now();
    const SplitIndices split =
        fixed_split ? *fixed_split : split_dataset(ds.labels(), train_cfg.seed);

    SweepReport report;
    report.dataset_name = ds.name;
    report.seed = train_cfg.seed;
    report.param_count = Model<T>(model_cfg, train_cfg.seed).count_params();
    report.config_digest = fnv1a_hex(model_cfg.to_text() + train_cfg.to_text());

    const auto pipelines = enumerate_combinations(universe, pipeline_params);
    for (const auto& pl : pipelines) {
        SweepRow row;
        row.label = pl.label();
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Model<T> model(model_cfg, train_cfg.seed);
            row.history = train(model, ds, split, pl, train_cfg);
            const Metrics m = evaluate(model, ds, split.test, train_cfg.batch_size);
            row.precision = m.precision;
            row.recall = m.recall;
            row.f1 = m.f1;
            row.accuracy = m.accuracy;
            row.stopped_epoch = row.history.stopped_epoch;
        } catch (const std::exception& e) {
            row.precision = row.recall = row.f1 = row.accuracy =
                std::numeric_limits<double>::quiet_NaN();
            row.error = e.what();
            std::cerr << "[sweep] row '" << row.label << "' failed: " << e.what() << "\n";
        }
        row.wall_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
        if (verbose)
            std::cerr << "[sweep] " << row.label << ": acc "
                      << (row.failed() ? -1.0 : row.accuracy) << " in " << row.wall_seconds
                      << "s\n";
        report.rows.push_back(std::move(row));
    }
    report.best_label = pick_best_label(report.rows);
    report.total_wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - sweep_start).count();
    return report;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

enum class ReportFormat { markdown, csv };

inline std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
    return buf;
}

inline std::string render_report(const SweepReport& r, ReportFormat format) {
    if (r.rows.empty()) throw std::invalid_argument("render_report: empty report");
    std::ostringstream os;
    if (format == ReportFormat::markdown) {
        os << "# Augmentation sweep: " << r.dataset_name << "\n\n";
        os << "seed " << r.seed << ", config digest " << r.config_digest << ", "
           << r.param_count << " trainable parameters\n\n";
        os << "| Augmentation Technique | precision | recall | f1-score | accuracy |\n";
        os << "|---|---|---|---|---|\n";
        for (const auto& row : r.rows) {
            if (row.failed()) {
                os << "| " << row.label << " | ERROR | ERROR | ERROR | ERROR |\n";
                continue;
            }
            const bool best = row.label == r.best_label;
            const std::string label = best ? "**" + row.label + "**" : row.label;
            const std::string acc = best ? "**" + format_percent(row.accuracy) + "**"
                                         : format_percent(row.accuracy);
            os << "| " << label << " | " << format_percent(row.precision) << " | "
               << format_percent(row.recall) << " | " << format_percent(row.f1) << " | " << acc
               << " |\n";
        }
        return os.str();
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf), "# dataset=%s seed=%llu digest=%s params=%lld\n",
                  r.dataset_name.c_str(), static_cast<unsigned long long>(r.seed),
                  r.config_digest.c_str(), static_cast<long long>(r.param_count));
    os << buf;
    os << "label,precision,recall,f1,accuracy,stopped_epoch,wall_seconds\n";
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                      row.label.c_str(), row.precision, row.recall, row.f1, row.accuracy,
                      row.stopped_epoch, row.wall_seconds);
        os << buf;
    }
    return os.str();
}

inline SweepReport parse_report_csv(const std::string& text) {
    SweepReport r;
    std::istringstream is(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string tok;
            while (meta >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
                if (key == "dataset") r.dataset_name = value;
                else if (key == "seed") r.seed = std::stoull(value);
                else if (key == "digest") r.config_digest = value;
                else if (key == "params") r.param_count = std::stoll(value);
            }
            continue;
        }
        if (!header_seen) {
            if (line != "label,precision,recall,f1,accuracy,stopped_epoch,wall_seconds")
                throw std::runtime_error("report csv: unexpected header: " + line);
            header_seen = true;
            continue;
        }
        SweepRow row;
        std::istringstream ls(line);
        std::string field;
        std::getline(ls, field, ',');
        row.label = field;
        auto next_double = [&]() {
            std::getline(ls, field, ',');
            return std::strtod(field.c_str(), nullptr);
        };
        row.precision = next_double();
        row.recall = next_double();
        row.f1 = next_double();
        row.accuracy = next_double();
        std::getline(ls, field, ',');
        row.stopped_epoch = std::stoi(field);
        std::getline(ls, field, ',');
        row.wall_seconds = std::strtod(field.c_str(), nullptr);
        r.rows.push_back(std::move(row));
    }
    if (!header_seen) throw std::runtime_error("report csv: missing header");
    r.best_label = pick_best_label(r.rows);
    return r;
}

}  // namespace augvit
