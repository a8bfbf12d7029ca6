#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "augvit/augment.hpp"
#include "augvit/dataio.hpp"
#include "augvit/nn/model.hpp"
#include "augvit/trainer.hpp"

namespace augvit {

// Text configuration: one block per technique plus [train]/[model]/[glyphs]
// blocks. A technique block's presence enables that technique.
//
//   [rotation]
//   min_deg = -45
//   max_deg = 45
//   [affine]
//   max_translate_frac = 0.1
//   [train]
//   learning_rate = 1e-5
//
// '#' and ';' start comments. Flags given on the command line win over file
// values.
struct AppConfig {
    AugmentationPipeline pipeline;
    TrainConfig train;
    ModelConfig model;
    GlyphSpec glyphs;
    bool distort_test = false;
    double distort_max_deg = 10.0;
    double distort_max_shift = 0.06;

    std::string digest_text() const {
        std::ostringstream os;
        os << model.to_text() << train.to_text() << "pipeline=" << pipeline.label() << "\n"
           << "pipeline_seed=" << pipeline.seed << "\n";
        return os.str();
    }
};

namespace detail {

using IniSections = std::map<std::string, std::map<std::string, std::string>>;

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline IniSections parse_ini(const std::string& text) {
    IniSections out;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            out[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        if (section.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": key outside any section");
        out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

inline double to_double(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad numeric value for " + what + ": " + s);
    }
}

inline int to_int(const std::string& s, const std::string& what) {
    const double v = to_double(s, what);
    if (v != std::floor(v)) throw std::runtime_error("config: expected integer for " + what);
    return static_cast<int>(v);
}

inline bool to_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::runtime_error("config: bad boolean for " + what + ": " + s);
}

}  // namespace detail

inline AppConfig parse_app_config(const std::string& text) {
    using detail::to_bool;
    using detail::to_double;
    using detail::to_int;
    const auto ini = detail::parse_ini(text);
    AppConfig cfg;

    for (const auto& [section, kv] : ini) {
        if (section == "clahe") {
            ClaheParams p;
            for (const auto& [k, v] : kv) {
                if (k == "tiles_x") p.tiles_x = to_int(v, "clahe.tiles_x");
                else if (k == "tiles_y") p.tiles_y = to_int(v, "clahe.tiles_y");
                else if (k == "clip_limit") p.clip_limit = to_double(v, "clahe.clip_limit");
                else if (k == "bins") p.bins = to_int(v, "clahe.bins");
                else throw std::runtime_error("config: unknown key clahe." + k);
            }
            p.validate();
            cfg.pipeline.clahe_params = p;
        } else if (section == "rotation") {
            RotationParams p;
            for (const auto& [k, v] : kv) {
                if (k == "min_deg") p.min_deg = to_double(v, "rotation.min_deg");
                else if (k == "max_deg") p.max_deg = to_double(v, "rotation.max_deg");
                else if (k == "fill") p.fill = static_cast<uint8_t>(to_int(v, "rotation.fill"));
                else throw std::runtime_error("config: unknown key rotation." + k);
            }
            p.validate();
            cfg.pipeline.rotation = p;
        } else if (section == "affine") {
            AffineParams p;
            for (const auto& [k, v] : kv) {
                if (k == "max_translate_frac")
                    p.max_translate_frac = to_double(v, "affine.max_translate_frac");
                else if (k == "max_shear_deg") p.max_shear_deg = to_double(v, "affine.max_shear_deg");
                else if (k == "fill") p.fill = static_cast<uint8_t>(to_int(v, "affine.fill"));
                else if (k == "one_sided_translate")
                    p.one_sided_translate = to_bool(v, "affine.one_sided_translate");
                else throw std::runtime_error("config: unknown key affine." + k);
            }
            p.validate();
            cfg.pipeline.affine = p;
        } else if (section == "jitter") {
            JitterParams p;
            for (const auto& [k, v] : kv) {
                if (k == "brightness") p.brightness = to_double(v, "jitter.brightness");
                else if (k == "contrast") p.contrast = to_double(v, "jitter.contrast");
                else if (k == "saturation") p.saturation = to_double(v, "jitter.saturation");
                else if (k == "hue") p.hue = to_double(v, "jitter.hue");
                else throw std::runtime_error("config: unknown key jitter." + k);
            }
            p.validate();
            cfg.pipeline.jitter = p;
        } else if (section == "train") {
            for (const auto& [k, v] : kv) {
                if (k == "max_epochs") cfg.train.max_epochs = to_int(v, "train.max_epochs");
                else if (k == "learning_rate")
                    cfg.train.learning_rate = to_double(v, "train.learning_rate");
                else if (k == "batch_size") cfg.train.batch_size = to_int(v, "train.batch_size");
                else if (k == "patience") cfg.train.patience = to_int(v, "train.patience");
                else if (k == "seed") cfg.train.seed = static_cast<uint64_t>(
                             to_double(v, "train.seed"));
                else throw std::runtime_error("config: unknown key train." + k);
            }
        } else if (section == "model") {
            auto parse4 = [&](const std::string& v, std::array<int, 4>& out,
                              const std::string& what) {
                std::istringstream ls(v);
                std::string tok;
                for (int i = 0; i < 4; ++i) {
                    if (!std::getline(ls, tok, ','))
                        throw std::runtime_error("config: " + what + " needs 4 values");
                    out[static_cast<size_t>(i)] = to_int(detail::trim(tok), what);
                }
            };
            for (const auto& [k, v] : kv) {
                if (k == "input_size") cfg.model.input_size = to_int(v, "model.input_size");
                else if (k == "stage_channels") parse4(v, cfg.model.stage_channels, "model.stage_channels");
                else if (k == "stage_depths") parse4(v, cfg.model.stage_depths, "model.stage_depths");
                else if (k == "attention_dim") cfg.model.attention_dim = to_int(v, "model.attention_dim");
                else if (k == "attention_heads")
                    cfg.model.attention_heads = to_int(v, "model.attention_heads");
                else if (k == "multiscale_kernel")
                    cfg.model.multiscale_kernel = to_int(v, "model.multiscale_kernel");
                else if (k == "expand_ratio") cfg.model.expand_ratio = to_int(v, "model.expand_ratio");
                else if (k == "num_classes") cfg.model.num_classes = to_int(v, "model.num_classes");
                else throw std::runtime_error("config: unknown key model." + k);
            }
        } else if (section == "glyphs") {
            for (const auto& [k, v] : kv) {
                if (k == "num_classes") cfg.glyphs.num_classes = to_int(v, "glyphs.num_classes");
                else if (k == "samples_per_class")
                    cfg.glyphs.samples_per_class = to_int(v, "glyphs.samples_per_class");
                else if (k == "image_size") cfg.glyphs.image_size = to_int(v, "glyphs.image_size");
                else if (k == "stroke_jitter")
                    cfg.glyphs.stroke_jitter = to_double(v, "glyphs.stroke_jitter");
                else if (k == "seed") cfg.glyphs.seed = static_cast<uint64_t>(
                             to_double(v, "glyphs.seed"));
                else throw std::runtime_error("config: unknown key glyphs." + k);
            }
        } else if (section == "distort_test") {
            for (const auto& [k, v] : kv) {
                if (k == "enabled") cfg.distort_test = to_bool(v, "distort_test.enabled");
                else if (k == "max_deg") cfg.distort_max_deg = to_double(v, "distort_test.max_deg");
                else if (k == "max_shift_frac")
                    cfg.distort_max_shift = to_double(v, "distort_test.max_shift_frac");
                else throw std::runtime_error("config: unknown key distort_test." + k);
            }
        } else {
            throw std::runtime_error("config: unknown section [" + section + "]");
        }
    }
    return cfg;
}

inline AppConfig load_app_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_app_config(text);
}

}  // namespace augvit
