#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "augvit/augment.hpp"
#include "augvit/image.hpp"
#include "augvit/png_io.hpp"
#include "augvit/rng.hpp"

namespace augvit {

struct Dataset {
    std::vector<std::pair<ImageBuffer, int>> samples;
    std::vector<std::string> class_names;
    std::string name = "dataset";

    size_t size() const { return samples.size(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.second);
        return out;
    }
};

// ---------------------------------------------------------------------------
// directory ingestion: <root>/<class_name>/*.png
// ---------------------------------------------------------------------------

inline Dataset load_image_dir(const std::string& root, int target_size) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw std::runtime_error("dataio: not a directory: " + root);

    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw std::runtime_error("dataio: no class directories under " + root);

    Dataset ds;
    ds.name = fs::path(root).filename().string();
    for (size_t ci = 0; ci < class_dirs.size(); ++ci) {
        ds.class_names.push_back(class_dirs[ci].filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[ci])) {
            if (!e.is_regular_file()) continue;
            const std::string name = e.path().filename().string();
            if (!name.empty() && name[0] == '.') continue;
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext != ".png")
                throw std::runtime_error("dataio: unsupported file format: " +
                                         e.path().string());
            files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw std::runtime_error("dataio: empty class directory: " +
                                     class_dirs[ci].string());
        for (const auto& f : files) {
            ImageBuffer img = read_png(f.string());
            if (target_size > 0) img = resize_bilinear(img, target_size, target_size);
            ds.samples.emplace_back(std::move(img), static_cast<int>(ci));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// synthetic glyph corpus
// ---------------------------------------------------------------------------

struct GlyphSpec {
    int num_classes = 10;
    int samples_per_class = 200;
    int image_size = 64;
    double stroke_jitter = 0.05;  // control-point noise as a fraction of size
    uint64_t seed = 0;

    void validate() const {
        if (num_classes < 1 || num_classes > 10)
            throw std::invalid_argument("glyphs: 1..10 classes supported");
        if (samples_per_class < 1) throw std::invalid_argument("glyphs: need samples");
        if (image_size < 16) throw std::invalid_argument("glyphs: image_size must be >= 16");
        if (stroke_jitter < 0.0) throw std::invalid_argument("glyphs: jitter must be >= 0");
    }
};

namespace detail {

struct P {
    double x, y;
};

// Stroke templates in the unit square. Arcs are sampled into polylines.
// Several pairs are deliberately near-confusable (bar vs bar-with-serif,
// ring vs ring-with-tail, cross vs plus-with-notch analog).
inline std::vector<std::vector<P>> glyph_template(int cls) {
    auto arc = [](double cx, double cy, double r, double a0, double a1, int segs) {
        std::vector<P> pts;
        for (int i = 0; i <= segs; ++i) {
            const double a = a0 + (a1 - a0) * i / segs;
            pts.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
        }
        return pts;
    };
    switch (cls) {
        case 0:  // vertical bar
            return {{{0.5, 0.15}, {0.5, 0.85}}};
        case 1:  // vertical bar with a top serif (confusable with 0)
            return {{{0.5, 0.15}, {0.5, 0.85}}, {{0.5, 0.18}, {0.72, 0.32}}};
        case 2:  // plus
            return {{{0.5, 0.2}, {0.5, 0.8}}, {{0.2, 0.5}, {0.8, 0.5}}};
        case 3:  // ring
            return {arc(0.5, 0.5, 0.3, 0.0, 2.0 * kPi, 36)};
        case 4:  // ring with a tail (confusable with 3)
            return {arc(0.5, 0.5, 0.3, 0.0, 2.0 * kPi, 36), {{0.8, 0.5}, {0.8, 0.88}}};
        case 5:  // seven
            return {{{0.25, 0.2}, {0.75, 0.2}}, {{0.75, 0.2}, {0.4, 0.8}}};
        case 6:  // cross
            return {{{0.25, 0.2}, {0.75, 0.8}}, {{0.75, 0.2}, {0.25, 0.8}}};
        case 7:  // ell
            return {{{0.3, 0.2}, {0.3, 0.8}}, {{0.3, 0.8}, {0.75, 0.8}}};
        case 8:  // cup: two stems joined by a bottom arc
            return {{{0.22, 0.2}, {0.22, 0.5}},
                    {{0.78, 0.2}, {0.78, 0.5}},
                    arc(0.5, 0.5, 0.28, 0.0, kPi, 18)};
        case 9:  // zigzag
            return {{{0.72, 0.2}, {0.28, 0.38}}, {{0.28, 0.38}, {0.72, 0.6}},
                    {{0.72, 0.6}, {0.28, 0.8}}};
        default:
            throw std::invalid_argument("glyphs: unknown class");
    }
}

inline double dist_to_segment(double px, double py, const P& a, const P& b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
    t = std::min(std::max(t, 0.0), 1.0);
    const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

// Renders one glyph sample: jittered control points, random stroke width in
// [1, 3] px, dark strokes (core < 128) on a white background, softened edge.
// With zero jitter every per-sample draw degenerates, so all samples of a
// class are pixel-identical.
inline ImageBuffer render_glyph(int cls, int image_size, double stroke_jitter, Rng& rng) {
    auto strokes = detail::glyph_template(cls);
    const double s = image_size;
    for (auto& stroke : strokes)
        for (auto& p : stroke) {
            p.x = p.x * s + rng.uniform(-stroke_jitter, stroke_jitter) * s;
            p.y = p.y * s + rng.uniform(-stroke_jitter, stroke_jitter) * s;
        }
    const double width = stroke_jitter > 0.0 ? rng.uniform(1.0, 3.0) : 2.0;
    const double half = width / 2.0;

    ImageBuffer img(image_size, image_size, 1, 255);
    for (const auto& stroke : strokes) {
        for (size_t i = 0; i + 1 < stroke.size(); ++i) {
            const auto& a = stroke[i];
            const auto& b = stroke[i + 1];
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half - 1)));
            const int x1 = std::min(image_size - 1,
                                    static_cast<int>(std::ceil(std::max(a.x, b.x) + half + 1)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half - 1)));
            const int y1 = std::min(image_size - 1,
                                    static_cast<int>(std::ceil(std::max(a.y, b.y) + half + 1)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double d = detail::dist_to_segment(x, y, a, b);
                    // coverage 1 inside the core, fading over one pixel
                    const double cov = std::min(std::max(half + 0.5 - d, 0.0), 1.0);
                    if (cov <= 0.0) continue;
                    const double ink = 235.0 * cov;  // core intensity 20
                    const double v = std::min<double>(img.at(x, y), 255.0 - ink);
                    img.at(x, y) = round_to_intensity(v);
                }
            }
        }
    }
    return img;
}

inline Dataset synth_glyphs(const GlyphSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.name = "synthetic-glyphs";
    for (int c = 0; c < spec.num_classes; ++c) ds.class_names.push_back("glyph" + std::to_string(c));
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int i = 0; i < spec.samples_per_class; ++i) {
            Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(c), static_cast<uint64_t>(i)));
            ds.samples.emplace_back(
                render_glyph(c, spec.image_size, spec.stroke_jitter, rng), c);
        }
    }
    return ds;
}

// One-shot mild geometric distortion of selected samples (rotation + shift),
// used to perturb test images at corpus generation time. Not an augmentation
// pipeline: it permanently rewrites the stored images.
inline void distort_samples(Dataset& ds, const std::vector<int>& indices, uint64_t seed,
                            double max_deg = 10.0, double max_shift_frac = 0.06) {
    for (int idx : indices) {
        auto& img = ds.samples[static_cast<size_t>(idx)].first;
        Rng rng(derive_seed(seed, 0xd157, static_cast<uint64_t>(idx)));
        const double angle = rng.uniform(-max_deg, max_deg);
        const double dx = rng.uniform(-max_shift_frac, max_shift_frac) * img.width;
        const double dy = rng.uniform(-max_shift_frac, max_shift_frac) * img.height;
        const AffineMatrix m =
            compose(AffineMatrix::translation(dx, dy), AffineMatrix::rotation(angle));
        img = apply_affine(img, m, 255);
    }
}

}  // namespace augvit
