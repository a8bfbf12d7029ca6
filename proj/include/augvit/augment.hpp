#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "augvit/image.hpp"
#include "augvit/rng.hpp"

namespace augvit {

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ClaheParams {
    int tiles_x = 8;
    int tiles_y = 8;
    double clip_limit = 2.0;  // multiple of the uniform bin height
    int bins = 256;

    void validate() const {
        if (tiles_x < 1 || tiles_y < 1) throw std::invalid_argument("clahe: tiles must be >= 1");
        if (bins < 2) throw std::invalid_argument("clahe: bins must be >= 2");
        if (!(clip_limit > 0.0)) throw std::invalid_argument("clahe: clip_limit must be > 0");
    }
};

struct RotationParams {
    double min_deg = -45.0;
    double max_deg = 45.0;
    uint8_t fill = 255;  // handwritten corpora are dark-on-light

    void validate() const {
        if (min_deg > max_deg) throw std::invalid_argument("rotation: min_deg > max_deg");
        if (min_deg <= -360.0 || max_deg >= 360.0)
            throw std::invalid_argument("rotation: range must lie within (-360, 360)");
    }
};

struct AffineParams {
    double max_translate_frac = 0.1;
    double max_shear_deg = 20.0;
    uint8_t fill = 255;
    // The source phrase "shifts in the range of 0 to 0.1" reads as a magnitude
    // bound by default; the literal one-sided range stays selectable.
    bool one_sided_translate = false;

    void validate() const {
        if (max_translate_frac < 0.0 || max_translate_frac > 1.0)
            throw std::invalid_argument("affine: max_translate_frac must be in [0, 1]");
        if (max_shear_deg < 0.0 || max_shear_deg >= 90.0)
            throw std::invalid_argument("affine: max_shear_deg must be in [0, 90)");
    }
};

struct JitterParams {
    double brightness = 0.2;
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.1;

    void validate() const {
        if (brightness < 0.0 || contrast < 0.0 || saturation < 0.0)
            throw std::invalid_argument("jitter: factors must be >= 0");
        if (hue < 0.0 || hue > 0.5) throw std::invalid_argument("jitter: hue must be in [0, 0.5]");
    }
};

// ---------------------------------------------------------------------------
// Histogram equalization and CLAHE
// ---------------------------------------------------------------------------

// Global histogram equalization: out = round(255 * CDF(v)). The reference
// mapping that CLAHE with one tile and an unreachable clip must reproduce
// bit-exactly.
inline ImageBuffer histogram_equalize(const ImageBuffer& img) {
    if (img.channels != 1)
        throw std::invalid_argument("histogram_equalize: expects a 1-channel image");
    const int64_t n = static_cast<int64_t>(img.width) * img.height;
    std::array<int64_t, 256> hist{};
    for (uint8_t v : img.pixels) hist[v]++;
    std::array<uint8_t, 256> lut{};
    int64_t cum = 0;
    for (int v = 0; v < 256; ++v) {
        cum += hist[v];
        lut[v] = round_to_intensity(255.0 * static_cast<double>(cum) / static_cast<double>(n));
    }
    ImageBuffer out(img.width, img.height, 1);
    for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = lut[img.pixels[i]];
    return out;
}

namespace detail {

// Clipped, redistributed per-tile equalization LUT.
inline std::vector<uint8_t> clahe_tile_lut(const ImageBuffer& img, int x0, int x1, int y0,
                                           int y1, const ClaheParams& p) {
    const int64_t n = static_cast<int64_t>(x1 - x0) * (y1 - y0);
    std::vector<int64_t> hist(static_cast<size_t>(p.bins), 0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            hist[static_cast<size_t>(img.at(x, y)) * p.bins / 256]++;

    const int64_t clip = static_cast<int64_t>(
        std::ceil(p.clip_limit * static_cast<double>(n) / static_cast<double>(p.bins)));
    int64_t excess = 0;
    for (auto& h : hist) {
        if (h > clip) {
            excess += h - clip;
            h = clip;
        }
    }
    // uniform redistribution; the leftover (< bins) goes one per bin from bin 0
    if (excess >= p.bins) {
        const int64_t per_bin = excess / p.bins;
        for (auto& h : hist) h += per_bin;
        excess %= p.bins;
    }
    for (int64_t b = 0; b < excess; ++b) hist[static_cast<size_t>(b)]++;

    std::vector<uint8_t> lut(256);
    int64_t cum = 0;
    int bin = 0;
    for (int v = 0; v < 256; ++v) {
        const int vbin = v * p.bins / 256;
        while (bin <= vbin) cum += hist[static_cast<size_t>(bin++)];
        lut[static_cast<size_t>(v)] =
            round_to_intensity(255.0 * static_cast<double>(cum) / static_cast<double>(n));
    }
    return lut;
}

}  // namespace detail

// Contrast limited adaptive histogram equalization. Per-tile clipped
// equalization LUTs, blended bilinearly between the four surrounding tile
// centers; pixels beyond the outermost centers use the nearest row/column.
inline ImageBuffer clahe(const ImageBuffer& img, const ClaheParams& p) {
    p.validate();
    if (img.channels != 1) throw std::invalid_argument("clahe: expects a 1-channel image");
    if (img.width < p.tiles_x || img.height < p.tiles_y)
        throw std::invalid_argument("clahe: image smaller than the tile grid");

    const int tx = p.tiles_x, ty = p.tiles_y;
    std::vector<int> bx(static_cast<size_t>(tx) + 1), by(static_cast<size_t>(ty) + 1);
    for (int i = 0; i <= tx; ++i) bx[static_cast<size_t>(i)] = static_cast<int>(
        static_cast<int64_t>(i) * img.width / tx);
    for (int i = 0; i <= ty; ++i) by[static_cast<size_t>(i)] = static_cast<int>(
        static_cast<int64_t>(i) * img.height / ty);

    std::vector<std::vector<uint8_t>> luts(static_cast<size_t>(tx) * ty);
    for (int r = 0; r < ty; ++r)
        for (int c = 0; c < tx; ++c)
            luts[static_cast<size_t>(r) * tx + c] =
                detail::clahe_tile_lut(img, bx[c], bx[c + 1], by[r], by[r + 1], p);

    std::vector<double> cx(static_cast<size_t>(tx)), cy(static_cast<size_t>(ty));
    for (int i = 0; i < tx; ++i) cx[static_cast<size_t>(i)] = 0.5 * (bx[i] + bx[i + 1] - 1);
    for (int i = 0; i < ty; ++i) cy[static_cast<size_t>(i)] = 0.5 * (by[i] + by[i + 1] - 1);

    // locate the bracketing tile centers along one axis
    auto bracket = [](const std::vector<double>& centers, double pos, int& lo, double& f) {
        const int last = static_cast<int>(centers.size()) - 1;
        if (pos <= centers[0] || last == 0) {
            lo = 0;
            f = 0.0;
            return;
        }
        if (pos >= centers[static_cast<size_t>(last)]) {
            lo = last;
            f = 0.0;
            return;
        }
        int i = last - 1;
        while (centers[static_cast<size_t>(i)] > pos) --i;
        lo = i;
        f = (pos - centers[static_cast<size_t>(i)]) /
            (centers[static_cast<size_t>(i + 1)] - centers[static_cast<size_t>(i)]);
    };

    ImageBuffer out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y) {
        int r0;
        double fy;
        bracket(cy, y, r0, fy);
        const int r1 = fy > 0.0 ? r0 + 1 : r0;
        for (int x = 0; x < img.width; ++x) {
            int c0;
            double fx;
            bracket(cx, x, c0, fx);
            const int c1 = fx > 0.0 ? c0 + 1 : c0;
            const uint8_t v = img.at(x, y);
            const double m00 = luts[static_cast<size_t>(r0) * tx + c0][v];
            const double m01 = luts[static_cast<size_t>(r0) * tx + c1][v];
            const double m10 = luts[static_cast<size_t>(r1) * tx + c0][v];
            const double m11 = luts[static_cast<size_t>(r1) * tx + c1][v];
            const double top = (1.0 - fx) * m00 + fx * m01;
            const double bot = (1.0 - fx) * m10 + fx * m11;
            out.at(x, y) = round_to_intensity((1.0 - fy) * top + fy * bot);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geometric warps
// ---------------------------------------------------------------------------

// Row-major 2x3 affine transform about the image center: a point p (relative
// to the center) in the source maps to linear*p + translation in the output.
struct AffineMatrix {
    double a00 = 1.0, a01 = 0.0, tx = 0.0;
    double a10 = 0.0, a11 = 1.0, ty = 0.0;

    static AffineMatrix identity() { return {}; }

    static AffineMatrix translation(double dx, double dy) {
        AffineMatrix m;
        m.tx = dx;
        m.ty = dy;
        return m;
    }

    static AffineMatrix shear_x(double deg) {
        AffineMatrix m;
        m.a01 = std::tan(deg_to_rad(deg));
        return m;
    }

    static AffineMatrix rotation(double deg) {
        // positive = counter-clockwise with row 0 at the top
        AffineMatrix m;
        const double c = std::cos(deg_to_rad(deg)), s = std::sin(deg_to_rad(deg));
        m.a00 = c;
        m.a01 = s;
        m.a10 = -s;
        m.a11 = c;
        return m;
    }

    double det() const { return a00 * a11 - a01 * a10; }

    bool operator==(const AffineMatrix&) const = default;
};

// b after a: apply `a` first, then `b`.
inline AffineMatrix compose(const AffineMatrix& b, const AffineMatrix& a) {
    AffineMatrix m;
    m.a00 = b.a00 * a.a00 + b.a01 * a.a10;
    m.a01 = b.a00 * a.a01 + b.a01 * a.a11;
    m.a10 = b.a10 * a.a00 + b.a11 * a.a10;
    m.a11 = b.a10 * a.a01 + b.a11 * a.a11;
    m.tx = b.a00 * a.tx + b.a01 * a.ty + b.tx;
    m.ty = b.a10 * a.tx + b.a11 * a.ty + b.ty;
    return m;
}

// Inverse-warp about the image center. The identity matrix reproduces the
// input bit-exactly (integer source coordinates, single rounding).
inline ImageBuffer apply_affine(const ImageBuffer& img, const AffineMatrix& m, uint8_t fill) {
    const double det = m.det();
    if (std::abs(det) < 1e-12)
        throw std::invalid_argument("apply_affine: singular linear part");
    const double i00 = m.a11 / det, i01 = -m.a01 / det;
    const double i10 = -m.a10 / det, i11 = m.a00 / det;
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    ImageBuffer out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx - m.tx;
            const double dy = y - cy - m.ty;
            const double sx = i00 * dx + i01 * dy + cx;
            const double sy = i10 * dx + i11 * dy + cy;
            const auto v = bilinear_sample(img, sx, sy, fill);
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = v[static_cast<size_t>(c)];
        }
    }
    return out;
}

inline ImageBuffer rotate(const ImageBuffer& img, double angle_deg, uint8_t fill) {
    if (!std::isfinite(angle_deg)) throw std::invalid_argument("rotate: angle must be finite");
    return apply_affine(img, AffineMatrix::rotation(angle_deg), fill);
}

// ---------------------------------------------------------------------------
// Color jitter
// ---------------------------------------------------------------------------

namespace detail {

inline void rgb_to_hsv_real(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    h = 0.0;
    if (d > 0.0) {
        if (mx == r)
            h = (g - b) / d;
        else if (mx == g)
            h = 2.0 + (b - r) / d;
        else
            h = 4.0 + (r - g) / d;
        h /= 6.0;
        if (h < 0.0) h += 1.0;
        if (h >= 1.0) h -= 1.0;
    }
}

inline void hsv_to_rgb_real(double h, double s, double v, double& r, double& g, double& b) {
    if (s <= 0.0) {
        r = g = b = v;
        return;
    }
    h -= std::floor(h);
    double hh = h * 6.0;
    int sector = static_cast<int>(hh);
    if (sector > 5) sector = 5;
    const double f = hh - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace detail

// Deterministic application in the fixed order brightness -> contrast ->
// saturation -> hue. All arithmetic happens on a real-valued copy; each
// output intensity is rounded exactly once.
inline ImageBuffer color_jitter_apply(const ImageBuffer& img, double b, double c, double s,
                                      double h) {
    if (b < 0.0 || c < 0.0 || s < 0.0)
        throw std::invalid_argument("color_jitter_apply: factors must be >= 0");
    if (h < -0.5 || h > 0.5)
        throw std::invalid_argument("color_jitter_apply: hue shift must be in [-0.5, 0.5]");

    const size_t n = img.pixels.size();
    std::vector<double> buf(n);
    for (size_t i = 0; i < n; ++i) buf[i] = img.pixels[i];
    auto clamp255 = [](double v) { return std::min(std::max(v, 0.0), 255.0); };

    // brightness
    for (auto& v : buf) v = clamp255(v * b);

    // contrast: blend toward the mean of the grayscale rendering
    const size_t npix = static_cast<size_t>(img.width) * img.height;
    double mean_gray = 0.0;
    if (img.channels == 1) {
        for (size_t i = 0; i < n; ++i) mean_gray += buf[i];
    } else {
        for (size_t i = 0; i < npix; ++i)
            mean_gray += luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
    }
    mean_gray /= static_cast<double>(npix);
    for (auto& v : buf) v = clamp255(mean_gray + c * (v - mean_gray));

    if (img.channels == 3) {
        // saturation: per-pixel blend toward its own gray value
        for (size_t i = 0; i < npix; ++i) {
            const double g = luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
            for (int ch = 0; ch < 3; ++ch)
                buf[3 * i + ch] = clamp255(g + s * (buf[3 * i + ch] - g));
        }
        // hue: additive shift on the hue circle
        if (h != 0.0) {
            for (size_t i = 0; i < npix; ++i) {
                double hh, ss, vv;
                detail::rgb_to_hsv_real(buf[3 * i] / 255.0, buf[3 * i + 1] / 255.0,
                                        buf[3 * i + 2] / 255.0, hh, ss, vv);
                double r, g, bl;
                detail::hsv_to_rgb_real(hh + h, ss, vv, r, g, bl);
                buf[3 * i] = r * 255.0;
                buf[3 * i + 1] = g * 255.0;
                buf[3 * i + 2] = bl * 255.0;
            }
        }
    }

    ImageBuffer out(img.width, img.height, img.channels);
    for (size_t i = 0; i < n; ++i) out.pixels[i] = round_to_intensity(buf[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Seeded parameter samplers
// ---------------------------------------------------------------------------

inline double sample_rotation(const RotationParams& p, Rng& rng) {
    p.validate();
    return rng.uniform(p.min_deg, p.max_deg);
}

// Shear along x, then translation; draw order dx, dy, shear.
inline AffineMatrix sample_affine(const AffineParams& p, int width, int height, Rng& rng) {
    p.validate();
    const double fx = p.max_translate_frac * width;
    const double fy = p.max_translate_frac * height;
    const double dx = p.one_sided_translate ? rng.uniform(0.0, fx) : rng.uniform(-fx, fx);
    const double dy = p.one_sided_translate ? rng.uniform(0.0, fy) : rng.uniform(-fy, fy);
    const double shear = rng.uniform(-p.max_shear_deg, p.max_shear_deg);
    return compose(AffineMatrix::translation(dx, dy), AffineMatrix::shear_x(shear));
}

struct JitterFactors {
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;
};

inline JitterFactors sample_jitter(const JitterParams& p, Rng& rng) {
    p.validate();
    JitterFactors f;
    f.brightness = rng.uniform(std::max(0.0, 1.0 - p.brightness), 1.0 + p.brightness);
    f.contrast = rng.uniform(std::max(0.0, 1.0 - p.contrast), 1.0 + p.contrast);
    f.saturation = rng.uniform(std::max(0.0, 1.0 - p.saturation), 1.0 + p.saturation);
    f.hue = rng.uniform(-p.hue, p.hue);
    return f;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

// Listed in the display/label order of the result tables. The application
// order is fixed independently: CLAHE -> RandomRotation -> RandomAffine ->
// ColorJitter.
enum class Technique { RandomRotation = 0, RandomAffine = 1, Clahe = 2, ColorJitter = 3 };

inline const char* technique_abbrev(Technique t) {
    switch (t) {
        case Technique::RandomRotation: return "RR";
        case Technique::RandomAffine: return "RA";
        case Technique::Clahe: return "C";
        case Technique::ColorJitter: return "CJ";
    }
    throw std::invalid_argument("unknown technique");
}

inline Technique technique_from_abbrev(const std::string& s) {
    if (s == "RR") return Technique::RandomRotation;
    if (s == "RA") return Technique::RandomAffine;
    if (s == "C") return Technique::Clahe;
    if (s == "CJ") return Technique::ColorJitter;
    throw std::invalid_argument("unknown technique abbreviation: " + s);
}

constexpr std::array<Technique, 4> kAllTechniques = {
    Technique::RandomRotation, Technique::RandomAffine, Technique::Clahe,
    Technique::ColorJitter};

// An ordered, seeded selection of the four kernels. Each technique appears at
// most once; whatever the construction order, application follows the
// canonical order above. apply() is const and safe to call concurrently:
// every (epoch, sample) pair gets its own derived substream.
struct AugmentationPipeline {
    std::optional<ClaheParams> clahe_params;
    std::optional<RotationParams> rotation;
    std::optional<AffineParams> affine;
    std::optional<JitterParams> jitter;
    uint64_t seed = 0;

    // instrumentation: total apply() invocations (training isolation checks)
    mutable std::atomic<uint64_t> apply_count{0};

    AugmentationPipeline() = default;
    AugmentationPipeline(const AugmentationPipeline& o)
        : clahe_params(o.clahe_params),
          rotation(o.rotation),
          affine(o.affine),
          jitter(o.jitter),
          seed(o.seed),
          apply_count(o.apply_count.load()) {}
    AugmentationPipeline& operator=(const AugmentationPipeline& o) {
        clahe_params = o.clahe_params;
        rotation = o.rotation;
        affine = o.affine;
        jitter = o.jitter;
        seed = o.seed;
        apply_count.store(o.apply_count.load());
        return *this;
    }

    bool enabled(Technique t) const {
        switch (t) {
            case Technique::RandomRotation: return rotation.has_value();
            case Technique::RandomAffine: return affine.has_value();
            case Technique::Clahe: return clahe_params.has_value();
            case Technique::ColorJitter: return jitter.has_value();
        }
        return false;
    }

    void enable(Technique t) {
        switch (t) {
            case Technique::RandomRotation: rotation.emplace(); break;
            case Technique::RandomAffine: affine.emplace(); break;
            case Technique::Clahe: clahe_params.emplace(); break;
            case Technique::ColorJitter: jitter.emplace(); break;
        }
    }

    int op_count() const {
        int n = 0;
        for (Technique t : kAllTechniques) n += enabled(t) ? 1 : 0;
        return n;
    }

    // "None" or "+"-joined abbreviations in table order, e.g. "RA + CJ".
    std::string label() const {
        std::string out;
        for (Technique t : kAllTechniques) {
            if (!enabled(t)) continue;
            if (!out.empty()) out += " + ";
            out += technique_abbrev(t);
        }
        return out.empty() ? "None" : out;
    }

    void validate() const {
        if (clahe_params) clahe_params->validate();
        if (rotation) rotation->validate();
        if (affine) affine->validate();
        if (jitter) jitter->validate();
    }

    // Applies the enabled kernels in canonical order, drawing parameters
    // from `rng` in that same order. Empty pipeline returns the input
    // bit-exactly.
    ImageBuffer apply(const ImageBuffer& img, Rng& rng) const {
        apply_count.fetch_add(1, std::memory_order_relaxed);
        ImageBuffer cur = img;
        if (clahe_params) cur = apply_clahe(cur, *clahe_params);
        if (rotation) cur = rotate(cur, sample_rotation(*rotation, rng), rotation->fill);
        if (affine)
            cur = apply_affine(cur, sample_affine(*affine, cur.width, cur.height, rng),
                               affine->fill);
        if (jitter) {
            const JitterFactors f = sample_jitter(*jitter, rng);
            cur = color_jitter_apply(cur, f.brightness, f.contrast, f.saturation, f.hue);
        }
        return cur;
    }

    ImageBuffer apply(const ImageBuffer& img, uint64_t epoch, uint64_t sample_index) const {
        Rng rng(derive_seed(seed, epoch, sample_index));
        return apply(img, rng);
    }

    // CLAHE on color inputs runs on the value plane of the HSV representation.
    static ImageBuffer apply_clahe(const ImageBuffer& img, const ClaheParams& p) {
        if (img.channels == 1) return clahe(img, p);
        ImageBuffer vplane(img.width, img.height, 1);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                vplane.at(x, y) = std::max({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
        const ImageBuffer eq = clahe(vplane, p);
        ImageBuffer out(img.width, img.height, 3);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                HsvPixel hsv = rgb_to_hsv(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
                hsv.v = eq.at(x, y) / 255.0;
                const auto rgb = hsv_to_rgb(hsv);
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb[static_cast<size_t>(c)];
            }
        }
        return out;
    }
};

// All 2^n technique subsets (empty set first), ordered by subset size and
// then by position in `universe`; with the default universe this reproduces
// the result-table row order None, RR, RA, C, CJ, RR + RA, ...
inline std::vector<AugmentationPipeline> enumerate_combinations(
    const std::vector<Technique>& universe, const AugmentationPipeline& params) {
    const int n = static_cast<int>(universe.size());
    if (n < 1 || n > 8)
        throw std::invalid_argument("enumerate_combinations: need 1..8 techniques");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (universe[static_cast<size_t>(i)] == universe[static_cast<size_t>(j)])
                throw std::invalid_argument("enumerate_combinations: duplicate technique");

    // subsets of size k in lexicographic index order
    std::vector<std::vector<int>> subsets;
    for (int k = 0; k <= n; ++k) {
        std::vector<int> idx(static_cast<size_t>(k));
        std::iota(idx.begin(), idx.end(), 0);
        for (;;) {
            subsets.push_back(idx);
            if (k == 0) break;
            int i = k - 1;
            while (i >= 0 && idx[static_cast<size_t>(i)] == n - k + i) --i;
            if (i < 0) break;
            ++idx[static_cast<size_t>(i)];
            for (int j = i + 1; j < k; ++j)
                idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
        }
    }

    std::vector<AugmentationPipeline> out;
    out.reserve(subsets.size());
    for (const auto& subset : subsets) {
        AugmentationPipeline pl;
        pl.seed = params.seed;
        for (int i : subset) {
            switch (universe[static_cast<size_t>(i)]) {
                case Technique::RandomRotation:
                    pl.rotation = params.rotation ? *params.rotation : RotationParams{};
                    break;
                case Technique::RandomAffine:
                    pl.affine = params.affine ? *params.affine : AffineParams{};
                    break;
                case Technique::Clahe:
                    pl.clahe_params = params.clahe_params ? *params.clahe_params : ClaheParams{};
                    break;
                case Technique::ColorJitter:
                    pl.jitter = params.jitter ? *params.jitter : JitterParams{};
                    break;
            }
        }
        out.push_back(pl);
    }
    return out;
}

inline std::vector<Technique> default_universe() {
    return {kAllTechniques.begin(), kAllTechniques.end()};
}

}  // namespace augvit
