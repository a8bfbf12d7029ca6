#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "augvit/tensor.hpp"

namespace augvit {

// Real -> 8-bit intensity: round half away from zero, then clamp.
inline uint8_t round_to_intensity(double v) {
    long r = std::lround(v);
    if (r < 0) r = 0;
    if (r > 255) r = 255;
    return static_cast<uint8_t>(r);
}

// 8-bit raster, row-major interleaved, 1 (gray) or 3 (RGB) channels.
// Pixel (x, y) has continuous coordinates exactly (x, y): pixel centers
// sit at integer coordinates, so identity warps are bit-exact.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;

    ImageBuffer() = default;

    ImageBuffer(int w, int h, int c, uint8_t fill = 0)
        : width(w), height(h), channels(c) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("image dims must be positive");
        if (c != 1 && c != 3) throw std::invalid_argument("channels must be 1 or 3");
        pixels.assign(static_cast<size_t>(w) * h * c, fill);
    }

    size_t index(int x, int y, int c = 0) const {
        return (static_cast<size_t>(y) * width + x) * channels + c;
    }
    uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
    uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width && y >= 0 && y < height;
    }

    bool operator==(const ImageBuffer& o) const {
        return width == o.width && height == o.height && channels == o.channels &&
               pixels == o.pixels;
    }
};

struct HsvPixel {
    double h = 0.0;  // fraction of the hue circle, [0, 1)
    double s = 0.0;  // [0, 1]
    double v = 0.0;  // [0, 1]
};

// Hexcone HSV. Composed with hsv_to_rgb this round-trips every 8-bit RGB
// triple exactly (the sector algebra is an identity; fp error is ~1e-15,
// far below the 0.5 needed to move an integer).
inline HsvPixel rgb_to_hsv(uint8_t r8, uint8_t g8, uint8_t b8) {
    const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    HsvPixel p;
    p.v = mx;
    p.s = (mx > 0.0) ? d / mx : 0.0;
    if (d > 0.0) {
        double h;
        if (mx == r)
            h = (g - b) / d;
        else if (mx == g)
            h = 2.0 + (b - r) / d;
        else
            h = 4.0 + (r - g) / d;
        h /= 6.0;
        if (h < 0.0) h += 1.0;
        if (h >= 1.0) h -= 1.0;
        p.h = h;
    }
    return p;
}

inline std::array<uint8_t, 3> hsv_to_rgb(const HsvPixel& p) {
    const double v = p.v;
    if (p.s <= 0.0) {
        uint8_t g = round_to_intensity(v * 255.0);
        return {g, g, g};
    }
    double h = p.h - std::floor(p.h);  // wrap to [0, 1)
    double hh = h * 6.0;
    int sector = static_cast<int>(hh);
    if (sector > 5) sector = 5;
    const double f = hh - sector;
    const double pp = v * (1.0 - p.s);
    const double q = v * (1.0 - p.s * f);
    const double t = v * (1.0 - p.s * (1.0 - f));
    double r, g, b;
    switch (sector) {
        case 0: r = v; g = t; b = pp; break;
        case 1: r = q; g = v; b = pp; break;
        case 2: r = pp; g = v; b = t; break;
        case 3: r = pp; g = q; b = v; break;
        case 4: r = t; g = pp; b = v; break;
        default: r = v; g = pp; b = q; break;
    }
    return {round_to_intensity(r * 255.0), round_to_intensity(g * 255.0),
            round_to_intensity(b * 255.0)};
}

// ITU-R BT.601 luma, in [0, 255] real.
inline double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline double pixel_luma(const ImageBuffer& img, int x, int y) {
    if (img.channels == 1) return img.at(x, y);
    return luma(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
}

// Weighted average of the 4 nearest pixel centers; neighbours outside the
// image contribute `fill`. Coordinates fully outside
// [-0.5, W-0.5] x [-0.5, H-0.5] therefore return fill in every channel.
// Unrounded; the rounding variant below is the public sampling op.
inline std::array<double, 3> bilinear_sample_real(const ImageBuffer& img, double x, double y,
                                                  uint8_t fill) {
    if (x < -0.5 || x > img.width - 0.5 || y < -0.5 || y > img.height - 0.5)
        return {double(fill), double(fill), double(fill)};
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const double w00 = (1.0 - fx) * (1.0 - fy);
    const double w01 = fx * (1.0 - fy);
    const double w10 = (1.0 - fx) * fy;
    const double w11 = fx * fy;
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (int c = 0; c < img.channels; ++c) {
        const double v00 = img.in_bounds(x0, y0) ? img.at(x0, y0, c) : fill;
        const double v01 = img.in_bounds(x0 + 1, y0) ? img.at(x0 + 1, y0, c) : fill;
        const double v10 = img.in_bounds(x0, y0 + 1) ? img.at(x0, y0 + 1, c) : fill;
        const double v11 = img.in_bounds(x0 + 1, y0 + 1) ? img.at(x0 + 1, y0 + 1, c) : fill;
        out[c] = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11;
    }
    return out;
}

inline std::array<uint8_t, 3> bilinear_sample(const ImageBuffer& img, double x, double y,
                                              uint8_t fill) {
    const auto real = bilinear_sample_real(img, x, y, fill);
    std::array<uint8_t, 3> out{0, 0, 0};
    for (int c = 0; c < img.channels; ++c) out[c] = round_to_intensity(real[c]);
    return out;
}

// Bilinear resize with pixel-center alignment. Identity when sizes match.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int out_w, int out_h) {
    if (out_w == img.width && out_h == img.height) return img;
    ImageBuffer out(out_w, out_h, img.channels);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double src_x = (x + 0.5) * sx - 0.5;
            // clamp to edge: resize never blends with a fill colour
            const double cx = std::min(std::max(src_x, 0.0), img.width - 1.0);
            const double cy = std::min(std::max(src_y, 0.0), img.height - 1.0);
            const auto v = bilinear_sample_real(img, cx, cy, 0);
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = round_to_intensity(v[c]);
        }
    }
    return out;
}

// Image -> (C, H, W) tensor of intensity/255. out_channels 0 keeps the
// native channel count; 3 replicates grayscale for the model input path.
template <typename T>
Tensor<T> to_tensor(const ImageBuffer& img, int out_channels = 0) {
    int ch = out_channels == 0 ? img.channels : out_channels;
    if (ch != img.channels && !(img.channels == 1 && ch == 3))
        throw std::invalid_argument("to_tensor: unsupported channel conversion");
    Tensor<T> t({ch, img.height, img.width});
    for (int c = 0; c < ch; ++c) {
        const int src_c = img.channels == 1 ? 0 : c;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at(c, y, x) = static_cast<T>(img.at(x, y, src_c) / T(255));
    }
    return t;
}

}  // namespace augvit
