#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "augvit/image.hpp"
#include "augvit/nn/model.hpp"

namespace augvit {

// Gradient-weighted class activation map over the deepest backbone feature
// map (stage-4 output, before head fusion). Values normalized to [0, 1];
// an identically-zero raw map stays all zeros.
struct CamMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    std::string source_layer = "stage4";
    int target_class = -1;

    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

// `source_stage` overrides the instrumented layer (stage 2, 3 or 4 output).
template <typename T>
CamMap gradcam(Model<T>& model, const ImageBuffer& img, int target_class,
               int source_stage = 4) {
    if (!model.initialized()) throw std::logic_error("gradcam: uninitialized model");
    if (target_class < 0 || target_class >= model.config().num_classes)
        throw std::invalid_argument("gradcam: target class out of range");
    if (source_stage < 2 || source_stage > 4)
        throw std::invalid_argument("gradcam: source stage must be 2, 3 or 4");

    const int S = model.config().input_size;
    const ImageBuffer sized =
        (img.width == S && img.height == S) ? img : resize_bilinear(img, S, S);
    Tensor<T> batch({1, 3, S, S});
    const Tensor<T> t = to_tensor<T>(sized, 3);
    std::copy(t.data.begin(), t.data.end(), batch.data.begin());

    Tape<T> tape;
    typename Model<T>::ForwardTaps taps;
    const auto logits = model.forward(tape, batch, false, &taps);
    tape.backward(tape.select(logits, 0, target_class));

    const auto tapped = taps.stage(source_stage);
    const Tensor<T>& act = tape.val(tapped);    // [1, C, h, w]
    const Tensor<T>& grad = tape.grad(tapped);
    const int C = act.dim(1), h = act.dim(2), w = act.dim(3);
    const size_t plane = static_cast<size_t>(h) * w;

    CamMap cam;
    cam.height = h;
    cam.width = w;
    cam.target_class = target_class;
    cam.source_layer = "stage" + std::to_string(source_stage);
    cam.values.assign(plane, 0.0);

    for (int c = 0; c < C; ++c) {
        const T* g = &grad.data[static_cast<size_t>(c) * plane];
        const T* a = &act.data[static_cast<size_t>(c) * plane];
        double weight = 0.0;  // spatial mean of the gradient
        for (size_t i = 0; i < plane; ++i) weight += static_cast<double>(g[i]);
        weight /= static_cast<double>(plane);
        for (size_t i = 0; i < plane; ++i) cam.values[i] += weight * static_cast<double>(a[i]);
    }
    double mx = 0.0;
    for (auto& v : cam.values) {
        v = std::max(v, 0.0);
        mx = std::max(mx, v);
    }
    if (mx > 0.0)
        for (auto& v : cam.values) v /= mx;
    return cam;
}

// Fixed blue-to-red ramp.
inline std::array<uint8_t, 3> cam_ramp(double t) {
    t = std::min(std::max(t, 0.0), 1.0);
    return {round_to_intensity(255.0 * t), 0, round_to_intensity(255.0 * (1.0 - t))};
}

// Map upsampled to the image size, colored through the ramp, alpha-blended at
// 0.5 over the grayscale rendering of the input.
inline ImageBuffer overlay(const CamMap& map, const ImageBuffer& img) {
    if (map.width < 1 || map.height < 1 || map.values.empty())
        throw std::invalid_argument("overlay: empty map");
    ImageBuffer out(img.width, img.height, 3);
    const double sx = static_cast<double>(map.width) / img.width;
    const double sy = static_cast<double>(map.height) / img.height;
    for (int y = 0; y < img.height; ++y) {
        const double my = std::min(std::max((y + 0.5) * sy - 0.5, 0.0), map.height - 1.0);
        const int y0 = static_cast<int>(my);
        const int y1 = std::min(y0 + 1, map.height - 1);
        const double fy = my - y0;
        for (int x = 0; x < img.width; ++x) {
            const double mx = std::min(std::max((x + 0.5) * sx - 0.5, 0.0), map.width - 1.0);
            const int x0 = static_cast<int>(mx);
            const int x1 = std::min(x0 + 1, map.width - 1);
            const double fx = mx - x0;
            const double v = (1 - fy) * ((1 - fx) * map.at(x0, y0) + fx * map.at(x1, y0)) +
                             fy * ((1 - fx) * map.at(x0, y1) + fx * map.at(x1, y1));
            const auto ramp = cam_ramp(v);
            const double gray = pixel_luma(img, x, y);
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) =
                    round_to_intensity(0.5 * gray + 0.5 * ramp[static_cast<size_t>(c)]);
        }
    }
    return out;
}

}  // namespace augvit
