#include <catch2/catch_amalgamated.hpp>

#include "augvit/gradcam.hpp"
#include "augvit/rng.hpp"

using namespace augvit;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.input_size = 32;
    cfg.stage_channels = {4, 8, 8, 8};
    cfg.stage_depths = {1, 1, 1, 1};
    cfg.attention_dim = 8;
    cfg.attention_heads = 2;
    cfg.multiscale_kernel = 3;
    cfg.expand_ratio = 2;
    cfg.num_classes = 4;
    return cfg;
}

ImageBuffer random_image(int w, int h, int c, Rng& rng) {
    ImageBuffer img(w, h, c);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.next_below(256));
    return img;
}

}  // namespace

TEST_CASE("cam map shape equals the stage-4 spatial shape, values in [0,1]") {
    Model<float> m(small_config(), 71);
    Rng rng(501);
    const ImageBuffer img = random_image(32, 32, 1, rng);
    const CamMap cam = gradcam(m, img, 2);
    CHECK(cam.width == m.stage_spatial(3));
    CHECK(cam.height == m.stage_spatial(3));
    CHECK(cam.target_class == 2);
    CHECK(cam.source_layer == "stage4");
    REQUIRE(cam.values.size() == static_cast<size_t>(cam.width) * cam.height);
    double mx = 0.0;
    for (double v : cam.values) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        mx = std::max(mx, v);
    }
    // max is exactly 1 unless the raw map was identically zero
    CHECK((mx == 1.0 || mx == 0.0));
}

TEST_CASE("gradcam accepts differently sized inputs by resizing") {
    Model<float> m(small_config(), 72);
    Rng rng(502);
    const ImageBuffer img = random_image(57, 41, 3, rng);
    const CamMap cam = gradcam(m, img, 0);
    CHECK(cam.width == m.stage_spatial(3));
}

TEST_CASE("the source layer override selects earlier pyramid stages") {
    Model<float> m(small_config(), 77);
    Rng rng(508);
    const ImageBuffer img = random_image(32, 32, 1, rng);
    for (int stage : {2, 3, 4}) {
        const CamMap cam = gradcam(m, img, 1, stage);
        CHECK(cam.width == m.stage_spatial(stage - 1));
        CHECK(cam.source_layer == "stage" + std::to_string(stage));
    }
    CHECK_THROWS_AS(gradcam(m, img, 1, 5), std::invalid_argument);
}

TEST_CASE("gradcam is deterministic for fixed weights and input") {
    Model<float> m(small_config(), 73);
    Rng rng(503);
    const ImageBuffer img = random_image(32, 32, 1, rng);
    const CamMap a = gradcam(m, img, 1);
    const CamMap b = gradcam(m, img, 1);
    REQUIRE(a.values == b.values);
}

TEST_CASE("an all-zero model yields an all-zero normalized map") {
    Model<float> m(small_config(), 74);
    for (auto* p : m.parameters())
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
    Rng rng(504);
    const ImageBuffer img = random_image(32, 32, 1, rng);
    const CamMap cam = gradcam(m, img, 0);
    for (double v : cam.values) REQUIRE(v == 0.0);
}

TEST_CASE("a spatially constant stage-4 map normalizes to a constant map") {
    Model<float> m(small_config(), 75);
    // zero every backbone weight and BN affine, then give the stage-4 output
    // a constant positive value through the final projection BN shift
    for (auto* p : m.parameters()) {
        if (p->name.rfind("head.", 0) == 0) continue;  // leave the head intact
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
    }
    for (auto* p : m.parameters())
        if (p->name == "stage4.block0.ffn.bn3.beta")
            std::fill(p->value.data.begin(), p->value.data.end(), 1.0f);
    Rng rng(505);
    const ImageBuffer img = random_image(32, 32, 1, rng);
    const CamMap cam = gradcam(m, img, 0);
    const double v0 = cam.values[0];
    for (double v : cam.values) REQUIRE(v == Catch::Approx(v0).margin(1e-12));
    CHECK((v0 == 0.0 || v0 == 1.0));
}

TEST_CASE("gradcam rejects uninitialized models and bad classes") {
    Model<float> shell;
    Rng rng(506);
    const ImageBuffer img = random_image(32, 32, 1, rng);
    CHECK_THROWS_AS(gradcam(shell, img, 0), std::logic_error);

    Model<float> m(small_config(), 76);
    CHECK_THROWS_AS(gradcam(m, img, 99), std::invalid_argument);
    CHECK_THROWS_AS(gradcam(m, img, -1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// overlay
// ---------------------------------------------------------------------------

TEST_CASE("overlay of an all-zero map is the half blend with the ramp zero color") {
    CamMap cam;
    cam.width = 4;
    cam.height = 4;
    cam.values.assign(16, 0.0);
    Rng rng(507);
    const ImageBuffer img = random_image(20, 16, 1, rng);
    const ImageBuffer out = overlay(cam, img);
    REQUIRE(out.width == img.width);
    REQUIRE(out.height == img.height);
    REQUIRE(out.channels == 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double gray = img.at(x, y);
            REQUIRE(out.at(x, y, 0) == round_to_intensity(0.5 * gray));          // ramp r = 0
            REQUIRE(out.at(x, y, 1) == round_to_intensity(0.5 * gray));          // ramp g = 0
            REQUIRE(out.at(x, y, 2) == round_to_intensity(0.5 * gray + 127.5));  // ramp b = 255
        }
}

TEST_CASE("the peak map location is the reddest overlay region") {
    CamMap cam;
    cam.width = 4;
    cam.height = 4;
    cam.values.assign(16, 0.0);
    cam.values[static_cast<size_t>(1) * 4 + 2] = 1.0;  // peak at map cell (2, 1)
    const ImageBuffer img(32, 32, 1, 128);
    const ImageBuffer out = overlay(cam, img);
    int best_x = -1, best_y = -1, best_score = -1000;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const int score = int(out.at(x, y, 0)) - int(out.at(x, y, 2));
            if (score > best_score) {
                best_score = score;
                best_x = x;
                best_y = y;
            }
        }
    // map cell (2,1) of a 4x4 map over 32x32 pixels covers x in [16,24), y in [8,16)
    CHECK(best_x >= 16);
    CHECK(best_x < 24);
    CHECK(best_y >= 8);
    CHECK(best_y < 16);
}
