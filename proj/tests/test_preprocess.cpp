#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "softply/preprocess.hpp"

using namespace softply;
using namespace softply::preprocess;

namespace {

DepthImage random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> z(0.3f, 2.3f);
    DepthImage img(w, h);
    for (float& v : img.values) v = z(rng);
    return img;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("threshold bounds are inclusive") {
    DepthImage img(4, 1);
    img.values = {0.49f, 0.5f, 2.0f, 2.01f};
    const auto t = threshold(img, 0.5, 2.0);
    CHECK(t.values == std::vector<float>{0.0f, 0.5f, 2.0f, 0.0f});
    CHECK_THROWS_AS(threshold(img, 1.0, 1.0), PreprocessError);
}

TEST_CASE("mask matches the half-plane oracle") {
    const DepthImage img = random_image(160, 120, 1);
    const std::vector<std::pair<PixelPoint, PixelPoint>> lines{
        {{10.0, 30.0}, {150.0, 30.0}}, {{20.3, 50.7}, {140.1, 20.2}}, {{140.0, 90.0}, {15.0, 40.0}},
        {{0.0, 119.0}, {159.0, 0.5}}};
    for (const auto& [a, b] : lines) {
        for (double off : {0.0, 2.0, 5.5}) {
            const auto m = mask_above_line(img, a, b, off);
            int mismatches = 0;
            for (int v = 0; v < 120; ++v)
                for (int u = 0; u < 160; ++u) {
                    const bool zeroed = oracle::above_line(a, b, off, u, v);
                    mismatches += m.at(u, v) != (zeroed ? 0.0f : img.at(u, v));
                }
            CHECK(mismatches == 0);
        }
    }
}

TEST_CASE("mask rejects degenerate lines") {
    const DepthImage img(8, 8, 1.0f);
    CHECK_THROWS_AS(mask_above_line(img, {3, 3}, {3, 3}, 0), PreprocessError);
    CHECK_THROWS_AS(mask_above_line(img, {3, 1}, {3, 6}, 0), PreprocessError);
}

TEST_CASE("crop-resize equals exact box filtering") {
    const DepthImage img = random_image(160, 120, 2);
    for (const Rect& r : {Rect{20, 0, 120, 120}, Rect{0, 0, 160, 120}, Rect{7, 3, 64, 64}, Rect{5, 10, 33, 47}}) {
        const auto ours = crop_resize(img, r, 64);
        const auto ref = oracle::box_downsample(img, r, 64);
        double worst = 0.0;
        for (std::size_t i = 0; i < ours.values.size(); ++i)
            worst = std::max(worst, static_cast<double>(std::abs(ours.values[i] - ref.values[i])));
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("zeros take part in the average") {
    DepthImage img(4, 4, 1.0f);
    img.at(0, 0) = 0.0f;
    const auto r = crop_resize(img, {0, 0, 4, 4}, 2);
    CHECK(r.at(0, 0) == doctest::Approx(0.75));
    CHECK(r.at(1, 1) == 1.0f);
}

TEST_CASE("crop outside the image is rejected") {
    const DepthImage img(160, 120);
    CHECK_THROWS_AS(crop_resize(img, {50, 0, 120, 120}, 64), PreprocessError);
    CHECK_THROWS_AS(crop_resize(img, {0, -1, 10, 10}, 64), PreprocessError);
    PreprocessSpec s;
    CHECK_NOTHROW(s.validate(160, 120));
    CHECK_THROWS_AS(s.validate(100, 100), PreprocessError);
}

TEST_CASE("normalize maps the window onto [0, 1]") {
    DepthImage img(2, 2);
    img.values = {0.0f, 0.5f, 1.25f, 2.0f};
    const auto g = normalize(img, 0.5, 2.0);
    CHECK(g.size == 2);
    CHECK(g.values[0] == 0.0f);
    CHECK(g.values[1] == 0.0f);
    CHECK(g.values[2] == doctest::Approx(0.5));
    CHECK(g.values[3] == 1.0f);
}

TEST_CASE("pipeline composes the steps") {
    const DepthImage img = random_image(160, 120, 3);
    const std::array<PixelPoint, 2> anchors{PixelPoint{30.0, 40.0}, PixelPoint{130.0, 45.0}};
    const PreprocessSpec spec;
    const auto g = pipeline(img, anchors, spec);
    const auto manual =
        normalize(crop_resize(mask_above_line(threshold(img, 0.5, 2.0), anchors[0], anchors[1], 2.0), spec.crop, 64),
                  0.5, 2.0);
    CHECK(g == manual);
    CHECK(g.size == 64);
    for (float v : g.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

}
