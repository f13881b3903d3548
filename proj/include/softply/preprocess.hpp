#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "softply/render.hpp"

namespace softply::preprocess {

using render::DepthImage;
using render::PixelPoint;

struct Rect {
    int u0 = 0;
    int v0 = 0;
    int width = 0;
    int height = 0;
};

struct PreprocessSpec {
    double z_min = 0.5;       // m
    double z_max = 2.0;       // m
    double line_offset = 2.0; // px, margin above the anchor line
    Rect crop{20, 0, 120, 120};
    int out_size = 64;

    void validate(int raw_width, int raw_height) const;
};

// Single-channel network input, row-major out_size x out_size, values in [0, 1].
struct InputGrid {
    int size = 0;
    std::vector<float> values;

    friend bool operator==(const InputGrid&, const InputGrid&) = default;
};

class PreprocessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Keeps pixels in [z_min, z_max] (inclusive), zeroes the rest.
DepthImage threshold(const DepthImage& img, double z_min, double z_max);

// Zeroes every pixel whose center lies strictly above (smaller v than) the
// line through the anchors shifted up by `offset` pixels.
DepthImage mask_above_line(const DepthImage& img, PixelPoint a, PixelPoint b, double offset);

// Crops, then area-averages to out_size x out_size. Zeros take part in the
// averages.
DepthImage crop_resize(const DepthImage& img, const Rect& crop, int out_size);

InputGrid normalize(const DepthImage& img, double z_min, double z_max);

InputGrid pipeline(const DepthImage& img, const std::array<PixelPoint, 2>& anchors, const PreprocessSpec& spec);

}  // namespace softply::preprocess
