#include "softply/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace softply::preprocess {

void PreprocessSpec::validate(int raw_width, int raw_height) const {
    if (!(z_min < z_max)) throw PreprocessError("preprocess needs z_min < z_max");
    if (out_size < 8) throw PreprocessError("preprocess out_size must be at least 8");
    if (crop.u0 < 0 || crop.v0 < 0 || crop.width <= 0 || crop.height <= 0 ||
        crop.u0 + crop.width > raw_width || crop.v0 + crop.height > raw_height) {
        throw PreprocessError("crop rectangle outside the " + std::to_string(raw_width) + "x" +
                              std::to_string(raw_height) + " image");
    }
}

DepthImage threshold(const DepthImage& img, double z_min, double z_max) {
    if (!(z_min < z_max)) throw PreprocessError("threshold needs z_min < z_max");
    DepthImage out = img;
    for (float& z : out.values) {
        if (!(z >= z_min && z <= z_max)) z = 0.0f;
    }
    return out;
}

DepthImage mask_above_line(const DepthImage& img, PixelPoint a, PixelPoint b, double offset) {
    const double du = b.u - a.u;
    const double dv = b.v - a.v;
    if (du == 0.0 && dv == 0.0) throw PreprocessError("mask_above_line: coincident anchors");
    if (du == 0.0) throw PreprocessError("mask_above_line: anchor line is vertical");
    const double slope = dv / du;
    DepthImage out = img;
    for (int v = 0; v < out.height; ++v) {
        const double cv = v + 0.5;
        for (int u = 0; u < out.width; ++u) {
            const double line_v = a.v + slope * (u + 0.5 - a.u) - offset;
            if (cv < line_v) out.at(u, v) = 0.0f;
        }
    }
    return out;
}

namespace {

struct Tap {
    int index;
    double weight;  // overlap length in input pixels
};

// Output pixel k covers [k * scale, (k + 1) * scale) of the input axis.
std::vector<std::vector<Tap>> axis_taps(int in_len, int out_len) {
    const double scale = static_cast<double>(in_len) / out_len;
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out_len));
    for (int k = 0; k < out_len; ++k) {
        const double lo = k * scale, hi = (k + 1) * scale;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(in_len - 1, static_cast<int>(std::ceil(hi)) - 1);
        for (int i = first; i <= last; ++i) {
            const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (w > 0.0) taps[static_cast<std::size_t>(k)].push_back({i, w});
        }
    }
    return taps;
}

}  // namespace

DepthImage crop_resize(const DepthImage& img, const Rect& crop, int out_size) {
    if (crop.u0 < 0 || crop.v0 < 0 || crop.width <= 0 || crop.height <= 0 ||
        crop.u0 + crop.width > img.width || crop.v0 + crop.height > img.height) {
        throw PreprocessError("crop rectangle outside the image");
    }
    if (out_size <= 0) throw PreprocessError("crop_resize: out_size must be positive");
    const auto tu = axis_taps(crop.width, out_size);
    const auto tv = axis_taps(crop.height, out_size);
    const double area = (static_cast<double>(crop.width) / out_size) * (static_cast<double>(crop.height) / out_size);
    DepthImage out(out_size, out_size);
    for (int y = 0; y < out_size; ++y) {
        for (int x = 0; x < out_size; ++x) {
            double acc = 0.0;
            for (const Tap& ty : tv[static_cast<std::size_t>(y)]) {
                for (const Tap& tx : tu[static_cast<std::size_t>(x)]) {
                    acc += ty.weight * tx.weight * img.at(crop.u0 + tx.index, crop.v0 + ty.index);
                }
            }
            out.at(x, y) = static_cast<float>(acc / area);
        }
    }
    return out;
}

InputGrid normalize(const DepthImage& img, double z_min, double z_max) {
    if (!(z_min < z_max)) throw PreprocessError("normalize needs z_min < z_max");
    if (img.width != img.height) throw PreprocessError("normalize expects a square image");
    InputGrid g;
    g.size = img.width;
    g.values.resize(img.values.size());
    const double span = z_max - z_min;
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        const float z = img.values[i];
        g.values[i] = z == 0.0f ? 0.0f : static_cast<float>(std::clamp((z - z_min) / span, 0.0, 1.0));
    }
    return g;
}

InputGrid pipeline(const DepthImage& img, const std::array<PixelPoint, 2>& anchors, const PreprocessSpec& spec) {
    spec.validate(img.width, img.height);
    const DepthImage t = threshold(img, spec.z_min, spec.z_max);
    const DepthImage m = mask_above_line(t, anchors[0], anchors[1], spec.line_offset);
    const DepthImage r = crop_resize(m, spec.crop, spec.out_size);
    return normalize(r, spec.z_min, spec.z_max);
}

}  // namespace softply::preprocess
