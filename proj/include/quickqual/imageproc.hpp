#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"

namespace quickqual {

/// 8-bit RGB image, row-major, channels interleaved.
struct RawImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RawImage() = default;
    RawImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    [[nodiscard]] bool valid() const noexcept {
        return width >= 1 && height >= 1 && pixels.size() == static_cast<std::size_t>(width) * height * 3;
    }

    std::uint8_t* at(int x, int y) noexcept { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const noexcept {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
        auto* p = at(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    friend bool operator==(const RawImage&, const RawImage&) = default;
};

enum class PreprocessMode {
    paper,  ///< crop black border, pad to square, resize to target x target
    raw,    ///< resize the shorter side to target only
};

inline PreprocessMode parse_preprocess_mode(const std::string& s) {
    if (s == "paper") return PreprocessMode::paper;
    if (s == "raw") return PreprocessMode::raw;
    fail(ErrorCode::invalid_argument, "unknown preprocess mode '" + s + "' (expected paper|raw)");
}

struct PreprocessConfig {
    int target_size = 512;
    int background_threshold = 10;
    PreprocessMode mode = PreprocessMode::paper;

    void validate() const {
        require(target_size >= 32, ErrorCode::invalid_argument, "target_size must be >= 32");
        require(background_threshold >= 0 && background_threshold <= 255, ErrorCode::invalid_argument,
                "background_threshold must be in [0, 255]");
    }
};

/// Normalised image in channel-major (C, H, W) layout.
struct PreprocessedTensor {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    friend bool operator==(const PreprocessedTensor&, const PreprocessedTensor&) = default;
};

inline void validate_image(const RawImage& img) {
    require(img.valid(), ErrorCode::invalid_argument,
            "image must be at least 1x1 with exactly 3 channels of 8-bit data");
}

/// Minimal bounding box of pixels whose brightest channel reaches the
/// threshold. Images with no such pixel come back unchanged.
inline RawImage crop_black_border(const RawImage& img, int threshold) {
    validate_image(img);
    int x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const auto* p = img.at(x, y);
            if (std::max({p[0], p[1], p[2]}) >= threshold) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) return img;
    RawImage out(x1 - x0 + 1, y1 - y0 + 1);
    const std::size_t row_bytes = static_cast<std::size_t>(out.width) * 3;
    for (int y = 0; y < out.height; ++y)
        std::copy_n(img.at(x0, y0 + y), row_bytes, out.at(0, y));
    return out;
}

/// Centers the image on a black square canvas; an odd remainder goes to the
/// right / bottom.
inline RawImage pad_to_square(const RawImage& img) {
    validate_image(img);
    if (img.width == img.height) return img;
    const int side = std::max(img.width, img.height);
    RawImage out(side, side);
    const int left = (side - img.width) / 2;
    const int top = (side - img.height) / 2;
    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * 3;
    for (int y = 0; y < img.height; ++y)
        std::copy_n(img.at(0, y), row_bytes, out.at(left, top + y));
    return out;
}

/// Bilinear resampling with half-pixel centers and edge clamping, no
/// antialias prefilter. Same-size input is returned bit-identical.
inline RawImage resize_bilinear(const RawImage& img, int out_width, int out_height) {
    validate_image(img);
    require(out_width >= 1 && out_height >= 1, ErrorCode::invalid_argument, "resize target must be positive");
    if (out_width == img.width && out_height == img.height) return img;

    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int in, int out) {
        std::vector<Tap> t(static_cast<std::size_t>(out));
        const double scale = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double s = (o + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, in - 1.0);
            const int i0 = static_cast<int>(std::floor(s));
            t[o] = {i0, std::min(i0 + 1, in - 1), s - i0};
        }
        return t;
    };
    const auto xt = taps(img.width, out_width);
    const auto yt = taps(img.height, out_height);

    RawImage out(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        const auto [y0, y1, fy] = yt[y];
        for (int x = 0; x < out_width; ++x) {
            const auto [x0, x1, fx] = xt[x];
            const auto* a = img.at(x0, y0);
            const auto* b = img.at(x1, y0);
            const auto* c = img.at(x0, y1);
            const auto* d = img.at(x1, y1);
            auto* o = out.at(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = (1.0 - fx) * a[ch] + fx * b[ch];
                const double bot = (1.0 - fx) * c[ch] + fx * d[ch];
                const double v = (1.0 - fy) * top + fy * bot;
                o[ch] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return out;
}

/// Paper mode: target x target. Raw mode: shorter side becomes target, the
/// longer side scales by the same factor (truncated).
inline RawImage resize(const RawImage& img, int target, PreprocessMode mode) {
    validate_image(img);
    if (mode == PreprocessMode::paper) return resize_bilinear(img, target, target);
    const int short_side = std::min(img.width, img.height);
    const int long_side = std::max(img.width, img.height);
    const auto scaled_long =
        static_cast<int>(static_cast<long long>(target) * long_side / short_side);
    return img.width <= img.height ? resize_bilinear(img, target, scaled_long)
                                   : resize_bilinear(img, scaled_long, target);
}

/// Maps v in [0, 255] to ((v / 255) - 0.5) / 0.5, i.e. [-1, 1], channel-major.
inline PreprocessedTensor to_normalized_tensor(const RawImage& img, const PreprocessConfig& cfg = {}) {
    validate_image(img);
    if (cfg.mode == PreprocessMode::paper) {
        require(img.width == cfg.target_size && img.height == cfg.target_size, ErrorCode::shape_mismatch,
                "expected a " + std::to_string(cfg.target_size) + "x" + std::to_string(cfg.target_size) +
                    " image, got " + std::to_string(img.width) + "x" + std::to_string(img.height));
    } else {
        require(std::min(img.width, img.height) == cfg.target_size, ErrorCode::shape_mismatch,
                "expected shorter side " + std::to_string(cfg.target_size));
    }

    float lut[256];
    for (int v = 0; v < 256; ++v) lut[v] = static_cast<float>(((v / 255.0) - 0.5) / 0.5);

    PreprocessedTensor t{3, img.height, img.width, {}};
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    t.data.resize(plane * 3);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t ch = 0; ch < 3; ++ch) t.data[ch * plane + i] = lut[img.pixels[i * 3 + ch]];
    return t;
}

inline PreprocessedTensor preprocess(const RawImage& img, const PreprocessConfig& cfg = {}) {
    cfg.validate();
    validate_image(img);
    if (cfg.mode == PreprocessMode::raw) return to_normalized_tensor(resize(img, cfg.target_size, cfg.mode), cfg);
    const RawImage squared = pad_to_square(crop_black_border(img, cfg.background_threshold));
    return to_normalized_tensor(resize(squared, cfg.target_size, cfg.mode), cfg);
}

}  // namespace quickqual
