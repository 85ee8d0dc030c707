#pragma once

#include <filesystem>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "quickqual/error.hpp"
#include "quickqual/imageproc.hpp"

namespace quickqual {

/// Decodes a JPEG/PNG file into an RGB RawImage. Grayscale and alpha inputs
/// are converted to three channels.
inline RawImage load_image(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorCode::file_not_found, path.string());
    cv::Mat bgr;
    try {
        bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        fail(ErrorCode::format, path.string() + ": " + e.what());
    }
    require(!bgr.empty(), ErrorCode::format, "cannot decode image " + path.string());

    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    RawImage img(rgb.cols, rgb.rows);
    const std::size_t row_bytes = static_cast<std::size_t>(rgb.cols) * 3;
    for (int y = 0; y < rgb.rows; ++y) std::copy_n(rgb.ptr<std::uint8_t>(y), row_bytes, img.at(0, y));
    return img;
}

inline void save_png(const RawImage& img, const std::filesystem::path& path) {
    validate_image(img);
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    require(cv::imwrite(path.string(), bgr), ErrorCode::io, "cannot write " + path.string());
}

/// Identifier used in prediction records: the file name without extension.
inline std::string image_id(const std::filesystem::path& path) { return path.stem().string(); }

}  // namespace quickqual
