#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <opencv2/dnn.hpp>

#include "quickqual/error.hpp"
#include "quickqual/imageproc.hpp"

namespace quickqual {

inline constexpr std::size_t kFeatureDim = 1024;

/// Pooled backbone embedding of one image.
struct FeatureVector {
    std::vector<float> values;

    FeatureVector() = default;
    explicit FeatureVector(std::vector<float> v) : values(std::move(v)) {}

    [[nodiscard]] std::span<const float> view() const noexcept { return values; }
    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    float operator[](std::size_t i) const noexcept { return values[i]; }

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Loaded feature-extractor graph: input (N, 3, S, S), output (N, 1024).
///
/// The session is logically immutable once loaded. OpenCV's Net mutates
/// internal buffers during forward(), so inference is serialized with an
/// internal mutex; callers may share one session across threads.
class BackboneSession {
public:
    [[nodiscard]] int input_size() const noexcept { return input_size_; }
    [[nodiscard]] std::size_t feature_dim() const noexcept { return kFeatureDim; }
    [[nodiscard]] const std::string& fingerprint() const noexcept { return fingerprint_; }
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

    /// One FeatureVector per tensor, in input order. Consecutive tensors of
    /// equal shape are run as a single batch.
    std::vector<FeatureVector> extract_features(std::span<const PreprocessedTensor> batch) const {
        std::vector<FeatureVector> out;
        out.reserve(batch.size());
        std::size_t start = 0;
        while (start < batch.size()) {
            std::size_t end = start + 1;
            while (end < batch.size() && batch[end].height == batch[start].height &&
                   batch[end].width == batch[start].width)
                ++end;
            run(batch.subspan(start, end - start), out);
            start = end;
        }
        return out;
    }

    FeatureVector extract_features(const PreprocessedTensor& tensor) const {
        return std::move(extract_features(std::span<const PreprocessedTensor>(&tensor, 1)).front());
    }

private:
    friend BackboneSession load_backbone(const std::filesystem::path&, int);

    void check_shape(const PreprocessedTensor& t) const {
        // Square tensors must match the graph's declared size; raw-mode
        // tensors keep the declared size on their shorter side.
        const bool ok = t.channels == 3 && std::min(t.height, t.width) == input_size_ &&
                        t.data.size() == static_cast<std::size_t>(t.channels) * t.height * t.width;
        require(ok, ErrorCode::shape_mismatch,
                "tensor " + std::to_string(t.channels) + "x" + std::to_string(t.height) + "x" +
                    std::to_string(t.width) + " does not fit backbone input 3x" + std::to_string(input_size_) +
                    "x" + std::to_string(input_size_));
    }

    cv::Mat forward(const cv::Mat& blob) const {
        std::lock_guard lock(*mutex_);
        try {
            net_->setInput(blob, input_name_);
            return net_->forward(output_name_).clone();
        } catch (const cv::Exception& e) {
            fail(ErrorCode::runtime_failure, std::string("inference failed: ") + e.what());
        }
    }

    void run(std::span<const PreprocessedTensor> group, std::vector<FeatureVector>& out) const {
        for (const auto& t : group) check_shape(t);
        const int n = static_cast<int>(group.size());
        const int sizes[] = {n, 3, group[0].height, group[0].width};
        cv::Mat blob(4, sizes, CV_32F);
        const std::size_t per = group[0].data.size();
        for (int i = 0; i < n; ++i)
            std::copy(group[i].data.begin(), group[i].data.end(), blob.ptr<float>() + i * per);

        const cv::Mat result = forward(blob);
        require(result.total() == static_cast<std::size_t>(n) * kFeatureDim, ErrorCode::shape_mismatch,
                "backbone produced " + std::to_string(result.total()) + " values for " + std::to_string(n) +
                    " inputs");
        const float* p = result.ptr<float>();
        for (int i = 0; i < n; ++i) {
            std::vector<float> v(p + i * kFeatureDim, p + (i + 1) * kFeatureDim);
            for (float x : v)
                require(std::isfinite(x) && x >= 0.0f, ErrorCode::runtime_failure,
                        "backbone output is negative or non-finite");
            out.emplace_back(std::move(v));
        }
    }

    std::filesystem::path path_;
    std::string fingerprint_;
    std::string input_name_ = "input";
    std::string output_name_;
    int input_size_ = 512;
    std::shared_ptr<cv::dnn::Net> net_;
    std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
};

/// Loads an ONNX feature extractor and checks that it yields 1024 features
/// per image (a graph with its classifier still attached is rejected).
inline BackboneSession load_backbone(const std::filesystem::path& path, int input_size = 512) {
    require(std::filesystem::is_regular_file(path), ErrorCode::file_not_found, path.string());
    BackboneSession s;
    s.path_ = path;
    s.input_size_ = input_size;
    s.fingerprint_ = sha256_file(path);
    try {
        s.net_ = std::make_shared<cv::dnn::Net>(cv::dnn::readNetFromONNX(path.string()));
    } catch (const cv::Exception& e) {
        fail(ErrorCode::malformed_graph, path.string() + ": " + e.what());
    }
    require(!s.net_->empty(), ErrorCode::malformed_graph, path.string() + ": empty graph");
    s.net_->setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    s.net_->setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

    const auto outputs = s.net_->getUnconnectedOutLayersNames();
    require(outputs.size() == 1, ErrorCode::malformed_graph,
            path.string() + ": expected exactly one output, found " + std::to_string(outputs.size()));
    s.output_name_ = outputs.front();

    // Probe on a small input; pooled graphs accept any spatial size.
    const int probe_sizes[] = {1, 3, 64, 64};
    cv::Mat probe(4, probe_sizes, CV_32F, cv::Scalar(0.0f));
    cv::Mat result;
    try {
        s.net_->setInput(probe, s.input_name_);
        result = s.net_->forward(s.output_name_);
    } catch (const cv::Exception&) {
        const int full_sizes[] = {1, 3, input_size, input_size};
        cv::Mat full(4, full_sizes, CV_32F, cv::Scalar(0.0f));
        try {
            s.net_->setInput(full, s.input_name_);
            result = s.net_->forward(s.output_name_);
        } catch (const cv::Exception& e) {
            fail(ErrorCode::malformed_graph, path.string() + ": cannot run graph: " + e.what());
        }
    }
    require(result.total() == kFeatureDim, ErrorCode::shape_mismatch,
            path.string() + ": graph output has " + std::to_string(result.total()) +
                " values per image, expected 1024 (is the classifier head still attached?)");
    return s;
}

inline constexpr const char* kModelPathEnv = "QUICKQUAL_MODEL_PATH";
inline constexpr const char* kDefaultModelPath = "models/densenet121_headless.onnx";

/// Flag value, then $QUICKQUAL_MODEL_PATH, then the default relative path.
inline std::filesystem::path resolve_model_path(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv(kModelPathEnv); env != nullptr && *env != '\0') return env;
    return kDefaultModelPath;
}

}  // namespace quickqual
