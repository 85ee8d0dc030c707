#pragma once

// Little-endian binary blobs exchanged with the fixture tooling:
//   .qqt  "QQT1" u32 C, u32 H, u32 W, float32[C*H*W]
//   .feat "QQF1" u32 len, float32[len]
//   .pred "QQP1" float32
//   .featmat "QQM1" u32 n, u32 d, float32[n*d] row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/imageproc.hpp"
#include "quickqual/matrix.hpp"

namespace quickqual {

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    return v;
}

class BlobWriter {
public:
    explicit BlobWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
        require(out_.good(), ErrorCode::io, "cannot open " + path.string() + " for writing");
    }
    void magic(std::string_view m) { out_.write(m.data(), 4); }
    void u32(std::uint32_t v) {
        v = to_le(v);
        out_.write(reinterpret_cast<const char*>(&v), 4);
    }
    void floats(std::span<const float> values) {
        if constexpr (std::endian::native == std::endian::little) {
            out_.write(reinterpret_cast<const char*>(values.data()),
                       static_cast<std::streamsize>(values.size() * sizeof(float)));
        } else {
            for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
        }
    }
    void finish() {
        out_.flush();
        require(out_.good(), ErrorCode::io, "write failed for " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BlobReader {
public:
    explicit BlobReader(const std::filesystem::path& path) : path_(path) {
        require(std::filesystem::exists(path), ErrorCode::file_not_found, path.string());
        std::ifstream in(path, std::ios::binary);
        require(in.good(), ErrorCode::io, "cannot open " + path.string());
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    void expect_magic(std::string_view m) {
        need(4);
        require(std::string_view(bytes_.data() + pos_, 4) == m, ErrorCode::format,
                path_.string() + ": bad magic, expected " + std::string(m));
        pos_ += 4;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return to_le(v);
    }
    std::vector<float> floats(std::size_t count) {
        need(count * 4);
        std::vector<float> values(count);
        for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(u32());
        return values;
    }
    void expect_end() const {
        require(pos_ == bytes_.size(), ErrorCode::format, path_.string() + ": trailing bytes");
    }

private:
    void need(std::size_t n) const {
        require(pos_ + n <= bytes_.size(), ErrorCode::format, path_.string() + ": truncated");
    }
    std::filesystem::path path_;
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void write_tensor(const PreprocessedTensor& t, const std::filesystem::path& path) {
    detail::BlobWriter w(path);
    w.magic("QQT1");
    w.u32(static_cast<std::uint32_t>(t.channels));
    w.u32(static_cast<std::uint32_t>(t.height));
    w.u32(static_cast<std::uint32_t>(t.width));
    w.floats(t.data);
    w.finish();
}

inline PreprocessedTensor read_tensor(const std::filesystem::path& path) {
    detail::BlobReader r(path);
    r.expect_magic("QQT1");
    PreprocessedTensor t;
    t.channels = static_cast<int>(r.u32());
    t.height = static_cast<int>(r.u32());
    t.width = static_cast<int>(r.u32());
    t.data = r.floats(static_cast<std::size_t>(t.channels) * t.height * t.width);
    r.expect_end();
    return t;
}

inline void write_feature_blob(std::span<const float> values, const std::filesystem::path& path) {
    detail::BlobWriter w(path);
    w.magic("QQF1");
    w.u32(static_cast<std::uint32_t>(values.size()));
    w.floats(values);
    w.finish();
}

inline std::vector<float> read_feature_blob(const std::filesystem::path& path) {
    detail::BlobReader r(path);
    r.expect_magic("QQF1");
    auto values = r.floats(r.u32());
    r.expect_end();
    return values;
}

inline void write_prediction_blob(float p_bad, const std::filesystem::path& path) {
    detail::BlobWriter w(path);
    w.magic("QQP1");
    w.floats(std::span<const float>(&p_bad, 1));
    w.finish();
}

inline float read_prediction_blob(const std::filesystem::path& path) {
    detail::BlobReader r(path);
    r.expect_magic("QQP1");
    const float p = r.floats(1)[0];
    r.expect_end();
    return p;
}

inline void write_feature_matrix(const Matrix<float>& m, const std::filesystem::path& path) {
    detail::BlobWriter w(path);
    w.magic("QQM1");
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(m.data());
    w.finish();
}

inline Matrix<float> read_feature_matrix(const std::filesystem::path& path) {
    detail::BlobReader r(path);
    r.expect_magic("QQM1");
    const auto n = r.u32();
    const auto d = r.u32();
    auto values = r.floats(static_cast<std::size_t>(n) * d);
    r.expect_end();
    return {n, d, std::move(values)};
}

}  // namespace quickqual
