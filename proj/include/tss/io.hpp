// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file io.hpp
 * @brief On-disk formats: PNG images and masks, PFM probability maps,
 *        annotation JSON, and CRC-protected network checkpoints.
 *
 * Error taxonomy: IoError for files that cannot be opened, read, or written;
 * ParseError for content that does not match the expected format; and
 * CheckpointError for checkpoint files that fail structural or CRC checks.
 * The command-line tool maps these to distinct exit codes.
 */

#pragma once

#include "tss/core.hpp"
#include "tss/morphology.hpp"
#include "tss/trainer.hpp"

#include "json.hpp"
#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace tss {
namespace io {

struct IoError : Error {
    IoError(const std::string& path, const std::string& what) : Error(path + ": " + what) {}
};

struct ParseError : Error {
    ParseError(const std::string& path, const std::string& what) : Error(path + ": " + what) {}
};

struct CheckpointError : Error {
    CheckpointError(const std::string& path, const std::string& what) : Error(path + ": " + what) {}
};

namespace detail {

constexpr int kMaxImageSide = 1 << 15;

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline void open_read(PngReader& r, const std::string& path) {
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) throw IoError(path, "cannot open");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw ParseError(path, "not a PNG file");
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = r.png ? png_create_info_struct(r.png) : nullptr;
    if (!r.png || !r.info) throw IoError(path, "libpng init failed");
    png_init_io(r.png, r.fp);
    png_set_sig_bytes(r.png, 8);
}

inline void open_write(PngWriter& w, const std::string& path) {
    w.fp = std::fopen(path.c_str(), "wb");
    if (!w.fp) throw IoError(path, "cannot open for writing");
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    w.info = w.png ? png_create_info_struct(w.png) : nullptr;
    if (!w.png || !w.info) throw IoError(path, "libpng init failed");
    png_init_io(w.png, w.fp);
}

inline void check_png_dims(const std::string& path, png_uint_32 w, png_uint_32 h) {
    if (w == 0 || h == 0 || w > kMaxImageSide || h > kMaxImageSide)
        throw ParseError(path, "unsupported image dimensions");
}

inline void push_u32(std::vector<unsigned char>& out, uint32_t x) {
    out.push_back(static_cast<unsigned char>(x & 0xff));
    out.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((x >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((x >> 24) & 0xff));
}

inline uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(path, "read failed");
    return bytes;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path, "write failed");
}

}  // namespace detail

/// Reads an 8-bit PNG as RGB; palette, grayscale, and alpha variants are
/// converted on the fly.
inline ImageRGB read_image_png(const std::string& path) {
    detail::PngReader r;
    detail::open_read(r, path);
    if (setjmp(png_jmpbuf(r.png))) throw ParseError(path, "PNG decode failed");

    png_read_info(r.png, r.info);
    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    detail::check_png_dims(path, w, h);
    const int color_type = png_get_color_type(r.png, r.info);
    const int bit_depth = png_get_bit_depth(r.png, r.info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (bit_depth == 16) png_set_strip_16(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);
    if (png_get_rowbytes(r.png, r.info) != static_cast<size_t>(w) * 3)
        throw ParseError(path, "unexpected PNG layout");

    ImageRGB img(static_cast<int>(h), static_cast<int>(w));
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (png_uint_32 u = 0; u < h; ++u) {
        png_read_row(r.png, row.data(), nullptr);
        for (png_uint_32 v = 0; v < w; ++v)
            for (int c = 0; c < 3; ++c)
                img.at(static_cast<int>(u), static_cast<int>(v), c) = row[3 * v + c] / 255.0;
    }
    png_read_end(r.png, nullptr);
    return img;
}

inline void write_image_png(const std::string& path, const ImageRGB& img) {
    img.check();
    detail::PngWriter wr;
    detail::open_write(wr, path);
    if (setjmp(png_jmpbuf(wr.png))) throw IoError(path, "PNG encode failed");

    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<unsigned char> row(static_cast<size_t>(img.width()) * 3);
    for (int u = 0; u < img.height(); ++u) {
        for (int v = 0; v < img.width(); ++v)
            for (int c = 0; c < 3; ++c) {
                const long q = std::lround(img.at(u, v, c) * 255.0);
                row[3 * v + c] = static_cast<unsigned char>(std::clamp(q, 0L, 255L));
            }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

/// Reads an instance mask stored as 16-bit grayscale PNG.
inline InstanceLabelMap read_mask_png(const std::string& path) {
    detail::PngReader r;
    detail::open_read(r, path);
    if (setjmp(png_jmpbuf(r.png))) throw ParseError(path, "PNG decode failed");

    png_read_info(r.png, r.info);
    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    detail::check_png_dims(path, w, h);
    if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(r.png, r.info) != 16)
        throw ParseError(path, "expected a 16-bit grayscale PNG");
    png_read_update_info(r.png, r.info);

    InstanceLabelMap labels(static_cast<int>(h), static_cast<int>(w));
    std::vector<unsigned char> row(static_cast<size_t>(w) * 2);  // big-endian per PNG
    for (png_uint_32 u = 0; u < h; ++u) {
        png_read_row(r.png, row.data(), nullptr);
        for (png_uint_32 v = 0; v < w; ++v)
            labels.set(static_cast<int>(u), static_cast<int>(v),
                       (static_cast<int>(row[2 * v]) << 8) | row[2 * v + 1]);
    }
    png_read_end(r.png, nullptr);
    return labels;
}

inline void write_mask_png(const std::string& path, const InstanceLabelMap& labels) {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels.at(i) < 0 || labels.at(i) > 0xffff)
            throw IoError(path, "label outside the 16-bit range");
    detail::PngWriter wr;
    detail::open_write(wr, path);
    if (setjmp(png_jmpbuf(wr.png))) throw IoError(path, "PNG encode failed");

    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(labels.width()),
                 static_cast<png_uint_32>(labels.height()), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<unsigned char> row(static_cast<size_t>(labels.width()) * 2);
    for (int u = 0; u < labels.height(); ++u) {
        for (int v = 0; v < labels.width(); ++v) {
            const int x = labels.at(u, v);
            row[2 * v] = static_cast<unsigned char>((x >> 8) & 0xff);
            row[2 * v + 1] = static_cast<unsigned char>(x & 0xff);
        }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

/**
 * @brief Writes the foreground channel as a grayscale PFM.
 *
 * Header "Pf", then "width height", then scale -1.0 (little-endian floats),
 * scanlines bottom-to-top as the format requires.
 */
inline void write_probability_pfm(const std::string& path, const ProbabilityMap& prob) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << "Pf\n" << prob.width() << " " << prob.height() << "\n-1.0\n";
    for (int u = prob.height() - 1; u >= 0; --u)
        for (int v = 0; v < prob.width(); ++v) {
            const uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(prob.fg(u, v)));
            const unsigned char le[4] = {static_cast<unsigned char>(bits & 0xff),
                                         static_cast<unsigned char>((bits >> 8) & 0xff),
                                         static_cast<unsigned char>((bits >> 16) & 0xff),
                                         static_cast<unsigned char>((bits >> 24) & 0xff)};
            out.write(reinterpret_cast<const char*>(le), 4);
        }
    if (!out) throw IoError(path, "write failed");
}

inline ProbabilityMap read_probability_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open");
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    if (!in || magic != "Pf") throw ParseError(path, "not a grayscale PFM");
    if (w <= 0 || h <= 0 || w > detail::kMaxImageSide || h > detail::kMaxImageSide)
        throw ParseError(path, "unsupported PFM dimensions");
    if (scale >= 0.0) throw ParseError(path, "big-endian PFM not supported");
    in.get();  // single whitespace byte after the scale line

    std::vector<double> fg(static_cast<size_t>(h) * w, 0.0);
    std::vector<unsigned char> row(static_cast<size_t>(w) * 4);
    for (int u = h - 1; u >= 0; --u) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!in) throw ParseError(path, "truncated PFM payload");
        for (int v = 0; v < w; ++v) {
            const uint32_t bits = detail::get_u32(row.data() + 4 * static_cast<size_t>(v));
            const float x = std::bit_cast<float>(bits);
            if (!std::isfinite(x) || x < 0.0f || x > 1.0f)
                throw ParseError(path, "probability outside [0,1]");
            fg[static_cast<size_t>(u) * w + v] = x;
        }
    }
    return ProbabilityMap::from_foreground(h, w, std::move(fg));
}

/// Point annotations along with the image they belong to.
struct AnnotationFile {
    std::string image;
    AnnotationSet points;
};

inline void write_annotations(const std::string& path, const AnnotationFile& ann) {
    nlohmann::json j;
    j["image"] = ann.image;
    auto pack = [](const std::vector<PixelCoord>& points) {
        nlohmann::json arr = nlohmann::json::array();
        for (const PixelCoord& p : points) arr.push_back({p.u, p.v});
        return arr;
    };
    j["positives"] = pack(ann.points.positives);
    j["negatives"] = pack(ann.points.negatives);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError(path, "write failed");
}

inline AnnotationFile read_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, e.what());
    }
    auto unpack = [&](const char* key, std::vector<PixelCoord>& out) {
        if (!j.contains(key) || !j[key].is_array())
            throw ParseError(path, std::string("missing point list '") + key + "'");
        for (const nlohmann::json& entry : j[key]) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
                !entry[1].is_number_integer())
                throw ParseError(path, std::string("malformed point in '") + key + "'");
            out.push_back({entry[0].get<int>(), entry[1].get<int>()});
        }
    };
    AnnotationFile ann;
    if (j.contains("image")) {
        if (!j["image"].is_string()) throw ParseError(path, "'image' must be a string");
        ann.image = j["image"].get<std::string>();
    }
    unpack("positives", ann.points.positives);
    unpack("negatives", ann.points.negatives);
    return ann;
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'T', 'S', 'S', 'N', 'E', 'T', '0', '1'};

}  // namespace detail

/**
 * @brief Serializes network parameters.
 *
 * Layout, all little-endian: 8-byte magic "TSSNET01", u32 layer count, per
 * layer {u32 in_ch, u32 out_ch, u32 ksize}, per layer the weights then the
 * biases as IEEE-754 binary32, and a trailing CRC-32 over everything before
 * it.
 */
inline void save_checkpoint(const std::string& path, const trainer::NetworkParams& params) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), detail::kCheckpointMagic, detail::kCheckpointMagic + 8);
    detail::push_u32(buf, static_cast<uint32_t>(params.layers.size()));
    for (const trainer::ConvLayer& layer : params.layers) {
        detail::push_u32(buf, static_cast<uint32_t>(layer.in_ch));
        detail::push_u32(buf, static_cast<uint32_t>(layer.out_ch));
        detail::push_u32(buf, static_cast<uint32_t>(layer.ksize));
    }
    for (const trainer::ConvLayer& layer : params.layers) {
        for (double w : layer.weights)
            detail::push_u32(buf, std::bit_cast<uint32_t>(static_cast<float>(w)));
        for (double b : layer.bias)
            detail::push_u32(buf, std::bit_cast<uint32_t>(static_cast<float>(b)));
    }
    uint32_t crc = static_cast<uint32_t>(crc32(0L, Z_NULL, 0));
    crc = static_cast<uint32_t>(crc32(crc, buf.data(), static_cast<uInt>(buf.size())));
    detail::push_u32(buf, crc);
    detail::write_file(path, buf);
}

/// Loads and validates a checkpoint; the architecture must be the reference
/// 3 -> 8 -> 8 -> 2 stack with 3x3 kernels.
inline trainer::NetworkParams load_checkpoint(const std::string& path) {
    const std::vector<unsigned char> buf = detail::read_file(path);
    if (buf.size() < 8 + 4 + 4) throw CheckpointError(path, "truncated");
    if (std::memcmp(buf.data(), detail::kCheckpointMagic, 8) != 0)
        throw CheckpointError(path, "bad magic");

    const uint32_t stored_crc = detail::get_u32(buf.data() + buf.size() - 4);
    uint32_t crc = static_cast<uint32_t>(crc32(0L, Z_NULL, 0));
    crc = static_cast<uint32_t>(crc32(crc, buf.data(), static_cast<uInt>(buf.size() - 4)));
    if (crc != stored_crc) throw CheckpointError(path, "CRC mismatch");

    size_t off = 8;
    auto take_u32 = [&]() {
        if (off + 4 > buf.size() - 4) throw CheckpointError(path, "truncated");
        const uint32_t x = detail::get_u32(buf.data() + off);
        off += 4;
        return x;
    };

    const uint32_t n_layers = take_u32();
    if (n_layers != 3) throw CheckpointError(path, "unexpected architecture");
    static constexpr uint32_t expect[3][3] = {{3, 8, 3}, {8, 8, 3}, {8, 2, 3}};
    trainer::NetworkParams params;
    for (uint32_t l = 0; l < n_layers; ++l) {
        trainer::ConvLayer layer;
        layer.in_ch = static_cast<int>(take_u32());
        layer.out_ch = static_cast<int>(take_u32());
        layer.ksize = static_cast<int>(take_u32());
        if (static_cast<uint32_t>(layer.in_ch) != expect[l][0] ||
            static_cast<uint32_t>(layer.out_ch) != expect[l][1] ||
            static_cast<uint32_t>(layer.ksize) != expect[l][2])
            throw CheckpointError(path, "unexpected architecture");
        params.layers.push_back(std::move(layer));
    }
    for (trainer::ConvLayer& layer : params.layers) {
        const size_t n_weights =
            static_cast<size_t>(layer.out_ch) * layer.in_ch * layer.ksize * layer.ksize;
        layer.weights.resize(n_weights);
        layer.bias.resize(static_cast<size_t>(layer.out_ch));
        for (double& w : layer.weights) w = std::bit_cast<float>(take_u32());
        for (double& b : layer.bias) b = std::bit_cast<float>(take_u32());
    }
    if (off != buf.size() - 4) throw CheckpointError(path, "trailing bytes");
    return params;
}

}  // namespace io
}  // namespace tss
