#pragma once

// Minimal baseline PNG support for the convenience load path and the remote
// provider's request encoding: 8-bit grayscale and 8-bit RGB, non-interlaced.
// DEFLATE and CRC come from zlib. Anything outside that envelope is rejected
// with a message naming the file.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "yeti/error.hpp"
#include "yeti/frame.hpp"

namespace yeti {
namespace png_detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::uint8_t* data, std::size_t len) {
    put_u32(out, static_cast<std::uint32_t>(len));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len > 0) out.insert(out.end(), data, data + len);
    const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + len));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

inline std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> buf(bound);
    if (compress2(buf.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error("png: deflate failed");
    buf.resize(bound);
    return buf;
}

inline std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& comp,
                                              std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size()));
    if (rc != Z_OK || len != expected) throw Error("png: inflate failed or size mismatch");
    return out;
}

inline std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

constexpr std::array<std::uint8_t, 8> kSignature = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace png_detail

/// Encodes a frame as an 8-bit grayscale PNG (filter 0 rows).
inline std::vector<std::uint8_t> encode_png_gray(const Frame& f) {
    namespace d = png_detail;
    std::vector<std::uint8_t> out(d::kSignature.begin(), d::kSignature.end());

    std::vector<std::uint8_t> ihdr;
    d::put_u32(ihdr, static_cast<std::uint32_t>(f.width));
    d::put_u32(ihdr, static_cast<std::uint32_t>(f.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // color type: grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    d::append_chunk(out, "IHDR", ihdr.data(), ihdr.size());

    std::vector<std::uint8_t> raw;
    raw.reserve((static_cast<std::size_t>(f.width) + 1) * f.height);
    for (int y = 0; y < f.height; ++y) {
        raw.push_back(0);  // filter type none
        const std::uint8_t* row = f.pixels.data() + static_cast<std::size_t>(y) * f.width;
        raw.insert(raw.end(), row, row + f.width);
    }
    const auto idat = d::zlib_deflate(raw);
    d::append_chunk(out, "IDAT", idat.data(), idat.size());
    d::append_chunk(out, "IEND", nullptr, 0);
    return out;
}

/// Decodes a baseline 8-bit gray or RGB PNG; RGB is converted with Rec. 601
/// luma weights. `name` labels error messages.
inline Frame decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    namespace d = png_detail;
    if (bytes.size() < 8 || !std::equal(d::kSignature.begin(), d::kSignature.end(), bytes.begin()))
        throw Error(name + ": not a PNG file");

    std::size_t pos = 8;
    std::uint32_t width = 0, height = 0;
    int color_type = -1;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;

    while (pos + 8 <= bytes.size() && !saw_iend) {
        const std::uint32_t len = d::read_u32(&bytes[pos]);
        if (pos + 12 + static_cast<std::size_t>(len) > bytes.size())
            throw Error(name + ": truncated chunk");
        const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
        const std::uint8_t* data = &bytes[pos + 8];

        if (type == "IHDR") {
            if (len != 13) throw Error(name + ": bad IHDR length");
            width = d::read_u32(data);
            height = d::read_u32(data + 4);
            const int bit_depth = data[8];
            color_type = data[9];
            const int interlace = data[12];
            if (bit_depth != 8)
                throw Error(name + ": unsupported bit depth " + std::to_string(bit_depth) +
                            " (only 8-bit supported)");
            if (color_type != 0 && color_type != 2)
                throw Error(name + ": unsupported color type " + std::to_string(color_type) +
                            " (only grayscale or RGB supported)");
            if (interlace != 0) throw Error(name + ": interlaced PNG not supported");
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            saw_iend = true;
        }
        // ancillary chunks are skipped
        pos += 12 + static_cast<std::size_t>(len);
    }
    if (!saw_ihdr || !saw_iend || idat.empty())
        throw Error(name + ": missing IHDR, IDAT, or IEND");
    if (width == 0 || height == 0) throw Error(name + ": zero dimension");

    const std::size_t channels = color_type == 0 ? 1 : 3;
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    auto raw = d::zlib_inflate(idat, (stride + 1) * height);

    // undo per-row filters in place
    std::vector<std::uint8_t> prev(stride, 0);
    Frame f;
    f.width = static_cast<int>(width);
    f.height = static_cast<int>(height);
    f.pixels.resize(static_cast<std::size_t>(width) * height);
    const std::size_t bpp = channels;

    for (std::uint32_t y = 0; y < height; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        const std::uint8_t filter = row[0];
        std::uint8_t* cur = row + 1;
        switch (filter) {
            case 0:
                break;
            case 1:  // Sub
                for (std::size_t i = bpp; i < stride; ++i) cur[i] += cur[i - bpp];
                break;
            case 2:  // Up
                for (std::size_t i = 0; i < stride; ++i) cur[i] += prev[i];
                break;
            case 3:  // Average
                for (std::size_t i = 0; i < stride; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    cur[i] += static_cast<std::uint8_t>((left + prev[i]) / 2);
                }
                break;
            case 4:  // Paeth
                for (std::size_t i = 0; i < stride; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    const int upleft = i >= bpp ? prev[i - bpp] : 0;
                    cur[i] += d::paeth(left, prev[i], upleft);
                }
                break;
            default:
                throw Error(name + ": bad filter type " + std::to_string(filter));
        }
        std::memcpy(prev.data(), cur, stride);

        std::uint8_t* dst = f.pixels.data() + static_cast<std::size_t>(y) * width;
        if (channels == 1) {
            std::memcpy(dst, cur, width);
        } else {
            for (std::uint32_t x = 0; x < width; ++x)
                dst[x] = luma_rec601(cur[3 * x], cur[3 * x + 1], cur[3 * x + 2]);
        }
    }
    return f;
}

inline Frame load_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_png(bytes, path);
}

}  // namespace yeti
