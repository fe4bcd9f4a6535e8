#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "yeti/error.hpp"

namespace yeti {

/// One grayscale frame sampled at 1 FPS. `index` is seconds since video start.
struct Frame {
    int index = 0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, width*height entries

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    bool same_dimensions(const Frame& other) const {
        return width == other.width && height == other.height;
    }

    std::uint8_t at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
};

/// Ordered frames with identical dimensions and consecutive indices from 0.
struct FrameSequence {
    std::vector<Frame> frames;

    std::size_t size() const { return frames.size(); }
    const Frame& operator[](std::size_t i) const { return frames[i]; }

    void validate() const {
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const Frame& f = frames[i];
            if (f.index != static_cast<int>(i))
                throw Error("frame index " + std::to_string(f.index) +
                            " at position " + std::to_string(i) +
                            ": indices must be consecutive from 0");
            if (f.width <= 0 || f.height <= 0)
                throw Error("frame " + std::to_string(i) + ": non-positive dimensions");
            if (f.pixels.size() != static_cast<std::size_t>(f.width) * f.height)
                throw Error("frame " + std::to_string(i) + ": pixel buffer size mismatch");
            if (!f.same_dimensions(frames[0]))
                throw Error("frame " + std::to_string(i) + ": dimensions differ from frame 0");
        }
    }
};

inline std::uint8_t luma_rec601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const long rounded = static_cast<long>(y + 0.5);
    return static_cast<std::uint8_t>(rounded > 255 ? 255 : rounded);
}

namespace detail {

inline int pgm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {  // comment runs to end of line
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok.empty() ? EOF : 0;
}

inline int parse_positive_int(const std::string& tok, const std::string& file,
                              const char* what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v <= 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw Error(file + ": bad " + what + " field '" + tok + "'");
    }
}

}  // namespace detail

/// Reads a binary portable graymap (P5, maxval 255). The caller assigns the
/// sequence index afterwards.
inline Frame load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path + ": cannot open");
    std::string tok;
    if (detail::pgm_next_token(in, tok) == EOF || tok != "P5")
        throw Error(path + ": not a binary graymap (expected P5 magic)");
    if (detail::pgm_next_token(in, tok) == EOF)
        throw Error(path + ": truncated header");
    const int width = detail::parse_positive_int(tok, path, "width");
    if (detail::pgm_next_token(in, tok) == EOF)
        throw Error(path + ": truncated header");
    const int height = detail::parse_positive_int(tok, path, "height");
    if (detail::pgm_next_token(in, tok) == EOF)
        throw Error(path + ": truncated header");
    if (tok != "255") throw Error(path + ": maxval must be 255, got " + tok);
    // exactly one whitespace byte separates the header from the raster;
    // pgm_next_token already consumed it while scanning past the maxval token
    Frame f;
    f.width = width;
    f.height = height;
    f.pixels.resize(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(f.pixels.data()),
            static_cast<std::streamsize>(f.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != f.pixels.size())
        throw Error(path + ": truncated pixel data");
    return f;
}

inline void save_pgm(const std::string& path, const Frame& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot open for writing");
    out << "P5\n" << f.width << " " << f.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(f.pixels.data()),
              static_cast<std::streamsize>(f.pixels.size()));
    if (!out) throw Error(path + ": write failed");
}

}  // namespace yeti
