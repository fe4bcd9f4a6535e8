#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "yeti/error.hpp"
#include "yeti/frame.hpp"
#include "yeti/png.hpp"

namespace yeti {

inline bool has_extension(const std::filesystem::path& p,
                          std::initializer_list<const char*> exts) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* x : exts)
        if (e == x) return true;
    return false;
}

/// Loads one frame file, dispatching on extension (P5 graymap or PNG).
inline Frame load_frame_file(const std::filesystem::path& path) {
    if (has_extension(path, {".png"})) return load_png(path.string());
    return load_pgm(path.string());
}

/// Loads a frame sequence from a directory. Lexicographic filename order
/// defines the frame index; all frames must share dimensions.
inline FrameSequence load_frame_sequence(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(dir + ": not a directory");

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (has_extension(entry.path(), {".pgm", ".pnm", ".png"}))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) {
                  return a.filename().string() < b.filename().string();
              });
    if (files.size() < 2)
        throw Error(dir + ": sequence too short (" + std::to_string(files.size()) +
                    " frame file(s), need at least 2)");

    FrameSequence seq;
    seq.frames.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        Frame f = load_frame_file(files[i]);
        f.index = static_cast<int>(i);
        if (i > 0 && !f.same_dimensions(seq.frames[0]))
            throw Error(files[i].string() + ": dimensions " + std::to_string(f.width) +
                        "x" + std::to_string(f.height) + " differ from first frame (" +
                        std::to_string(seq.frames[0].width) + "x" +
                        std::to_string(seq.frames[0].height) + ")");
        seq.frames.push_back(std::move(f));
    }
    seq.validate();
    return seq;
}

}  // namespace yeti
