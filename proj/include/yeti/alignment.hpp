#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "yeti/error.hpp"

namespace yeti {

/// Per-frame object counts, one entry per frame index 0..T-1.
struct CountSeries {
    std::vector<long> counts;

    std::size_t size() const { return counts.size(); }

    void validate() const {
        for (std::size_t t = 0; t < counts.size(); ++t)
            if (counts[t] < 0)
                throw Error("negative count " + std::to_string(counts[t]) + " at frame " +
                            std::to_string(t));
    }
};

/// Count deltas; deltas[i] = counts[i+1] - counts[i], attached to frame i+1.
struct AlignmentSeries {
    std::vector<long> deltas;

    std::size_t size() const { return deltas.size(); }

    long at_frame(std::size_t t) const {
        if (t < 1 || t > deltas.size())
            throw Error("alignment series: frame index " + std::to_string(t) + " out of range");
        return deltas[t - 1];
    }
};

inline AlignmentSeries compute_alignment(const CountSeries& counts) {
    if (counts.size() < 2)
        throw Error("alignment: count series too short (" + std::to_string(counts.size()) +
                    " entries, need at least 2)");
    AlignmentSeries out;
    out.deltas.reserve(counts.size() - 1);
    for (std::size_t t = 1; t < counts.size(); ++t)
        out.deltas.push_back(counts.counts[t] - counts.counts[t - 1]);
    return out;
}

/// Exact occurrence counts per delta value; total mass equals the series length.
inline std::map<long, std::size_t> delta_histogram(const AlignmentSeries& series) {
    std::map<long, std::size_t> hist;
    for (long d : series.deltas) ++hist[d];
    return hist;
}

/// First base-10 integer token in a text completion. A sign character counts
/// only when immediately followed by a digit. Returns nothing when no integer
/// is present.
inline std::optional<long long> first_integer(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        std::size_t start = i;
        bool neg = false;
        if (c == '+' || c == '-') {
            if (i + 1 >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i + 1])))
                continue;
            neg = c == '-';
            ++start;
        } else if (!std::isdigit(static_cast<unsigned char>(c))) {
            continue;
        }
        long long value = 0;
        std::size_t j = start;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
            value = value * 10 + (text[j] - '0');
            ++j;
        }
        return neg ? -value : value;
    }
    return std::nullopt;
}

inline const std::string kDefaultCountPrompt = "The number of objects in this image is ";

/// Where per-frame counts come from: a CSV file, a constant, or a remote
/// completion endpoint (see remote.hpp for the remote transport).
struct CountProviderSpec {
    enum class Kind { file, constant, remote };
    Kind kind = Kind::file;
    std::string path;          // file kind
    long constant = 0;         // constant kind
    std::string endpoint_url;  // remote kind
    std::string prompt = kDefaultCountPrompt;

    void validate() const {
        if (prompt.empty()) throw Error("count provider: prompt must be non-empty");
        if (kind == Kind::constant && constant < 0)
            throw Error("count provider: negative constant count");
    }
};

inline CountSeries constant_counts(long value, std::size_t length) {
    if (value < 0) throw Error("negative count " + std::to_string(value));
    CountSeries s;
    s.counts.assign(length, value);
    return s;
}

}  // namespace yeti
