#pragma once

#include <cstdint>
#include <thread>
#include <vector>

#include "yeti/error.hpp"
#include "yeti/frame.hpp"

namespace yeti {

/// Structural-similarity values between consecutive frames.
/// values[i] is SSIM(frame i, frame i+1), i.e. the entry attached to frame
/// index i+1; a T-frame sequence yields T-1 values.
struct SsimSeries {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }

    /// Entry for frame t (t >= 1): similarity of frame t to its predecessor.
    double at_frame(std::size_t t) const {
        if (t < 1 || t > values.size())
            throw Error("ssim series: frame index " + std::to_string(t) + " out of range");
        return values[t - 1];
    }
};

/// Whole-frame structural similarity of two equally sized 8-bit frames:
/// global means, population variances and covariance, stability constants
/// c1 = (0.01*255)^2 and c2 = (0.03*255)^2. Returns 1 exactly for identical
/// frames and is exactly symmetric in its arguments.
inline double ssim(const Frame& a, const Frame& b) {
    if (!a.same_dimensions(b))
        throw Error("ssim: dimension mismatch (" + std::to_string(a.width) + "x" +
                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height) + ")");
    const std::size_t n = a.pixel_count();
    if (n == 0) throw Error("ssim: empty frame");

    // Integer accumulation is exact for any 8-bit frame below ~2^37 pixels,
    // so the result is independent of summation order.
    std::uint64_t sum_a = 0, sum_b = 0, sum_aa = 0, sum_bb = 0, sum_ab = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t x = a.pixels[i];
        const std::uint64_t y = b.pixels[i];
        sum_a += x;
        sum_b += y;
        sum_aa += x * x;
        sum_bb += y * y;
        sum_ab += x * y;
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    const double mu_a = static_cast<double>(sum_a) * inv_n;
    const double mu_b = static_cast<double>(sum_b) * inv_n;
    const double var_a = static_cast<double>(sum_aa) * inv_n - mu_a * mu_a;
    const double var_b = static_cast<double>(sum_bb) * inv_n - mu_b * mu_b;
    const double cov = static_cast<double>(sum_ab) * inv_n - mu_a * mu_b;

    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);

    const double num = (2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2);
    const double den = ((mu_a * mu_a + mu_b * mu_b) + c1) * ((var_a + var_b) + c2);
    return num / den;
}

/// SSIM between each consecutive frame pair. With threads > 1 the pairs are
/// split across workers; per-pair arithmetic is exact-integer based, so the
/// output is bitwise identical to the sequential result.
inline SsimSeries compute_ssim_series(const FrameSequence& seq, unsigned threads = 1) {
    if (seq.size() < 2)
        throw Error("ssim series: sequence too short (" + std::to_string(seq.size()) +
                    " frames, need at least 2)");
    const std::size_t pairs = seq.size() - 1;
    // Fail on bad input here, before any worker thread exists.
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i].pixels.empty())
            throw Error("ssim series: frame " + std::to_string(i) + " is empty");
        if (i > 0 && !seq[i].same_dimensions(seq[i - 1]))
            throw Error("ssim series: frame " + std::to_string(i) +
                        " dimensions differ from frame " + std::to_string(i - 1));
    }
    SsimSeries out;
    out.values.resize(pairs);

    if (threads <= 1 || pairs < 2) {
        for (std::size_t i = 0; i < pairs; ++i)
            out.values[i] = ssim(seq[i], seq[i + 1]);
        return out;
    }

    const unsigned n_workers = std::min<unsigned>(threads, static_cast<unsigned>(pairs));
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (unsigned w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < pairs; i += n_workers)
                out.values[i] = ssim(seq[i], seq[i + 1]);
        });
    }
    for (auto& t : workers) t.join();
    return out;
}

}  // namespace yeti
