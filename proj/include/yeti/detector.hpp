#pragma once

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "yeti/alignment.hpp"
#include "yeti/error.hpp"
#include "yeti/ssim.hpp"

namespace yeti {

enum class Variant { global, local };

inline const char* to_string(Variant v) {
    return v == Variant::global ? "global" : "local";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "global" || s == "Global") return Variant::global;
    if (s == "local" || s == "Local") return Variant::local;
    throw Error("unknown variant '" + s + "' (expected global or local)");
}

/// Detection hyperparameters. Defaults are the reference configuration:
/// tau 0.9, conversation interval 1, extrema range ±1, episode interval 5.
struct DetectorConfig {
    double tau = 0.9;                 // eligibility threshold on predecessor SSIM
    int conversation_interval = 1;    // m: frames to stay silent after an event
    int extrema_range = 1;            // r: tolerance around episode min/max delta
    int episode_interval = 5;         // k: eligible frames per episode
    Variant variant = Variant::global;
    // Escape hatch for the literal one-event-per-in-range-frame reading;
    // off by default (one intervention per episode).
    bool allow_multiple_per_episode = false;

    void validate() const {
        if (!(tau > 0.0 && tau <= 1.0))
            throw Error("tau must be in (0, 1], got " + std::to_string(tau));
        if (conversation_interval < 1)
            throw Error("conversation interval m must be >= 1, got " +
                        std::to_string(conversation_interval));
        if (extrema_range < 0)
            throw Error("extrema range r must be >= 0, got " + std::to_string(extrema_range));
        if (episode_interval < 2)
            throw Error("episode interval k must be >= 2, got " +
                        std::to_string(episode_interval));
    }
};

/// Tolerance bands around an episode's minimum and maximum delta. The bands
/// are closed integer intervals and may overlap into one contiguous range.
struct ExtremaRange {
    long low_center = 0;   // episode's minimum delta
    long high_center = 0;  // episode's maximum delta
    long tolerance = 0;

    bool contains(long x) const {
        return std::abs(x - low_center) <= tolerance || std::abs(x - high_center) <= tolerance;
    }

    bool operator==(const ExtremaRange&) const = default;
};

inline ExtremaRange make_extrema_range(const std::vector<long>& episode_deltas, long tolerance) {
    const auto [lo, hi] = std::minmax_element(episode_deltas.begin(), episode_deltas.end());
    return ExtremaRange{*lo, *hi, tolerance};
}

enum class Trigger { bootstrap, extrema };

inline const char* to_string(Trigger t) {
    return t == Trigger::bootstrap ? "bootstrap" : "extrema";
}

struct InterventionEvent {
    int frame_index = 0;
    int episode_index = 0;
    Trigger trigger = Trigger::extrema;
    long delta_at_trigger = 0;

    bool operator==(const InterventionEvent&) const = default;
};

/// Mutable progress of one detection session; snapshots are plain values.
struct DetectorState {
    int episode_index = 0;             // n; 0 while bootstrapping
    int frames_in_episode = 0;         // t; eligible frames consumed this episode
    std::vector<long> episode_deltas;  // E_obj
    std::optional<ExtremaRange> active_range;     // absent exactly while n == 0
    std::optional<int> conversation_block_until;  // last blocked frame index
    bool intervened_this_episode = false;
};

/// True when frame t qualifies for consideration: its similarity to the
/// predecessor is strictly below tau. Frame 0 has no predecessor and never
/// qualifies.
inline bool eligible(std::size_t t, const SsimSeries& series, const DetectorConfig& config) {
    if (t == 0) return false;
    return series.at_frame(t) < config.tau;
}

/// Online form of the detection algorithm: feed (frame, ssim, delta) triples
/// in strictly increasing frame order; an event, when one fires, is returned
/// on the triggering push. Produces exactly the batch detect() output.
class StreamingDetector {
public:
    explicit StreamingDetector(DetectorConfig config) : config_(config) {
        config_.validate();
    }

    std::optional<InterventionEvent> push(int frame_index, double ssim_value, long delta) {
        if (frame_index < 1)
            throw Error("streaming detector: frame " + std::to_string(frame_index) +
                        " has no predecessor signal");
        if (last_frame_ && frame_index <= *last_frame_)
            throw Error("streaming detector: out-of-order frame " +
                        std::to_string(frame_index) + " after " + std::to_string(*last_frame_));
        last_frame_ = frame_index;

        if (ssim_value >= config_.tau) return std::nullopt;  // ineligible, no progress
        if (state_.conversation_block_until &&
            frame_index <= *state_.conversation_block_until)
            return std::nullopt;  // inside a conversation block, skipped entirely

        state_.frames_in_episode += 1;
        state_.episode_deltas.push_back(delta);

        std::optional<InterventionEvent> event;
        if (state_.episode_index == 0) {
            if (state_.frames_in_episode == config_.episode_interval) {
                state_.active_range =
                    make_extrema_range(state_.episode_deltas, config_.extrema_range);
                event = InterventionEvent{frame_index, 0, Trigger::bootstrap, delta};
                open_block(frame_index);
                close_episode();
            }
        } else {
            const bool may_fire =
                !state_.intervened_this_episode || config_.allow_multiple_per_episode;
            if (may_fire && state_.active_range->contains(delta)) {
                event = InterventionEvent{frame_index, state_.episode_index, Trigger::extrema,
                                          delta};
                open_block(frame_index);
                state_.intervened_this_episode = true;
            }
            if (state_.frames_in_episode == config_.episode_interval) {
                if (config_.variant == Variant::local)
                    state_.active_range =
                        make_extrema_range(state_.episode_deltas, config_.extrema_range);
                close_episode();
            }
        }
        return event;
    }

    const DetectorState& state() const { return state_; }
    const DetectorConfig& config() const { return config_; }

private:
    void open_block(int frame_index) {
        state_.conversation_block_until = frame_index + config_.conversation_interval;
    }

    void close_episode() {
        state_.episode_index += 1;
        state_.frames_in_episode = 0;
        state_.episode_deltas.clear();
        state_.intervened_this_episode = false;
    }

    DetectorConfig config_;
    DetectorState state_;
    std::optional<int> last_frame_;
};

/// Batch detection over complete series. Implemented as its own pass rather
/// than a wrapper around StreamingDetector so the two can be checked against
/// each other.
inline std::vector<InterventionEvent> detect(const SsimSeries& ssim_series,
                                             const AlignmentSeries& alignment,
                                             const DetectorConfig& config) {
    config.validate();
    if (ssim_series.size() != alignment.size())
        throw Error("detect: series length mismatch (ssim " +
                    std::to_string(ssim_series.size()) + ", alignment " +
                    std::to_string(alignment.size()) + ")");
    if (ssim_series.size() < static_cast<std::size_t>(config.episode_interval))
        throw Error("detect: series length " + std::to_string(ssim_series.size()) +
                    " is shorter than episode interval k=" +
                    std::to_string(config.episode_interval) + "; no detection possible");

    std::vector<InterventionEvent> events;
    int n = 0;
    int in_episode = 0;
    std::vector<long> episode_deltas;
    ExtremaRange range;
    long block_until = -1;  // no block yet; blocks only ever follow an event
    bool fired_this_episode = false;

    const std::size_t last = ssim_series.size();  // frames 1..last carry signals
    for (std::size_t t = 1; t <= last; ++t) {
        if (ssim_series.at_frame(t) >= config.tau) continue;
        if (static_cast<long>(t) <= block_until) continue;

        const long delta = alignment.at_frame(t);
        in_episode += 1;
        episode_deltas.push_back(delta);

        if (n == 0) {
            if (in_episode == config.episode_interval) {
                range = make_extrema_range(episode_deltas, config.extrema_range);
                events.push_back(InterventionEvent{static_cast<int>(t), 0, Trigger::bootstrap,
                                                   delta});
                block_until = static_cast<long>(t) + config.conversation_interval;
                n = 1;
                in_episode = 0;
                episode_deltas.clear();
                fired_this_episode = false;
            }
        } else {
            if ((!fired_this_episode || config.allow_multiple_per_episode) &&
                range.contains(delta)) {
                events.push_back(InterventionEvent{static_cast<int>(t), n, Trigger::extrema,
                                                   delta});
                block_until = static_cast<long>(t) + config.conversation_interval;
                fired_this_episode = true;
            }
            if (in_episode == config.episode_interval) {
                if (config.variant == Variant::local)
                    range = make_extrema_range(episode_deltas, config.extrema_range);
                n += 1;
                in_episode = 0;
                episode_deltas.clear();
                fired_this_episode = false;
            }
        }
    }
    return events;
}

}  // namespace yeti
