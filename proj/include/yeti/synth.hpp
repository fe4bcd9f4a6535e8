#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "yeti/alignment.hpp"
#include "yeti/error.hpp"
#include "yeti/eval.hpp"
#include "yeti/frame.hpp"
#include "yeti/ssim.hpp"

namespace yeti {

namespace synth_detail {

// Counter-based randomness: every draw is a pure function of (seed, stream,
// counter), so frames can be produced in any order, on any thread, with
// identical results.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t rng_u64(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

inline double rng_unit(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return static_cast<double>(rng_u64(seed, stream, counter) >> 11) * 0x1.0p-53;
}

enum Stream : std::uint64_t {
    kLayout = 1,
    kBrightness = 2,
    kIdle = 3,
    kJitter = 4,
    kOps = 5,
    kClass = 6,
};

inline std::uint64_t frame_stream(Stream kind, int frame) {
    return (static_cast<std::uint64_t>(kind) << 40) | static_cast<std::uint64_t>(frame);
}

}  // namespace synth_detail

/// Relative weights for the three intervention classes planted annotations
/// draw from, in taxonomy order.
struct ClassMix {
    double follow_up_instruction = 1.0;
    double confirm_action = 1.0;
    double correct_mistake = 1.0;

    void validate() const {
        if (follow_up_instruction < 0.0 || confirm_action < 0.0 || correct_mistake < 0.0)
            throw Error("class mix weights must be non-negative");
        if (follow_up_instruction + confirm_action + correct_mistake <= 0.0)
            throw Error("class mix weights must not all be zero");
    }
};

/// Scripted session layout: squares on a black grid, one frame per second.
/// Each planted intervention is a five-frame activity burst around its start
/// b (frames b-1..b+3) whose count deltas run 0, +1, 0, -1, 0; every burst
/// frame also relocates squares so consecutive-frame similarity drops well
/// below the eligibility threshold. Outside bursts the scene either freezes
/// (idle) or carries faint pixel jitter that similarity filtering discards.
struct ScenarioSpec {
    std::uint64_t seed = 1;
    int duration_s = 60;
    double idle_fraction = 0.5;
    int n_interventions = 1;
    int frame_width = 64;
    int frame_height = 64;
    int object_size_px = 8;
    ClassMix class_mix;

    int cell_px() const { return object_size_px + 2; }
    int grid_cols() const { return frame_width / cell_px(); }
    int grid_rows() const { return frame_height / cell_px(); }
    int grid_cells() const { return grid_cols() * grid_rows(); }
    int base_object_count() const { return 5; }
    // earliest start leaves room for the leading burst frame; latest keeps
    // the trailing one inside the session
    int first_start() const { return 2; }
    int last_start() const { return duration_s - 4; }
    static constexpr int kMinStartSpacing = 12;

    int min_duration() const {
        if (n_interventions == 0) return 1;
        return first_start() + kMinStartSpacing * (n_interventions - 1) + 4;
    }

    void validate() const {
        if (duration_s < 1)
            throw Error("duration must be at least 1 s, got " + std::to_string(duration_s));
        if (idle_fraction < 0.0 || idle_fraction > 1.0)
            throw Error("idle fraction must be in [0, 1], got " + std::to_string(idle_fraction));
        if (n_interventions < 0)
            throw Error("intervention count must be non-negative, got " +
                        std::to_string(n_interventions));
        if (frame_width < 1 || frame_height < 1)
            throw Error("frame dimensions must be positive");
        if (object_size_px < 1)
            throw Error("object size must be positive, got " + std::to_string(object_size_px));
        if (grid_cells() < base_object_count() + 2)
            throw Error("frame " + std::to_string(frame_width) + "x" +
                        std::to_string(frame_height) + " with object size " +
                        std::to_string(object_size_px) + " yields only " +
                        std::to_string(grid_cells()) + " grid cells; need at least " +
                        std::to_string(base_object_count() + 2));
        class_mix.validate();
        if (duration_s < min_duration())
            throw Error("infeasible scenario: " + std::to_string(n_interventions) +
                        " interventions need at least " + std::to_string(min_duration()) +
                        " s, duration is " + std::to_string(duration_s) + " s");
    }
};

/// Derived timing the generator committed to; recorded so outputs can be
/// cross-checked against pixels, never the other way around.
struct SynthSchedule {
    std::vector<int> planted_starts;
    std::vector<std::string> planted_classes;
    std::vector<int> user_utterances_s;
    std::vector<std::pair<int, int>> idle_spans;  // inclusive frame ranges
    int base_object_count = 0;
};

struct SyntheticSession {
    FrameSequence frames;
    CountSeries counts;
    std::vector<Annotation> annotations;
    ScenarioSpec spec;
    SynthSchedule schedule;
};

namespace synth_detail {

struct Square {
    int cell;
    std::uint8_t brightness;
};

struct Scene {
    std::vector<Square> squares;
    std::vector<bool> occupied;  // by cell index

    explicit Scene(int cells) : occupied(static_cast<std::size_t>(cells), false) {}

    int free_cell_at(std::uint64_t pick) const {
        std::vector<int> free;
        for (int c = 0; c < static_cast<int>(occupied.size()); ++c)
            if (!occupied[c]) free.push_back(c);
        if (free.empty()) throw Error("synth scene has no free cell");
        return free[pick % free.size()];
    }

    void add(int cell, std::uint8_t brightness) {
        squares.push_back({cell, brightness});
        occupied[cell] = true;
    }

    void remove_at(std::uint64_t pick) {
        if (squares.empty()) throw Error("synth scene has no square to remove");
        const std::size_t i = pick % squares.size();
        occupied[squares[i].cell] = false;
        squares.erase(squares.begin() + static_cast<std::ptrdiff_t>(i));
    }

    void move(std::uint64_t pick_square, std::uint64_t pick_cell) {
        if (squares.empty()) throw Error("synth scene has no square to move");
        Square& s = squares[pick_square % squares.size()];
        const int target = free_cell_at(pick_cell);
        occupied[s.cell] = false;
        s.cell = target;
        occupied[target] = true;
    }
};

inline std::uint8_t draw_brightness(const ScenarioSpec& spec, std::uint64_t counter) {
    return static_cast<std::uint8_t>(160 + rng_u64(spec.seed, kBrightness, counter) % 96);
}

inline Frame render(const ScenarioSpec& spec, const std::vector<Square>& squares,
                    int frame_index, bool jitter) {
    Frame f;
    f.index = frame_index;
    f.width = spec.frame_width;
    f.height = spec.frame_height;
    f.pixels.assign(f.pixel_count(), 0);

    const int cell = spec.cell_px();
    for (const Square& s : squares) {
        const int cx = s.cell % spec.grid_cols();
        const int cy = s.cell / spec.grid_cols();
        const int x0 = cx * cell + 1;
        const int y0 = cy * cell + 1;
        for (int dy = 0; dy < spec.object_size_px; ++dy)
            for (int dx = 0; dx < spec.object_size_px; ++dx)
                f.pixels[static_cast<std::size_t>(y0 + dy) * f.width + (x0 + dx)] =
                    s.brightness;
    }

    if (jitter) {
        const std::size_t npix = f.pixels.size();
        const std::size_t touched = npix / 100;
        const std::uint64_t stream = frame_stream(kJitter, frame_index);
        for (std::size_t j = 0; j < touched; ++j) {
            const std::uint64_t pick = rng_u64(spec.seed, stream, 2 * j);
            const bool up = rng_u64(spec.seed, stream, 2 * j + 1) & 1;
            std::uint8_t& p = f.pixels[pick % npix];
            const int v = static_cast<int>(p) + (up ? 2 : -2);
            p = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
    }
    return f;
}

inline int moves_per_burst_frame(const ScenarioSpec& spec) {
    const int area = spec.frame_width * spec.frame_height;
    const int per_object = 32 * spec.object_size_px * spec.object_size_px;
    return std::max(1, area / per_object);
}

inline std::vector<int> plant_starts(const ScenarioSpec& spec) {
    std::vector<int> starts;
    const int n = spec.n_interventions;
    if (n == 0) return starts;
    if (n == 1) {
        starts.push_back(spec.first_start());
        return starts;
    }
    const double step = static_cast<double>(spec.last_start() - spec.first_start()) /
                        static_cast<double>(n - 1);
    for (int i = 0; i < n; ++i)
        starts.push_back(spec.first_start() +
                         static_cast<int>(std::llround(step * static_cast<double>(i))));
    return starts;
}

inline std::string draw_class(const ScenarioSpec& spec, int intervention_index) {
    const ClassMix& mix = spec.class_mix;
    const double total =
        mix.follow_up_instruction + mix.confirm_action + mix.correct_mistake;
    const double r = rng_unit(spec.seed, kClass, static_cast<std::uint64_t>(
                                                     intervention_index)) *
                     total;
    if (r < mix.follow_up_instruction) return std::string(kProactiveClasses[0]);
    if (r < mix.follow_up_instruction + mix.confirm_action)
        return std::string(kProactiveClasses[1]);
    return std::string(kProactiveClasses[2]);
}

}  // namespace synth_detail

/// Build the full session: frames, exact per-frame object counts, planted
/// proactive annotations (one per intervention), and two reactive user
/// utterances so the session carries dialogue from both speakers.
inline SyntheticSession generate(const ScenarioSpec& spec, unsigned threads = 1) {
    using namespace synth_detail;
    spec.validate();

    const int duration = spec.duration_s;
    const std::vector<int> starts = plant_starts(spec);

    // -1 not in a burst; otherwise offset 0..4 within the cluster b-1..b+3
    std::vector<int> burst_offset(static_cast<std::size_t>(duration), -1);
    for (int b : starts)
        for (int off = 0; off < 5; ++off) {
            const int t = b - 1 + off;
            if (t >= 0 && t < duration) burst_offset[static_cast<std::size_t>(t)] = off;
        }

    enum class Kind { base, idle, active, burst };
    std::vector<Kind> kind(static_cast<std::size_t>(duration), Kind::active);
    kind[0] = Kind::base;
    for (int t = 1; t < duration; ++t) {
        if (burst_offset[static_cast<std::size_t>(t)] >= 0)
            kind[static_cast<std::size_t>(t)] = Kind::burst;
        else if (rng_unit(spec.seed, kIdle, static_cast<std::uint64_t>(t)) <
                 spec.idle_fraction)
            kind[static_cast<std::size_t>(t)] = Kind::idle;
    }

    // Sequential pass: evolve the scene, snapshot square layouts per frame.
    Scene scene(spec.grid_cells());
    for (int i = 0; i < spec.base_object_count(); ++i) {
        const std::uint64_t pick = rng_u64(spec.seed, kLayout, static_cast<std::uint64_t>(i));
        scene.add(scene.free_cell_at(pick), draw_brightness(spec, static_cast<std::uint64_t>(i)));
    }

    const int moves = moves_per_burst_frame(spec);
    std::vector<std::vector<Square>> layout(static_cast<std::size_t>(duration));
    CountSeries counts;
    counts.counts.reserve(static_cast<std::size_t>(duration));
    std::uint64_t brightness_counter = static_cast<std::uint64_t>(spec.base_object_count());

    for (int t = 0; t < duration; ++t) {
        if (kind[static_cast<std::size_t>(t)] == Kind::burst) {
            const std::uint64_t stream = frame_stream(kOps, t);
            std::uint64_t c = 0;
            for (int mv = 0; mv < moves; ++mv) {
                const std::uint64_t a = rng_u64(spec.seed, stream, c++);
                const std::uint64_t b = rng_u64(spec.seed, stream, c++);
                scene.move(a, b);
            }
            const int off = burst_offset[static_cast<std::size_t>(t)];
            if (off == 1) {
                const std::uint64_t pick = rng_u64(spec.seed, stream, c++);
                scene.add(scene.free_cell_at(pick), draw_brightness(spec, brightness_counter++));
            } else if (off == 3) {
                scene.remove_at(rng_u64(spec.seed, stream, c++));
            }
        }
        layout[static_cast<std::size_t>(t)] = scene.squares;
        counts.counts.push_back(static_cast<long>(scene.squares.size()));
    }

    // For idle frames, reuse the nearest earlier rendered frame verbatim.
    std::vector<int> source(static_cast<std::size_t>(duration));
    for (int t = 0; t < duration; ++t)
        source[static_cast<std::size_t>(t)] =
            kind[static_cast<std::size_t>(t)] == Kind::idle
                ? source[static_cast<std::size_t>(t - 1)]
                : t;

    FrameSequence seq;
    seq.frames.resize(static_cast<std::size_t>(duration));
    auto render_range = [&](unsigned worker, unsigned stride) {
        for (int t = static_cast<int>(worker); t < duration; t += static_cast<int>(stride)) {
            if (source[static_cast<std::size_t>(t)] != t) continue;
            seq.frames[static_cast<std::size_t>(t)] =
                render(spec, layout[static_cast<std::size_t>(t)], t,
                       kind[static_cast<std::size_t>(t)] == Kind::active);
        }
    };
    if (threads <= 1 || duration < 2) {
        render_range(0, 1);
    } else {
        const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(duration));
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (unsigned w = 0; w < n; ++w) pool.emplace_back(render_range, w, n);
        for (std::thread& t : pool) t.join();
    }
    for (int t = 0; t < duration; ++t) {
        const int src = source[static_cast<std::size_t>(t)];
        if (src != t) {
            seq.frames[static_cast<std::size_t>(t)] = seq.frames[static_cast<std::size_t>(src)];
            seq.frames[static_cast<std::size_t>(t)].index = t;
        }
    }

    SyntheticSession session;
    session.spec = spec;
    session.schedule.planted_starts = starts;
    session.schedule.base_object_count = spec.base_object_count();
    for (std::size_t i = 0; i < starts.size(); ++i)
        session.schedule.planted_classes.push_back(draw_class(spec, static_cast<int>(i)));
    for (int t = 0; t < duration; ++t) {
        if (kind[static_cast<std::size_t>(t)] != Kind::idle) continue;
        if (!session.schedule.idle_spans.empty() &&
            session.schedule.idle_spans.back().second == t - 1)
            session.schedule.idle_spans.back().second = t;
        else
            session.schedule.idle_spans.emplace_back(t, t);
    }
    session.schedule.user_utterances_s = {duration / 3, 2 * duration / 3};

    for (std::size_t i = 0; i < starts.size(); ++i) {
        Annotation a;
        a.start_s = static_cast<double>(starts[i]);
        a.end_s = a.start_s + 3.0;
        a.speaker = Speaker::expert;
        a.type = session.schedule.planted_classes[i];
        a.proactive = true;
        session.annotations.push_back(a);
    }
    for (int u : session.schedule.user_utterances_s) {
        Annotation a;
        a.start_s = static_cast<double>(u);
        a.end_s = a.start_s + 1.0;
        a.speaker = Speaker::user;
        a.type = std::string(kReactiveType);
        a.proactive = false;
        session.annotations.push_back(a);
    }
    std::stable_sort(session.annotations.begin(), session.annotations.end(),
                     [](const Annotation& x, const Annotation& y) {
                         return x.start_s < y.start_s;
                     });

    session.frames = std::move(seq);
    session.counts = std::move(counts);

    if (session.counts.counts.size() != static_cast<std::size_t>(duration))
        throw Error("synth generator produced inconsistent count series");
    const auto planted =
        std::count_if(session.annotations.begin(), session.annotations.end(),
                      [](const Annotation& a) { return a.proactive; });
    if (planted != spec.n_interventions)
        throw Error("synth generator planted " + std::to_string(planted) +
                    " interventions, expected " + std::to_string(spec.n_interventions));
    return session;
}

/// Count objects in one frame by flood-filling bright pixels into connected
/// components. Squares sit on a gapped grid and jitter never lifts background
/// above the threshold, so components and objects coincide.
inline long count_objects_in_frame(const Frame& frame) {
    constexpr std::uint8_t kThreshold = 64;
    const int w = frame.width;
    const int h = frame.height;
    std::vector<bool> seen(frame.pixels.size(), false);
    long components = 0;
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (seen[i] || frame.pixels[i] < kThreshold) continue;
            ++components;
            seen[i] = true;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                constexpr int dx[] = {1, -1, 0, 0};
                constexpr int dy[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nx = cx + dx[d];
                    const int ny = cy + dy[d];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                    if (seen[ni] || frame.pixels[ni] < kThreshold) continue;
                    seen[ni] = true;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    return components;
}

struct VerificationIssue {
    int frame = -1;  // -1 for session-level findings
    std::string what;
};

struct VerificationReport {
    std::vector<VerificationIssue> issues;
    bool ok() const { return issues.empty(); }
};

/// Re-check the session's promises from its pixels: counts are recounted via
/// connected components, idle spans must be near-identical frames with zero
/// count delta, and every planted start must sit next to a count change. The
/// recorded count series is treated as a claim, never as evidence.
inline VerificationReport verify(const SyntheticSession& session) {
    VerificationReport report;
    const std::size_t n_frames = session.frames.size();

    if (session.counts.counts.size() != n_frames) {
        report.issues.push_back(
            {-1, "count series length " + std::to_string(session.counts.counts.size()) +
                     " does not match frame count " + std::to_string(n_frames)});
        return report;
    }

    std::vector<long> recounted(n_frames, 0);
    for (std::size_t t = 0; t < n_frames; ++t) {
        recounted[t] = count_objects_in_frame(session.frames[t]);
        if (recounted[t] != session.counts.counts[t])
            report.issues.push_back(
                {static_cast<int>(t), "object count mismatch: counted " +
                                          std::to_string(recounted[t]) + ", recorded " +
                                          std::to_string(session.counts.counts[t])});
    }

    for (const auto& [first, last] : session.schedule.idle_spans) {
        for (int t = first; t <= last; ++t) {
            if (t < 1 || static_cast<std::size_t>(t) >= n_frames) {
                report.issues.push_back({t, "idle span frame outside session"});
                continue;
            }
            const std::size_t u = static_cast<std::size_t>(t);
            if (recounted[u] != recounted[u - 1])
                report.issues.push_back({t, "idle frame changes object count"});
            const double s = ssim(session.frames[u - 1], session.frames[u]);
            if (!(s > 0.99))
                report.issues.push_back(
                    {t, "idle frame similarity " + std::to_string(s) + " not above 0.99"});
        }
    }

    for (int b : session.schedule.planted_starts) {
        bool moved = false;
        for (int t = b - 1; t <= b + 1; ++t) {
            if (t < 1 || static_cast<std::size_t>(t) >= n_frames) continue;
            const std::size_t u = static_cast<std::size_t>(t);
            if (std::abs(recounted[u] - recounted[u - 1]) >= 1) moved = true;
        }
        if (!moved)
            report.issues.push_back(
                {b, "planted intervention has no count change within 1 s of its start"});
    }

    long planted = 0;
    for (const Annotation& a : session.annotations) {
        try {
            a.validate();
        } catch (const Error& e) {
            report.issues.push_back({-1, std::string("bad annotation: ") + e.what()});
        }
        if (a.proactive) ++planted;
    }
    if (planted != session.spec.n_interventions)
        report.issues.push_back(
            {-1, "session has " + std::to_string(planted) +
                     " proactive annotations, spec asked for " +
                     std::to_string(session.spec.n_interventions)});
    return report;
}

}  // namespace yeti
