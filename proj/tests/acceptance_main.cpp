// Acceptance gate: one pass/fail line per criterion, nonzero exit when any
// fails. Criteria with runtime budgets are timed and fail when they overrun.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "random_instances.hpp"
#include "reference_detector.hpp"
#include "yeti/yeti.hpp"

namespace {

namespace fs = std::filesystem;

void require(bool condition, const std::string& message) {
    if (!condition) throw yeti::Error(message);
}

struct Gate {
    int failures = 0;
    fs::path scratch;

    void run(int number, const std::string& name, double budget_s,
             const std::function<void()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string failure;
        try {
            body();
        } catch (const std::exception& e) {
            failure = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (failure.empty() && budget_s > 0.0 && elapsed > budget_s)
            failure = "overran budget";

        if (failure.empty()) {
            if (budget_s > 0.0)
                std::printf("PASS  criterion %2d: %s (%.2f s, budget %.0f s)\n", number,
                            name.c_str(), elapsed, budget_s);
            else
                std::printf("PASS  criterion %2d: %s (%.2f s)\n", number, name.c_str(),
                            elapsed);
        } else {
            ++failures;
            std::printf("FAIL  criterion %2d: %s (%.2f s) - %s\n", number, name.c_str(),
                        elapsed, failure.c_str());
        }
        std::fflush(stdout);
    }
};

yeti::Frame random_frame(std::mt19937_64& rng, int width, int height) {
    yeti::Frame f;
    f.width = width;
    f.height = height;
    f.pixels.resize(f.pixel_count());
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
    return f;
}

yeti::Frame flat_frame(int width, int height, std::uint8_t value) {
    yeti::Frame f;
    f.width = width;
    f.height = height;
    f.pixels.assign(f.pixel_count(), value);
    return f;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------------------

void criterion_ssim() {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 200; ++i) {
        const yeti::Frame a = random_frame(rng, 8, 8);
        require(std::abs(yeti::ssim(a, a) - 1.0) <= 1e-9,
                "self-similarity " + fmt(yeti::ssim(a, a)) + " not within 1e-9 of 1");
        const yeti::Frame b = random_frame(rng, 8, 8);
        require(std::abs(yeti::ssim(a, b) - yeti::ssim(b, a)) <= 1e-12,
                "asymmetry beyond 1e-12");
    }

    yeti::FrameSequence seq;
    seq.frames.reserve(10000);
    for (int i = 0; i < 10000; ++i) {
        yeti::Frame f = random_frame(rng, 8, 8);
        f.index = i;
        seq.frames.push_back(std::move(f));
    }
    const yeti::SsimSeries series = yeti::compute_ssim_series(seq, 4);
    for (double v : series.values)
        require(v >= -1.0 && v <= 1.0, "value " + fmt(v) + " outside [-1, 1]");

    const double floor_value = yeti::ssim(flat_frame(2, 2, 0), flat_frame(2, 2, 255));
    require(std::abs(floor_value - 9.99908e-5) <= 1e-8,
            "black/white value " + fmt(floor_value) + " not within 1e-8 of 9.99908e-5");
}

void criterion_alignment() {
    std::mt19937_64 rng(102);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        const long shift = static_cast<long>(rng() % 500);
        yeti::CountSeries counts, shifted;
        for (std::size_t i = 0; i < n; ++i) {
            const long c = static_cast<long>(rng() % 11);
            counts.counts.push_back(c);
            shifted.counts.push_back(c + shift);
        }
        const auto deltas = yeti::compute_alignment(counts);
        long sum = 0;
        for (long d : deltas.deltas) sum += d;
        require(sum == counts.counts.back() - counts.counts.front(),
                "telescoping identity violated");
        require(deltas.deltas == yeti::compute_alignment(shifted).deltas,
                "constant shift changed the deltas");
    }

    const auto example = yeti::compute_alignment(yeti::CountSeries{{3, 3, 4, 4, 2}});
    require(example.deltas == std::vector<long>{0, 1, 0, -2},
            "worked example deltas are wrong");
}

void criterion_oracle() {
    std::size_t mismatches = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const testinput::Instance inst = testinput::make_instance(i);
        const auto batch = yeti::detect(inst.ssim, inst.deltas, inst.config);
        const auto streaming = testinput::run_streaming(inst);
        const auto reference =
            reference::simulate(inst.ssim.values, inst.deltas.deltas, inst.config);
        if (batch != streaming || batch != reference.events) ++mismatches;
    }
    require(mismatches == 0, std::to_string(mismatches) + " of 1000 instances disagree");
}

void criterion_structural() {
    std::size_t violations = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const testinput::Instance inst = testinput::make_instance(i);
        const auto events = yeti::detect(inst.ssim, inst.deltas, inst.config);
        const auto reference =
            reference::simulate(inst.ssim.values, inst.deltas.deltas, inst.config);

        for (std::size_t e = 0; e < events.size(); ++e) {
            if (!yeti::eligible(static_cast<std::size_t>(events[e].frame_index), inst.ssim,
                                inst.config))
                ++violations;
            if (e > 0 && events[e].frame_index - events[e - 1].frame_index <
                             inst.config.conversation_interval + 1)
                ++violations;
            if (!inst.config.allow_multiple_per_episode && e > 0 &&
                events[e].episode_index == events[e - 1].episode_index)
                ++violations;
        }
        if (inst.config.variant == yeti::Variant::global && !reference.episodes.empty()) {
            const auto bootstrap_range = reference.episodes.front().range_after;
            for (const auto& ep : reference.episodes)
                if (!(ep.range_after == bootstrap_range)) ++violations;
        }
    }
    require(violations == 0, std::to_string(violations) + " structural violations");
}

void criterion_hand_trace() {
    const yeti::AlignmentSeries deltas{{0, 1, 0, 0, -1, 1, 0}};
    yeti::SsimSeries ssim;
    ssim.values.assign(7, 0.0);
    yeti::DetectorConfig config;
    config.episode_interval = 3;
    config.extrema_range = 0;
    config.conversation_interval = 1;
    config.variant = yeti::Variant::global;

    const auto events = yeti::detect(ssim, deltas, config);
    require(events.size() == 2, "expected 2 events, got " + std::to_string(events.size()));
    require(events[0].frame_index == 3 && events[0].trigger == yeti::Trigger::bootstrap,
            "first event must be the bootstrap at frame 3");
    require(events[1].frame_index == 6 && events[1].trigger == yeti::Trigger::extrema,
            "second event must be the extrema hit at frame 6");
}

void criterion_end_to_end(yeti::SyntheticSession& session_out) {
    yeti::ScenarioSpec spec;
    spec.seed = 1;
    spec.duration_s = 300;
    spec.idle_fraction = 0.5;
    spec.n_interventions = 8;
    const auto session = yeti::generate(spec, 4);

    const auto ssim = yeti::compute_ssim_series(session.frames, 4);
    const auto alignment = yeti::compute_alignment(session.counts);
    const auto events = yeti::detect(ssim, alignment, yeti::DetectorConfig{});

    std::vector<int> detections;
    for (const auto& e : events) detections.push_back(e.frame_index);
    const auto report =
        yeti::evaluate_session(detections, session.annotations, yeti::EvalMode::intervention,
                               std::nullopt, 5.0, spec.duration_s);
    require(report.metrics.recall.has_value(), "recall undefined");
    require(*report.metrics.recall >= 0.8,
            "recall " + fmt(*report.metrics.recall) + " below 0.8");

    std::vector<int> perfect;
    for (const auto& a : session.annotations)
        if (a.proactive) perfect.push_back(static_cast<int>(a.start_s));
    const auto ideal =
        yeti::evaluate_session(perfect, session.annotations, yeti::EvalMode::intervention,
                               std::nullopt, 5.0, spec.duration_s);
    require(ideal.metrics.precision == 1.0 && ideal.metrics.recall == 1.0 &&
                ideal.metrics.f_measure == 1.0,
            "perfect detections must score P=R=F=1.0");

    session_out = session;
}

void criterion_skew() {
    yeti::ScenarioSpec spec;
    spec.seed = 1;
    spec.duration_s = 300;
    spec.idle_fraction = 0.8;
    spec.n_interventions = 8;
    const auto session = yeti::generate(spec, 4);

    const auto hist = yeti::delta_histogram(yeti::compute_alignment(session.counts));
    std::size_t total = 0;
    for (const auto& [delta, n] : hist) total += n;
    const double zero_share =
        hist.count(0) ? static_cast<double>(hist.at(0)) / static_cast<double>(total) : 0.0;
    require(zero_share >= 0.7,
            "zero bin holds " + fmt(zero_share) + " of mass, needs 0.7");
}

void criterion_eval_arithmetic(const fs::path& scratch) {
    const auto example = yeti::match_detections({10, 40}, {12.0, 100.0}, 5.0, 300);
    const auto m = yeti::compute_metrics(example);
    require(m.precision == 0.5 && m.recall == 0.5 && m.f_measure == 0.5,
            "worked example must score P=R=F=0.5 exactly");

    std::mt19937_64 rng(108);
    for (int trial = 0; trial < 1000; ++trial) {
        yeti::MatchResult r;
        r.tp = static_cast<long>(rng() % 20);
        r.fp = static_cast<long>(rng() % 20);
        r.fn = static_cast<long>(rng() % 20);
        r.tn = static_cast<long>(rng() % 100);
        const auto metrics = yeti::compute_metrics(r);
        if (!metrics.f_measure) continue;
        const double p = *metrics.precision;
        const double q = *metrics.recall;
        require(std::abs(*metrics.f_measure - 2.0 * p * q / (p + q)) <= 1e-12,
                "f-measure is not the harmonic mean");
    }

    // a session with nothing to find and nothing found: precision, recall,
    // and f-measure are all 0/0 and must print as n/a
    const auto report =
        yeti::evaluate_session({}, {}, yeti::EvalMode::intervention, std::nullopt, 5.0, 50);
    const fs::path csv = scratch / "undefined_metrics.csv";
    yeti::write_eval_report_csv(csv, report);
    std::ifstream in(csv);
    std::string header, overall;
    std::getline(in, header);
    std::getline(in, overall);
    require(overall == "overall,0,0,0,50,1,n/a,n/a,n/a",
            "undefined metrics row reads '" + overall + "'");
}

void criterion_compactness(const fs::path& scratch) {
    yeti::ScenarioSpec spec;
    spec.seed = 1;
    spec.duration_s = 3600;
    spec.idle_fraction = 0.5;
    spec.n_interventions = 8;
    const auto session = yeti::generate(spec, 4);
    const auto ssim = yeti::compute_ssim_series(session.frames, 4);
    const auto alignment = yeti::compute_alignment(session.counts);

    const fs::path ssim_csv = scratch / "ssim_3600.csv";
    const fs::path deltas_csv = scratch / "deltas_3600.csv";
    yeti::write_ssim_csv(ssim_csv, ssim);
    yeti::write_deltas_csv(deltas_csv, alignment);

    const auto total = fs::file_size(ssim_csv) + fs::file_size(deltas_csv);
    require(total < 100 * 1024,
            "serialized signals take " + std::to_string(total) + " bytes, budget 102400");
}

void criterion_sweep(const yeti::SyntheticSession& session) {
    yeti::SweepInput input;
    input.ssim = yeti::compute_ssim_series(session.frames, 4);
    input.alignment = yeti::compute_alignment(session.counts);
    input.annotations = session.annotations;
    input.total_frames = session.spec.duration_s;

    const yeti::SweepGrid grid;  // 5 taus x 5 intervals x 3 ranges x 2 variants
    require(grid.size() == 150, "default grid must hold 150 points");
    const auto rows = yeti::run_sweep({input}, grid, yeti::EvalMode::intervention, 5.0,
                                      yeti::Aggregation::micro, 4);
    require(rows.size() == 150,
            "sweep produced " + std::to_string(rows.size()) + " rows, expected 150");
    for (std::size_t i = 0; i < rows.size(); ++i)
        require(rows[i].report.session_count >= 1, "sweep row missing its report");
}

}  // namespace

int main() {
    Gate gate;
    gate.scratch = fs::temp_directory_path() /
                   ("acceptance-" + std::to_string(static_cast<unsigned>(
                                        std::random_device{}())));
    fs::create_directories(gate.scratch);

    yeti::SyntheticSession cooperative;

    gate.run(1, "ssim identity, symmetry, range, floor value", 5.0, criterion_ssim);
    gate.run(2, "alignment telescoping, shift invariance, worked example", 1.0,
             criterion_alignment);
    gate.run(3, "batch/streaming/reference agreement on 1000 instances", 30.0,
             criterion_oracle);
    gate.run(4, "structural invariants across the same corpus", 0.0, criterion_structural);
    gate.run(5, "hand-traced event sequence {3, 6}", 0.0, criterion_hand_trace);
    gate.run(6, "synthetic end-to-end recall at default settings", 20.0,
             [&] { criterion_end_to_end(cooperative); });
    gate.run(7, "delta histogram skew toward zero", 0.0, criterion_skew);
    gate.run(8, "evaluation arithmetic and n/a printing", 0.0,
             [&] { criterion_eval_arithmetic(gate.scratch); });
    gate.run(9, "hour-long session signals serialize under 100 KB", 0.0,
             [&] { criterion_compactness(gate.scratch); });
    gate.run(10, "150-point sweep on the cooperative session", 120.0,
             [&] { criterion_sweep(cooperative); });

    std::error_code ec;
    fs::remove_all(gate.scratch, ec);

    if (gate.failures == 0) {
        std::printf("all 10 criteria passed\n");
        return 0;
    }
    std::printf("%d criterion(s) failed\n", gate.failures);
    return 1;
}
