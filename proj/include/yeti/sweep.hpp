#pragma once

#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>
#include <vector>

#include "yeti/alignment.hpp"
#include "yeti/detector.hpp"
#include "yeti/error.hpp"
#include "yeti/eval.hpp"
#include "yeti/formats.hpp"
#include "yeti/ssim.hpp"

namespace yeti {

/// Hyperparameter grid; defaults cover tau 0.5..0.9, conversation interval
/// 1..5, extrema range 0..2, both variants (150 points) at the reference
/// episode interval.
struct SweepGrid {
    std::vector<double> taus = {0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<int> conversation_intervals = {1, 2, 3, 4, 5};
    std::vector<int> extrema_ranges = {0, 1, 2};
    std::vector<Variant> variants = {Variant::global, Variant::local};
    int episode_interval = 5;

    std::size_t size() const {
        return taus.size() * conversation_intervals.size() * extrema_ranges.size() *
               variants.size();
    }
};

/// Expand the grid into configurations in a fixed order: variant-major, then
/// tau, conversation interval, extrema range. Every value passes the full
/// configuration validation before any run starts.
inline std::vector<DetectorConfig> grid_configs(const SweepGrid& grid) {
    if (grid.size() == 0) throw Error("sweep grid must be nonempty in every dimension");
    std::vector<DetectorConfig> configs;
    configs.reserve(grid.size());
    for (Variant variant : grid.variants)
        for (double tau : grid.taus)
            for (int m : grid.conversation_intervals)
                for (int r : grid.extrema_ranges) {
                    DetectorConfig config;
                    config.tau = tau;
                    config.conversation_interval = m;
                    config.extrema_range = r;
                    config.episode_interval = grid.episode_interval;
                    config.variant = variant;
                    config.validate();
                    configs.push_back(config);
                }
    return configs;
}

struct SweepInput {
    SsimSeries ssim;
    AlignmentSeries alignment;
    std::vector<Annotation> annotations;
    long total_frames = 0;
};

struct SweepRow {
    DetectorConfig config;
    std::size_t detections = 0;
    EvalReport report;
};

/// Run every grid point over every session and score it. Points execute
/// concurrently; the returned rows follow grid order exactly.
inline std::vector<SweepRow> run_sweep(const std::vector<SweepInput>& sessions,
                                       const SweepGrid& grid, EvalMode mode, double window_s,
                                       Aggregation aggregation = Aggregation::micro,
                                       unsigned threads = 1) {
    if (sessions.empty()) throw Error("sweep needs at least one session");
    const std::vector<DetectorConfig> configs = grid_configs(grid);
    std::vector<SweepRow> rows(configs.size());

    auto run_point = [&](std::size_t p) {
        SweepRow row;
        row.config = configs[p];
        std::vector<EvalReport> reports;
        reports.reserve(sessions.size());
        for (const SweepInput& s : sessions) {
            const std::vector<InterventionEvent> events =
                detect(s.ssim, s.alignment, configs[p]);
            row.detections += events.size();
            std::vector<int> frames;
            frames.reserve(events.size());
            for (const InterventionEvent& e : events) frames.push_back(e.frame_index);
            reports.push_back(evaluate_session(frames, s.annotations, mode, std::nullopt,
                                               window_s, s.total_frames));
        }
        row.report = reports.size() == 1 ? std::move(reports.front())
                                         : aggregate_reports(reports, aggregation);
        rows[p] = std::move(row);
    };

    if (threads <= 1 || configs.size() <= 1) {
        for (std::size_t p = 0; p < configs.size(); ++p) run_point(p);
        return rows;
    }
    std::mutex failure_mutex;
    std::exception_ptr failure;
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(configs.size()));
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned w = 0; w < n; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t p = w; p < configs.size(); p += n) run_point(p);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return rows;
}

inline void write_sweep_csv(const std::filesystem::path& path,
                            const std::vector<SweepRow>& rows) {
    auto out = formats_detail::open_out(path);
    out << "variant,tau,conv_interval,extrema_range,episode_interval,sessions,detections,"
           "tp,fp,fn,tn,accuracy,precision,recall,f_measure\n";
    for (const SweepRow& row : rows) {
        const MatchResult& c = row.report.overall;
        const Metrics& m = row.report.metrics;
        out << to_string(row.config.variant) << ',' << formats_detail::sig9(row.config.tau)
            << ',' << row.config.conversation_interval << ',' << row.config.extrema_range
            << ',' << row.config.episode_interval << ',' << row.report.session_count << ','
            << row.detections << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn
            << ',' << formats_detail::metric_csv(m.accuracy) << ','
            << formats_detail::metric_csv(m.precision) << ','
            << formats_detail::metric_csv(m.recall) << ','
            << formats_detail::metric_csv(m.f_measure) << '\n';
    }
    formats_detail::finish_out(out, path);
}

}  // namespace yeti
