#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "yeti/alignment.hpp"
#include "yeti/detector.hpp"
#include "yeti/error.hpp"
#include "yeti/eval.hpp"
#include "yeti/frame.hpp"
#include "yeti/frame_io.hpp"
#include "yeti/ssim.hpp"
#include "yeti/synth.hpp"

namespace yeti {

using Json = nlohmann::ordered_json;

namespace formats_detail {

inline std::string sig9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

inline void finish_out(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw Error("write failed for " + path.string());
}

/// Split one CSV line on commas. No field in any format here contains a
/// comma or quote, so no quoting rules are needed.
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string::size_type begin = 0;
    while (true) {
        const auto comma = line.find(',', begin);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(begin));
            return fields;
        }
        fields.push_back(line.substr(begin, comma - begin));
        begin = comma + 1;
    }
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

inline long parse_long(const std::string& text, const std::filesystem::path& path,
                       std::size_t line_no, const char* what) {
    try {
        std::size_t used = 0;
        const long v = std::stol(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": bad " + what + " '" +
                    text + "'");
    }
}

inline double parse_double(const std::string& text, const std::filesystem::path& path,
                           std::size_t line_no, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": bad " + what + " '" +
                    text + "'");
    }
}

inline void require_header(const std::string& got, const char* want,
                           const std::filesystem::path& path) {
    if (strip_cr(got) != want)
        throw Error(path.string() + ": expected header '" + want + "', got '" + got + "'");
}

}  // namespace formats_detail

// ---------------------------------------------------------------------------
// SSIM series: header frame_index,ssim; one row per t in 1..T-1; values carry
// nine significant digits.

inline void write_ssim_csv(const std::filesystem::path& path, const SsimSeries& series) {
    auto out = formats_detail::open_out(path);
    out << "frame_index,ssim\n";
    for (std::size_t i = 0; i < series.values.size(); ++i)
        out << (i + 1) << ',' << formats_detail::sig9(series.values[i]) << '\n';
    formats_detail::finish_out(out, path);
}

inline SsimSeries read_ssim_csv(const std::filesystem::path& path) {
    auto in = formats_detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
    formats_detail::require_header(line, "frame_index,ssim", path);
    SsimSeries series;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = formats_detail::strip_cr(line);
        if (line.empty()) continue;
        const auto fields = formats_detail::split_csv(line);
        if (fields.size() != 2)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
        const long idx = formats_detail::parse_long(fields[0], path, line_no, "frame index");
        if (idx != static_cast<long>(series.values.size()) + 1)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected frame " +
                        std::to_string(series.values.size() + 1) + ", got " +
                        std::to_string(idx));
        series.values.push_back(
            formats_detail::parse_double(fields[1], path, line_no, "ssim value"));
    }
    if (series.values.empty()) throw Error(path.string() + ": no data rows");
    return series;
}

// ---------------------------------------------------------------------------
// Count series: header frame_index,count; a row for every frame 0..T-1.

inline void write_counts_csv(const std::filesystem::path& path, const CountSeries& counts) {
    auto out = formats_detail::open_out(path);
    out << "frame_index,count\n";
    for (std::size_t t = 0; t < counts.counts.size(); ++t)
        out << t << ',' << counts.counts[t] << '\n';
    formats_detail::finish_out(out, path);
}

/// Read counts, rejecting gaps, duplicates, negatives, and (when the caller
/// knows the frame count) length mismatches.
inline CountSeries load_counts_csv(const std::filesystem::path& path,
                                   std::optional<std::size_t> expected_length = std::nullopt) {
    auto in = formats_detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
    formats_detail::require_header(line, "frame_index,count", path);

    std::map<long, long> rows;
    long max_index = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = formats_detail::strip_cr(line);
        if (line.empty()) continue;
        const auto fields = formats_detail::split_csv(line);
        if (fields.size() != 2)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
        const long idx = formats_detail::parse_long(fields[0], path, line_no, "frame index");
        const long count = formats_detail::parse_long(fields[1], path, line_no, "count");
        if (idx < 0)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": negative frame index");
        if (count < 0)
            throw Error(path.string() + ": negative count " + std::to_string(count) +
                        " at frame " + std::to_string(idx));
        if (!rows.emplace(idx, count).second)
            throw Error(path.string() + ": duplicate frame " + std::to_string(idx));
        max_index = std::max(max_index, idx);
    }
    if (rows.empty()) throw Error(path.string() + ": no data rows");

    const std::size_t length = expected_length ? *expected_length
                                               : static_cast<std::size_t>(max_index) + 1;
    if (max_index >= static_cast<long>(length))
        throw Error(path.string() + ": frame " + std::to_string(max_index) +
                    " beyond expected length " + std::to_string(length));
    CountSeries counts;
    counts.counts.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        const auto it = rows.find(static_cast<long>(t));
        if (it == rows.end())
            throw Error(path.string() + ": missing frame " + std::to_string(t));
        counts.counts.push_back(it->second);
    }
    counts.validate();
    return counts;
}

// ---------------------------------------------------------------------------
// Alignment deltas and their histogram.

inline void write_deltas_csv(const std::filesystem::path& path, const AlignmentSeries& series) {
    auto out = formats_detail::open_out(path);
    out << "frame_index,delta\n";
    for (std::size_t i = 0; i < series.deltas.size(); ++i)
        out << (i + 1) << ',' << series.deltas[i] << '\n';
    formats_detail::finish_out(out, path);
}

inline void write_histogram_csv(const std::filesystem::path& path,
                                const std::map<long, std::size_t>& histogram) {
    auto out = formats_detail::open_out(path);
    out << "delta,count\n";
    for (const auto& [delta, count] : histogram) out << delta << ',' << count << '\n';
    formats_detail::finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Detections: CSV for eyeballing, JSON carrying the full configuration and
// the session frame count for downstream evaluation.

inline void write_detections_csv(const std::filesystem::path& path,
                                 const std::vector<InterventionEvent>& events) {
    auto out = formats_detail::open_out(path);
    out << "frame_index,episode,trigger,delta\n";
    for (const InterventionEvent& e : events)
        out << e.frame_index << ',' << e.episode_index << ',' << to_string(e.trigger) << ','
            << e.delta_at_trigger << '\n';
    formats_detail::finish_out(out, path);
}

inline Json detector_config_to_json(const DetectorConfig& config) {
    return Json{{"tau", config.tau},
                {"conversation_interval", config.conversation_interval},
                {"extrema_range", config.extrema_range},
                {"episode_interval", config.episode_interval},
                {"variant", to_string(config.variant)},
                {"allow_multiple_per_episode", config.allow_multiple_per_episode}};
}

// The stored configuration is an echo of how the detections were produced;
// it parses without semantic validation so artifacts from boundary settings
// (a tau 0 run, for instance) stay readable. validate() guards actual use.
inline DetectorConfig detector_config_from_json(const Json& j) {
    DetectorConfig config;
    config.tau = j.at("tau").get<double>();
    config.conversation_interval = j.at("conversation_interval").get<int>();
    config.extrema_range = j.at("extrema_range").get<int>();
    config.episode_interval = j.at("episode_interval").get<int>();
    config.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("allow_multiple_per_episode"))
        config.allow_multiple_per_episode = j.at("allow_multiple_per_episode").get<bool>();
    return config;
}

struct DetectionsFile {
    std::vector<InterventionEvent> events;
    DetectorConfig config;
    long total_frames = 0;
};

inline void write_detections_json(const std::filesystem::path& path,
                                  const std::vector<InterventionEvent>& events,
                                  const DetectorConfig& config, long total_frames) {
    Json j;
    j["config"] = detector_config_to_json(config);
    j["total_frames"] = total_frames;
    Json rows = Json::array();
    for (const InterventionEvent& e : events)
        rows.push_back(Json{{"frame_index", e.frame_index},
                            {"episode", e.episode_index},
                            {"trigger", to_string(e.trigger)},
                            {"delta", e.delta_at_trigger}});
    j["events"] = std::move(rows);
    auto out = formats_detail::open_out(path);
    out << j.dump(2) << '\n';
    formats_detail::finish_out(out, path);
}

inline DetectionsFile read_detections_json(const std::filesystem::path& path) {
    auto in = formats_detail::open_in(path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const std::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    DetectionsFile file;
    try {
        file.config = detector_config_from_json(j.at("config"));
        file.total_frames = j.at("total_frames").get<long>();
        for (const Json& row : j.at("events")) {
            InterventionEvent e;
            e.frame_index = row.at("frame_index").get<int>();
            e.episode_index = row.at("episode").get<int>();
            e.trigger = row.at("trigger").get<std::string>() == "bootstrap"
                            ? Trigger::bootstrap
                            : Trigger::extrema;
            e.delta_at_trigger = row.at("delta").get<long>();
            file.events.push_back(e);
        }
    } catch (const Json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    return file;
}

// ---------------------------------------------------------------------------
// Per-frame trace: the signals and the detector's view of each frame, in the
// shape the signal plots use.

struct TraceRow {
    int frame = 0;
    double ssim = 0.0;
    long delta = 0;
    bool eligible = false;
    bool in_range = false;
    std::string event;  // empty, "bootstrap", or "extrema"
};

/// Replay the detector over the series and record what it saw at each frame.
/// in_range reports whether the frame's delta fell inside the range that was
/// active when the frame was considered; blocked or ineligible frames are
/// never considered, so they report false.
inline std::vector<TraceRow> build_trace(const SsimSeries& ssim_series,
                                         const AlignmentSeries& alignment,
                                         const DetectorConfig& config) {
    config.validate();
    if (ssim_series.size() != alignment.size())
        throw Error("trace: series length mismatch (ssim " + std::to_string(ssim_series.size()) +
                    ", alignment " + std::to_string(alignment.size()) + ")");
    std::vector<TraceRow> rows;
    rows.reserve(ssim_series.size());
    StreamingDetector detector(config);
    for (std::size_t t = 1; t <= ssim_series.size(); ++t) {
        TraceRow row;
        row.frame = static_cast<int>(t);
        row.ssim = ssim_series.at_frame(t);
        row.delta = alignment.at_frame(t);
        row.eligible = row.ssim < config.tau;

        const DetectorState& before = detector.state();
        const bool blocked = before.conversation_block_until &&
                             static_cast<int>(t) <= *before.conversation_block_until;
        row.in_range = row.eligible && !blocked && before.active_range &&
                       before.active_range->contains(row.delta);

        const auto event = detector.push(static_cast<int>(t), row.ssim, row.delta);
        if (event) row.event = to_string(event->trigger);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<TraceRow>& rows) {
    auto out = formats_detail::open_out(path);
    out << "frame,ssim,delta,eligible,in_range,event\n";
    for (const TraceRow& r : rows)
        out << r.frame << ',' << formats_detail::sig9(r.ssim) << ',' << r.delta << ','
            << (r.eligible ? 1 : 0) << ',' << (r.in_range ? 1 : 0) << ',' << r.event << '\n';
    formats_detail::finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Annotations: JSON Lines, one utterance per line.

inline Json annotation_to_json(const Annotation& a) {
    return Json{{"start_s", a.start_s},
                {"end_s", a.end_s},
                {"speaker", to_string(a.speaker)},
                {"type", a.type},
                {"proactive", a.proactive}};
}

inline void write_annotations_jsonl(const std::filesystem::path& path,
                                    const std::vector<Annotation>& annotations) {
    auto out = formats_detail::open_out(path);
    for (const Annotation& a : annotations) out << annotation_to_json(a).dump() << '\n';
    formats_detail::finish_out(out, path);
}

inline std::vector<Annotation> read_annotations_jsonl(const std::filesystem::path& path) {
    auto in = formats_detail::open_in(path);
    std::vector<Annotation> annotations;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = formats_detail::strip_cr(line);
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
            Annotation a;
            a.start_s = j.at("start_s").get<double>();
            a.end_s = j.at("end_s").get<double>();
            a.speaker = speaker_from_string(j.at("speaker").get<std::string>());
            a.type = j.at("type").get<std::string>();
            a.proactive = j.at("proactive").get<bool>();
            a.validate();
            annotations.push_back(std::move(a));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return annotations;
}

// ---------------------------------------------------------------------------
// Evaluation report: JSON with full context, plus a flat CSV. Undefined
// metrics serialize as null in JSON and "n/a" in CSV.

namespace formats_detail {

inline Json metric_json(const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
}

inline std::string metric_csv(const std::optional<double>& v) {
    return v ? sig9(*v) : std::string("n/a");
}

inline Json counts_json(const MatchResult& m) {
    return Json{{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
}

inline Json metrics_json(const Metrics& m) {
    return Json{{"accuracy", metric_json(m.accuracy)},
                {"precision", metric_json(m.precision)},
                {"recall", metric_json(m.recall)},
                {"f_measure", metric_json(m.f_measure)}};
}

}  // namespace formats_detail

struct EvalReportFile {
    EvalReport report;
    std::optional<SessionPolicy> policy;
    Aggregation aggregation = Aggregation::micro;
    std::optional<DetectorConfig> detector_config;
};

inline Json eval_report_to_json(const EvalReportFile& file) {
    const EvalReport& r = file.report;
    Json j;
    if (file.detector_config) j["config"] = detector_config_to_json(*file.detector_config);
    j["mode"] = to_string(r.mode);
    if (file.policy) j["policy"] = to_string(*file.policy);
    j["window_s"] = r.window_s;
    j["aggregation"] = to_string(file.aggregation);
    j["session_count"] = r.session_count;
    j["counts"] = formats_detail::counts_json(r.overall);
    j["metrics"] = formats_detail::metrics_json(r.metrics);
    Json per_class = Json::object();
    for (const auto& [cls, entry] : r.per_class)
        per_class[cls] = Json{{"counts", formats_detail::counts_json(entry.counts)},
                              {"metrics", formats_detail::metrics_json(entry.metrics)}};
    j["per_class"] = std::move(per_class);
    return j;
}

inline void write_eval_report_json(const std::filesystem::path& path,
                                   const EvalReportFile& file) {
    auto out = formats_detail::open_out(path);
    out << eval_report_to_json(file).dump(2) << '\n';
    formats_detail::finish_out(out, path);
}

inline void write_eval_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    auto out = formats_detail::open_out(path);
    out << "scope,tp,fp,fn,tn,accuracy,precision,recall,f_measure\n";
    auto row = [&](const std::string& scope, const MatchResult& counts, const Metrics& m) {
        out << scope << ',' << counts.tp << ',' << counts.fp << ',' << counts.fn << ','
            << counts.tn << ',' << formats_detail::metric_csv(m.accuracy) << ','
            << formats_detail::metric_csv(m.precision) << ','
            << formats_detail::metric_csv(m.recall) << ','
            << formats_detail::metric_csv(m.f_measure) << '\n';
    };
    row("overall", report.overall, report.metrics);
    for (const auto& [cls, entry] : report.per_class) row(cls, entry.counts, entry.metrics);
    formats_detail::finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Synthetic session directory: frames/ as P5 graymaps, counts.csv,
// annotations.jsonl, manifest.json.

inline Json class_mix_to_json(const ClassMix& mix) {
    return Json{{"follow_up_instruction", mix.follow_up_instruction},
                {"confirm_action", mix.confirm_action},
                {"correct_mistake", mix.correct_mistake}};
}

inline Json scenario_spec_to_json(const ScenarioSpec& spec) {
    return Json{{"seed", spec.seed},
                {"duration_s", spec.duration_s},
                {"idle_fraction", spec.idle_fraction},
                {"n_interventions", spec.n_interventions},
                {"frame_width", spec.frame_width},
                {"frame_height", spec.frame_height},
                {"object_size_px", spec.object_size_px},
                {"class_mix", class_mix_to_json(spec.class_mix)}};
}

inline ScenarioSpec scenario_spec_from_json(const Json& j) {
    ScenarioSpec spec;
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.duration_s = j.at("duration_s").get<int>();
    spec.idle_fraction = j.at("idle_fraction").get<double>();
    spec.n_interventions = j.at("n_interventions").get<int>();
    spec.frame_width = j.at("frame_width").get<int>();
    spec.frame_height = j.at("frame_height").get<int>();
    spec.object_size_px = j.at("object_size_px").get<int>();
    const Json& mix = j.at("class_mix");
    spec.class_mix.follow_up_instruction = mix.at("follow_up_instruction").get<double>();
    spec.class_mix.confirm_action = mix.at("confirm_action").get<double>();
    spec.class_mix.correct_mistake = mix.at("correct_mistake").get<double>();
    return spec;
}

inline Json schedule_to_json(const SynthSchedule& schedule) {
    Json spans = Json::array();
    for (const auto& [first, last] : schedule.idle_spans)
        spans.push_back(Json::array({first, last}));
    return Json{{"planted_starts", schedule.planted_starts},
                {"planted_classes", schedule.planted_classes},
                {"user_utterances_s", schedule.user_utterances_s},
                {"idle_spans", std::move(spans)},
                {"base_object_count", schedule.base_object_count}};
}

inline SynthSchedule schedule_from_json(const Json& j) {
    SynthSchedule schedule;
    schedule.planted_starts = j.at("planted_starts").get<std::vector<int>>();
    schedule.planted_classes = j.at("planted_classes").get<std::vector<std::string>>();
    schedule.user_utterances_s = j.at("user_utterances_s").get<std::vector<int>>();
    for (const Json& span : j.at("idle_spans"))
        schedule.idle_spans.emplace_back(span.at(0).get<int>(), span.at(1).get<int>());
    schedule.base_object_count = j.at("base_object_count").get<int>();
    return schedule;
}

inline std::string frame_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d.pgm", index);
    return buf;
}

inline void write_session(const SyntheticSession& session, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "frames", ec);
    if (ec) throw Error("cannot create " + (dir / "frames").string() + ": " + ec.message());

    for (const Frame& f : session.frames.frames)
        save_pgm((dir / "frames" / frame_file_name(f.index)).string(), f);
    write_counts_csv(dir / "counts.csv", session.counts);
    write_annotations_jsonl(dir / "annotations.jsonl", session.annotations);

    Json manifest;
    manifest["scenario"] = scenario_spec_to_json(session.spec);
    manifest["schedule"] = schedule_to_json(session.schedule);
    auto out = formats_detail::open_out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    formats_detail::finish_out(out, dir / "manifest.json");
}

inline SyntheticSession load_session(const std::filesystem::path& dir) {
    SyntheticSession session;
    session.frames = load_frame_sequence((dir / "frames").string());
    session.counts = load_counts_csv(dir / "counts.csv", session.frames.size());
    session.annotations = read_annotations_jsonl(dir / "annotations.jsonl");

    auto in = formats_detail::open_in(dir / "manifest.json");
    Json manifest;
    try {
        manifest = Json::parse(in);
        session.spec = scenario_spec_from_json(manifest.at("scenario"));
        session.schedule = schedule_from_json(manifest.at("schedule"));
    } catch (const std::exception& e) {
        throw Error((dir / "manifest.json").string() + ": " + e.what());
    }
    return session;
}

}  // namespace yeti
