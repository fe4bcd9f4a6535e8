// yeti: frame-signal extraction, proactive-intervention detection, scoring,
// synthetic sessions, and hyperparameter sweeps, one subcommand each.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "yeti/yeti.hpp"

namespace {

namespace fs = std::filesystem;

unsigned default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 4 : hw;
}

struct DetectorFlags {
    double tau = 0.9;
    int conv_interval = 1;
    int extrema_range = 1;
    int episode_interval = 5;
    std::string variant = "global";
    bool allow_multiple = false;

    void attach(CLI::App& cmd) {
        cmd.add_option("--tau", tau, "SSIM eligibility threshold")->capture_default_str();
        cmd.add_option("--conv-interval", conv_interval,
                       "frames to stay silent after an intervention")
            ->capture_default_str();
        cmd.add_option("--extrema-range", extrema_range,
                       "tolerance around episode extrema")
            ->capture_default_str();
        cmd.add_option("--episode-interval", episode_interval, "eligible frames per episode")
            ->capture_default_str();
        cmd.add_option("--variant", variant, "extrema range update rule")
            ->check(CLI::IsMember({"global", "local"}))
            ->capture_default_str();
        cmd.add_flag("--allow-multiple-per-episode", allow_multiple,
                     "permit several interventions per episode");
    }

    yeti::DetectorConfig to_config() const {
        yeti::DetectorConfig config;
        config.tau = tau;
        config.conversation_interval = conv_interval;
        config.extrema_range = extrema_range;
        config.episode_interval = episode_interval;
        config.variant = yeti::variant_from_string(variant);
        config.allow_multiple_per_episode = allow_multiple;
        return config;
    }
};

// --- ssim ------------------------------------------------------------------

struct SsimArgs {
    std::string frames_dir;
    std::string out = "ssim.csv";
    unsigned threads = default_threads();
};

int run_ssim(const SsimArgs& args) {
    const yeti::FrameSequence seq = yeti::load_frame_sequence(args.frames_dir);
    const yeti::SsimSeries series = yeti::compute_ssim_series(seq, args.threads);
    yeti::write_ssim_csv(args.out, series);
    std::cout << "wrote " << args.out << " (" << series.size() << " rows)\n";
    return 0;
}

// --- align -----------------------------------------------------------------

struct AlignArgs {
    std::string counts;
    std::string out = "deltas.csv";
    std::string histogram;
};

int run_align(const AlignArgs& args) {
    const yeti::CountSeries counts = yeti::load_counts_csv(args.counts);
    const yeti::AlignmentSeries series = yeti::compute_alignment(counts);
    yeti::write_deltas_csv(args.out, series);
    std::cout << "wrote " << args.out << " (" << series.size() << " rows)\n";
    if (!args.histogram.empty()) {
        yeti::write_histogram_csv(args.histogram, yeti::delta_histogram(series));
        std::cout << "wrote " << args.histogram << '\n';
    }
    return 0;
}

// --- detect ----------------------------------------------------------------

struct DetectArgs {
    std::string frames_dir;
    std::string ssim_csv;
    std::string provider = "file";
    std::string counts;
    long constant = 0;
    std::string endpoint;
    double timeout_s = 10.0;
    std::string out_dir = ".";
    unsigned threads = default_threads();
    DetectorFlags detector;
};

yeti::CountSeries detect_counts(const DetectArgs& args, const yeti::FrameSequence* frames,
                                std::size_t total_frames) {
    if (args.provider == "file") {
        if (args.counts.empty())
            throw yeti::Error("file provider needs --counts");
        return yeti::load_counts_csv(args.counts, total_frames);
    }
    if (args.provider == "constant") return yeti::constant_counts(args.constant, total_frames);

    std::string endpoint = args.endpoint;
    if (endpoint.empty())
        if (const char* env = std::getenv("YETI_REMOTE_ENDPOINT")) endpoint = env;
    if (endpoint.empty())
        throw yeti::Error("remote provider needs --endpoint or YETI_REMOTE_ENDPOINT");
    if (!frames)
        throw yeti::Error("remote provider needs --frames (counts come from the images)");
    yeti::CountProviderSpec spec;
    spec.kind = yeti::CountProviderSpec::Kind::remote;
    spec.endpoint_url = endpoint;
    return yeti::fetch_counts(spec, *frames, args.threads, args.timeout_s);
}

int run_detect(const DetectArgs& args) {
    if (args.frames_dir.empty() == args.ssim_csv.empty())
        throw yeti::Error("detect needs exactly one of --frames or --ssim");

    std::optional<yeti::FrameSequence> frames;
    yeti::SsimSeries ssim_series;
    if (!args.frames_dir.empty()) {
        frames = yeti::load_frame_sequence(args.frames_dir);
        ssim_series = yeti::compute_ssim_series(*frames, args.threads);
    } else {
        ssim_series = yeti::read_ssim_csv(args.ssim_csv);
    }
    const std::size_t total_frames = ssim_series.size() + 1;

    const yeti::CountSeries counts =
        detect_counts(args, frames ? &*frames : nullptr, total_frames);
    for (std::size_t t = 0; t < counts.counts.size(); ++t)
        if (counts.counts[t] > 1000) {
            std::cerr << "warning: count " << counts.counts[t] << " at frame " << t
                      << " exceeds 1000; check the provider output\n";
            break;
        }
    const yeti::AlignmentSeries alignment = yeti::compute_alignment(counts);

    std::error_code ec;
    fs::create_directories(args.out_dir, ec);
    if (ec) throw yeti::Error("cannot create " + args.out_dir + ": " + ec.message());
    const fs::path out_dir = args.out_dir;
    if (args.provider != "file") yeti::write_counts_csv(out_dir / "counts.csv", counts);

    // tau = 0 excludes every frame by definition; report that instead of
    // failing the configuration check, and still write the full trace.
    if (args.detector.tau == 0.0) {
        std::cerr << "warning: tau 0 makes every frame ineligible; no detections possible\n";
        std::vector<yeti::TraceRow> trace;
        for (std::size_t t = 1; t <= ssim_series.size(); ++t)
            trace.push_back({static_cast<int>(t), ssim_series.at_frame(t),
                             alignment.at_frame(t), false, false, ""});
        yeti::write_trace_csv(out_dir / "trace.csv", trace);
        yeti::write_detections_csv(out_dir / "detections.csv", {});
        yeti::write_detections_json(out_dir / "detections.json", {},
                                    args.detector.to_config(),
                                    static_cast<long>(total_frames));
        std::cout << "wrote 0 detections to " << out_dir.string() << '\n';
        return 0;
    }

    const yeti::DetectorConfig config = args.detector.to_config();
    config.validate();
    const std::vector<yeti::InterventionEvent> events =
        yeti::detect(ssim_series, alignment, config);
    yeti::write_trace_csv(out_dir / "trace.csv",
                          yeti::build_trace(ssim_series, alignment, config));
    yeti::write_detections_csv(out_dir / "detections.csv", events);
    yeti::write_detections_json(out_dir / "detections.json", events, config,
                                static_cast<long>(total_frames));
    std::cout << "wrote " << events.size() << " detections to " << out_dir.string() << '\n';
    return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string detections;
    std::string annotations;
    std::string sessions_dir;
    std::string mode = "intervention";
    std::string policy = "both";
    double window_s = 5.0;
    std::string class_filter;
    std::string aggregate = "micro";
    long total_frames_override = -1;
    std::string out_json = "report.json";
    std::string out_csv = "report.csv";
    unsigned threads = default_threads();
};

yeti::SessionPolicy parse_policy(const std::string& s) {
    if (s == "both") return yeti::SessionPolicy::both_speakers;
    if (s == "expert-only") return yeti::SessionPolicy::expert_only;
    throw yeti::Error("unknown policy '" + s + "' (expected both or expert-only)");
}

yeti::SessionEvalInput load_eval_session(const fs::path& detections_path,
                                         const fs::path& annotations_path,
                                         long total_frames_override) {
    const yeti::DetectionsFile detections = yeti::read_detections_json(detections_path);
    yeti::SessionEvalInput input;
    for (const yeti::InterventionEvent& e : detections.events)
        input.detections.push_back(e.frame_index);
    input.annotations = yeti::read_annotations_jsonl(annotations_path);
    input.total_frames =
        total_frames_override >= 0 ? total_frames_override : detections.total_frames;
    return input;
}

int run_eval(const EvalArgs& args) {
    const yeti::EvalMode mode = yeti::eval_mode_from_string(args.mode);
    const yeti::SessionPolicy policy = parse_policy(args.policy);
    const std::optional<std::string> class_filter =
        args.class_filter.empty() ? std::nullopt
                                  : std::optional<std::string>(args.class_filter);
    const yeti::Aggregation aggregation = args.aggregate == "macro"
                                              ? yeti::Aggregation::macro
                                              : yeti::Aggregation::micro;

    std::vector<yeti::SessionEvalInput> sessions;
    if (!args.sessions_dir.empty()) {
        std::vector<fs::path> dirs;
        for (const auto& entry : fs::directory_iterator(args.sessions_dir))
            if (entry.is_directory()) dirs.push_back(entry.path());
        std::sort(dirs.begin(), dirs.end());
        for (const fs::path& dir : dirs)
            sessions.push_back(load_eval_session(dir / "detections.json",
                                                 dir / "annotations.jsonl",
                                                 args.total_frames_override));
        if (sessions.empty())
            throw yeti::Error("no session directories under " + args.sessions_dir);
    } else {
        if (args.detections.empty() || args.annotations.empty())
            throw yeti::Error("eval needs --detections and --annotations (or --sessions-dir)");
        sessions.push_back(load_eval_session(args.detections, args.annotations,
                                             args.total_frames_override));
    }

    std::vector<yeti::SessionEvalInput> kept;
    for (const yeti::SessionEvalInput& s : sessions)
        if (yeti::session_included(s.annotations, policy)) kept.push_back(s);
    if (kept.empty())
        throw yeti::Error("no sessions pass policy '" + args.policy + "'");

    const std::vector<yeti::EvalReport> reports =
        yeti::evaluate_sessions(kept, mode, class_filter, args.window_s, args.threads);
    yeti::EvalReportFile file;
    file.report = reports.size() == 1 ? reports.front()
                                      : yeti::aggregate_reports(reports, aggregation);
    file.policy = policy;
    file.aggregation = aggregation;
    yeti::write_eval_report_json(args.out_json, file);
    yeti::write_eval_report_csv(args.out_csv, file.report);

    auto show = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("n/a");
    };
    std::cout << "sessions " << file.report.session_count << "  tp " << file.report.overall.tp
              << "  fp " << file.report.overall.fp << "  fn " << file.report.overall.fn
              << "  precision " << show(file.report.metrics.precision) << "  recall "
              << show(file.report.metrics.recall) << "  f " << show(file.report.metrics.f_measure)
              << '\n';
    std::cout << "wrote " << args.out_json << " and " << args.out_csv << '\n';
    return 0;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
    std::vector<std::string> session_dirs;
    std::string mode = "intervention";
    double window_s = 5.0;
    std::string out = "sweep.csv";
    unsigned threads = default_threads();
    std::vector<double> taus;
    std::vector<int> conv_intervals;
    std::vector<int> extrema_ranges;
    std::vector<std::string> variants;
    int episode_interval = 5;
    std::string aggregate = "micro";
};

int run_sweep_cmd(const SweepArgs& args) {
    yeti::SweepGrid grid;
    if (!args.taus.empty()) grid.taus = args.taus;
    if (!args.conv_intervals.empty()) grid.conversation_intervals = args.conv_intervals;
    if (!args.extrema_ranges.empty()) grid.extrema_ranges = args.extrema_ranges;
    if (!args.variants.empty()) {
        grid.variants.clear();
        for (const std::string& v : args.variants)
            grid.variants.push_back(yeti::variant_from_string(v));
    }
    grid.episode_interval = args.episode_interval;

    std::vector<yeti::SweepInput> sessions;
    for (const std::string& dir : args.session_dirs) {
        const fs::path base = dir;
        yeti::SweepInput input;
        const yeti::FrameSequence frames =
            yeti::load_frame_sequence((base / "frames").string());
        input.ssim = yeti::compute_ssim_series(frames, args.threads);
        const yeti::CountSeries counts =
            yeti::load_counts_csv(base / "counts.csv", frames.size());
        input.alignment = yeti::compute_alignment(counts);
        input.annotations = yeti::read_annotations_jsonl(base / "annotations.jsonl");
        input.total_frames = static_cast<long>(frames.size());
        sessions.push_back(std::move(input));
    }

    const yeti::Aggregation aggregation = args.aggregate == "macro"
                                              ? yeti::Aggregation::macro
                                              : yeti::Aggregation::micro;
    const std::vector<yeti::SweepRow> rows =
        yeti::run_sweep(sessions, grid, yeti::eval_mode_from_string(args.mode), args.window_s,
                        aggregation, args.threads);
    yeti::write_sweep_csv(args.out, rows);
    std::cout << "wrote " << args.out << " (" << rows.size() << " grid points)\n";
    return 0;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    std::string out_dir;
    std::uint64_t seed = 1;
    int duration_s = 60;
    double idle_fraction = 0.5;
    int n_interventions = 1;
    int frame_width = 64;
    int frame_height = 64;
    int object_size_px = 8;
    std::vector<double> class_mix;
    unsigned threads = default_threads();
};

int run_synth(const SynthArgs& args) {
    yeti::ScenarioSpec spec;
    spec.seed = args.seed;
    spec.duration_s = args.duration_s;
    spec.idle_fraction = args.idle_fraction;
    spec.n_interventions = args.n_interventions;
    spec.frame_width = args.frame_width;
    spec.frame_height = args.frame_height;
    spec.object_size_px = args.object_size_px;
    if (!args.class_mix.empty()) {
        if (args.class_mix.size() != 3)
            throw yeti::Error("--class-mix needs exactly 3 weights");
        spec.class_mix.follow_up_instruction = args.class_mix[0];
        spec.class_mix.confirm_action = args.class_mix[1];
        spec.class_mix.correct_mistake = args.class_mix[2];
    }
    const yeti::SyntheticSession session = yeti::generate(spec, args.threads);
    yeti::write_session(session, args.out_dir);
    std::cout << "wrote session to " << args.out_dir << " (" << session.frames.size()
              << " frames, " << session.schedule.planted_starts.size() << " interventions)\n";
    return 0;
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
    std::string session_dir;
};

int run_verify(const VerifyArgs& args) {
    const yeti::SyntheticSession session = yeti::load_session(args.session_dir);
    const yeti::VerificationReport report = yeti::verify(session);
    if (report.ok()) {
        std::cout << "all checks passed (" << session.frames.size() << " frames)\n";
        return 0;
    }
    for (const yeti::VerificationIssue& issue : report.issues) {
        if (issue.frame >= 0)
            std::cout << "frame " << issue.frame << ": " << issue.what << '\n';
        else
            std::cout << "session: " << issue.what << '\n';
    }
    std::cout << report.issues.size() << " check(s) failed\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-signal pipeline: extract similarity and object-count signals, "
                 "detect proactive interventions, and score them"};
    app.require_subcommand(1);

    SsimArgs ssim_args;
    CLI::App* ssim_cmd = app.add_subcommand("ssim", "consecutive-frame SSIM series to CSV");
    ssim_cmd->add_option("--frames", ssim_args.frames_dir, "frame directory")->required();
    ssim_cmd->add_option("--out", ssim_args.out, "output CSV")->capture_default_str();
    ssim_cmd->add_option("--threads", ssim_args.threads, "worker threads")
        ->capture_default_str();

    AlignArgs align_args;
    CLI::App* align_cmd =
        app.add_subcommand("align", "count deltas (and optional histogram) from counts CSV");
    align_cmd->add_option("--counts", align_args.counts, "counts CSV")->required();
    align_cmd->add_option("--out", align_args.out, "output deltas CSV")->capture_default_str();
    align_cmd->add_option("--histogram", align_args.histogram, "optional histogram CSV");

    DetectArgs detect_args;
    CLI::App* detect_cmd = app.add_subcommand("detect", "run intervention detection");
    detect_cmd->add_option("--frames", detect_args.frames_dir, "frame directory");
    detect_cmd->add_option("--ssim", detect_args.ssim_csv, "precomputed SSIM CSV");
    detect_cmd->add_option("--provider", detect_args.provider, "count source")
        ->check(CLI::IsMember({"file", "constant", "remote"}))
        ->capture_default_str();
    detect_cmd->add_option("--counts", detect_args.counts, "counts CSV (file provider)");
    detect_cmd->add_option("--constant", detect_args.constant,
                           "count value (constant provider)");
    detect_cmd->add_option("--endpoint", detect_args.endpoint,
                           "count endpoint URL (remote provider; or YETI_REMOTE_ENDPOINT)");
    detect_cmd->add_option("--timeout-s", detect_args.timeout_s, "remote request timeout")
        ->capture_default_str();
    detect_cmd->add_option("--out-dir", detect_args.out_dir,
                           "directory for detections.csv/.json and trace.csv")
        ->capture_default_str();
    detect_cmd->add_option("--threads", detect_args.threads, "worker threads")
        ->capture_default_str();
    detect_args.detector.attach(*detect_cmd);

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score detections against annotations");
    eval_cmd->add_option("--detections", eval_args.detections, "detections JSON");
    eval_cmd->add_option("--annotations", eval_args.annotations, "annotations JSONL");
    eval_cmd->add_option("--sessions-dir", eval_args.sessions_dir,
                         "directory of per-session subdirectories");
    eval_cmd->add_option("--mode", eval_args.mode, "ground-truth scope")
        ->check(CLI::IsMember({"intervention", "interaction"}))
        ->capture_default_str();
    eval_cmd->add_option("--policy", eval_args.policy, "session speaker policy")
        ->check(CLI::IsMember({"both", "expert-only"}))
        ->capture_default_str();
    eval_cmd->add_option("--window-s", eval_args.window_s, "matching window in seconds")
        ->capture_default_str();
    eval_cmd->add_option("--class", eval_args.class_filter, "restrict truths to one class");
    eval_cmd->add_option("--aggregate", eval_args.aggregate, "multi-session aggregation")
        ->check(CLI::IsMember({"micro", "macro"}))
        ->capture_default_str();
    eval_cmd->add_option("--total-frames", eval_args.total_frames_override,
                         "override session frame count");
    eval_cmd->add_option("--out-json", eval_args.out_json, "report JSON path")
        ->capture_default_str();
    eval_cmd->add_option("--out-csv", eval_args.out_csv, "report CSV path")
        ->capture_default_str();
    eval_cmd->add_option("--threads", eval_args.threads, "worker threads")
        ->capture_default_str();

    SweepArgs sweep_args;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "hyperparameter grid over sessions");
    sweep_cmd->add_option("--session", sweep_args.session_dirs, "session directory (repeatable)")
        ->required();
    sweep_cmd->add_option("--mode", sweep_args.mode, "ground-truth scope")
        ->check(CLI::IsMember({"intervention", "interaction"}))
        ->capture_default_str();
    sweep_cmd->add_option("--window-s", sweep_args.window_s, "matching window in seconds")
        ->capture_default_str();
    sweep_cmd->add_option("--out", sweep_args.out, "sweep CSV path")->capture_default_str();
    sweep_cmd->add_option("--threads", sweep_args.threads, "worker threads")
        ->capture_default_str();
    sweep_cmd->add_option("--grid-tau", sweep_args.taus, "tau values (default 0.5..0.9)");
    sweep_cmd->add_option("--grid-conv-interval", sweep_args.conv_intervals,
                          "conversation intervals (default 1..5)");
    sweep_cmd->add_option("--grid-extrema-range", sweep_args.extrema_ranges,
                          "extrema ranges (default 0..2)");
    sweep_cmd->add_option("--variants", sweep_args.variants,
                          "variants to sweep (default both)");
    sweep_cmd->add_option("--episode-interval", sweep_args.episode_interval,
                          "fixed episode interval")
        ->capture_default_str();
    sweep_cmd->add_option("--aggregate", sweep_args.aggregate, "multi-session aggregation")
        ->check(CLI::IsMember({"micro", "macro"}))
        ->capture_default_str();

    SynthArgs synth_args;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic session");
    synth_cmd->add_option("--out", synth_args.out_dir, "output session directory")->required();
    synth_cmd->add_option("--seed", synth_args.seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("--duration-s", synth_args.duration_s, "session length in seconds")
        ->capture_default_str();
    synth_cmd->add_option("--idle-fraction", synth_args.idle_fraction,
                          "idle share of non-burst frames")
        ->capture_default_str();
    synth_cmd->add_option("--n-interventions", synth_args.n_interventions,
                          "planted interventions")
        ->capture_default_str();
    synth_cmd->add_option("--frame-width", synth_args.frame_width, "frame width in pixels")
        ->capture_default_str();
    synth_cmd->add_option("--frame-height", synth_args.frame_height, "frame height in pixels")
        ->capture_default_str();
    synth_cmd->add_option("--object-size-px", synth_args.object_size_px, "square side length")
        ->capture_default_str();
    synth_cmd->add_option("--class-mix", synth_args.class_mix,
                          "three class weights (follow-up, confirm, correct)");
    synth_cmd->add_option("--threads", synth_args.threads, "render threads")
        ->capture_default_str();

    VerifyArgs verify_args;
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "re-check a session directory from its pixels");
    verify_cmd->add_option("--session", verify_args.session_dir, "session directory")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (ssim_cmd->parsed()) return run_ssim(ssim_args);
        if (align_cmd->parsed()) return run_align(align_args);
        if (detect_cmd->parsed()) return run_detect(detect_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (sweep_cmd->parsed()) return run_sweep_cmd(sweep_args);
        if (synth_cmd->parsed()) return run_synth(synth_args);
        if (verify_cmd->parsed()) return run_verify(verify_args);
    } catch (const yeti::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
