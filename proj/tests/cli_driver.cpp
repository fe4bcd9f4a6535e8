// End-to-end driver for the command-line tool. Takes the binary path as
// argv[1], exercises every subcommand against real session directories in a
// scratch workspace, and exits nonzero when any expectation fails.

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "yeti/yeti.hpp"

namespace {

namespace fs = std::filesystem;

int failures = 0;

void check_impl(bool ok, const std::string& what, int line) {
    if (ok) return;
    ++failures;
    std::fprintf(stderr, "cli_driver:%d: FAILED %s\n", line, what.c_str());
}

#define CHECK(cond) check_impl(static_cast<bool>(cond), #cond, __LINE__)
#define CHECK_MSG(cond, msg) check_impl(static_cast<bool>(cond), std::string(#cond) + " [" + (msg) + "]", __LINE__)

std::string cli_binary;
fs::path workspace;

struct Proc {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Proc run_cli(const std::string& args) {
    static std::atomic<int> counter{0};
    const int id = counter++;
    const fs::path out_file = workspace / ("stdout_" + std::to_string(id) + ".txt");
    const fs::path err_file = workspace / ("stderr_" + std::to_string(id) + ".txt");
    const std::string command =
        cli_binary + " " + args + " >" + out_file.string() + " 2>" + err_file.string();
    const int raw = std::system(command.c_str());

    Proc proc;
    if (raw == -1)
        proc.exit_code = -1;
    else if (WIFEXITED(raw))
        proc.exit_code = WEXITSTATUS(raw);
    else
        proc.exit_code = 128;
    proc.out = slurp(out_file);
    proc.err = slurp(err_file);
    fs::remove(out_file);
    fs::remove(err_file);
    return proc;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// frame,ssim,delta,eligible prefix of a trace row: everything up to and
// including the fourth comma-separated field
std::string trace_prefix(const std::string& row) {
    std::size_t pos = 0;
    for (int commas = 0; commas < 4 && pos != std::string::npos; ++commas)
        pos = row.find(',', pos == 0 && commas == 0 ? 0 : pos + 1);
    return pos == std::string::npos ? row : row.substr(0, pos);
}

bool directories_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel_a, rel_b;
    for (const auto& entry : fs::recursive_directory_iterator(a))
        if (entry.is_regular_file()) rel_a.push_back(fs::relative(entry.path(), a));
    for (const auto& entry : fs::recursive_directory_iterator(b))
        if (entry.is_regular_file()) rel_b.push_back(fs::relative(entry.path(), b));
    std::sort(rel_a.begin(), rel_a.end());
    std::sort(rel_b.begin(), rel_b.end());
    if (rel_a != rel_b) return false;
    for (const fs::path& rel : rel_a)
        if (slurp(a / rel) != slurp(b / rel)) return false;
    return true;
}

// --- fixtures ----------------------------------------------------------------

const fs::path& session_300() {
    static const fs::path dir = [] {
        const fs::path d = workspace / "sess300";
        const Proc p = run_cli("synth --out " + d.string() +
                               " --seed 1 --duration-s 300 --n-interventions 8 --threads 4");
        CHECK_MSG(p.exit_code == 0, p.err);
        return d;
    }();
    return dir;
}

const fs::path& detect_default_out() {
    static const fs::path dir = [] {
        const fs::path d = workspace / "det_default";
        const fs::path s = session_300();
        const Proc p = run_cli("detect --frames " + (s / "frames").string() + " --counts " +
                               (s / "counts.csv").string() + " --out-dir " + d.string() +
                               " --threads 4");
        CHECK_MSG(p.exit_code == 0, p.err);
        return d;
    }();
    return dir;
}

// --- synth and verify ----------------------------------------------------------

void synth_then_verify_round_trip() {
    const fs::path dir = workspace / "sess_small";
    Proc p = run_cli("synth --out " + dir.string() +
                     " --seed 1 --duration-s 60 --n-interventions 3");
    CHECK_MSG(p.exit_code == 0, p.err);
    CHECK(contains(p.out, "3 interventions"));
    CHECK(fs::exists(dir / "frames") && fs::exists(dir / "counts.csv") &&
          fs::exists(dir / "annotations.jsonl") && fs::exists(dir / "manifest.json"));

    p = run_cli("verify --session " + dir.string());
    CHECK_MSG(p.exit_code == 0, p.out + p.err);
    CHECK(contains(p.out, "all checks passed"));
}

void synth_repeats_bit_for_bit() {
    const std::string flags = " --seed 7 --duration-s 60 --n-interventions 2";
    const fs::path a = workspace / "sess_rep_a";
    const fs::path b = workspace / "sess_rep_b";
    CHECK(run_cli("synth --out " + a.string() + flags).exit_code == 0);
    CHECK(run_cli("synth --out " + b.string() + flags).exit_code == 0);
    CHECK(directories_identical(a, b));
}

void synth_rejects_infeasible_request() {
    const Proc p = run_cli("synth --out " + (workspace / "sess_bad").string() +
                           " --duration-s 20 --n-interventions 5");
    CHECK(p.exit_code != 0);
    CHECK_MSG(contains(p.err, "infeasible"), p.err);
}

void verify_catches_tampered_counts() {
    const fs::path src = workspace / "sess_small";
    const fs::path dir = workspace / "sess_tampered";
    fs::copy(src, dir, fs::copy_options::recursive);

    const yeti::CountSeries counts = yeti::load_counts_csv(dir / "counts.csv");
    yeti::CountSeries bumped = counts;
    bumped.counts[10] += 1;
    yeti::write_counts_csv(dir / "counts.csv", bumped);

    const Proc p = run_cli("verify --session " + dir.string());
    CHECK(p.exit_code == 1);
    CHECK_MSG(contains(p.out, "count mismatch"), p.out);
}

// --- ssim and align --------------------------------------------------------------

void ssim_writes_one_row_per_transition() {
    const fs::path dir = workspace / "frames3";
    fs::create_directories(dir);
    yeti::Frame f;
    f.width = 4;
    f.height = 4;
    f.pixels.assign(16, 10);
    yeti::save_pgm((dir / "frame_000000.pgm").string(), f);
    f.pixels[3] = 200;
    yeti::save_pgm((dir / "frame_000001.pgm").string(), f);
    yeti::save_pgm((dir / "frame_000002.pgm").string(), f);

    const fs::path out = workspace / "ssim3.csv";
    const Proc p = run_cli("ssim --frames " + dir.string() + " --out " + out.string());
    CHECK_MSG(p.exit_code == 0, p.err);
    const auto rows = lines_of(slurp(out));
    CHECK(rows.size() == 3);
    CHECK(rows[0] == "frame_index,ssim");
    // the second and third frames are identical, so the last row is exactly 1
    CHECK(rows[2] == "2,1");

    const Proc again = run_cli("ssim --frames " + dir.string() + " --out " + out.string());
    CHECK(again.exit_code == 0);
    CHECK(lines_of(slurp(out)) == rows);
}

void ssim_rejects_short_sequences() {
    const fs::path dir = workspace / "frames_empty";
    fs::create_directories(dir);
    const Proc p = run_cli("ssim --frames " + dir.string() + " --out " +
                           (workspace / "unused.csv").string());
    CHECK(p.exit_code != 0);
    CHECK_MSG(contains(p.err, "sequence too short"), p.err);
}

void align_emits_deltas_and_histogram() {
    const fs::path s = session_300();
    const fs::path deltas = workspace / "deltas300.csv";
    const fs::path hist = workspace / "hist300.csv";
    const Proc p = run_cli("align --counts " + (s / "counts.csv").string() + " --out " +
                           deltas.string() + " --histogram " + hist.string());
    CHECK_MSG(p.exit_code == 0, p.err);
    CHECK(lines_of(slurp(deltas)).size() == 300);  // header + 299 transitions
    CHECK(lines_of(slurp(hist)).size() >= 2);

    const std::string before = slurp(deltas);
    CHECK(run_cli("align --counts " + (s / "counts.csv").string() + " --out " +
                  deltas.string())
              .exit_code == 0);
    CHECK(slurp(deltas) == before);
}

// --- detect -----------------------------------------------------------------------

void detect_finds_planted_interventions() {
    const fs::path out = detect_default_out();
    CHECK(fs::exists(out / "detections.json") && fs::exists(out / "detections.csv") &&
          fs::exists(out / "trace.csv"));

    const yeti::DetectionsFile detections = yeti::read_detections_json(out / "detections.json");
    const auto annotations = yeti::read_annotations_jsonl(session_300() / "annotations.jsonl");

    std::size_t truths = 0, found = 0;
    for (const yeti::Annotation& a : annotations) {
        if (!a.proactive) continue;
        ++truths;
        for (const yeti::InterventionEvent& e : detections.events)
            if (std::abs(static_cast<double>(e.frame_index) - a.start_s) <= 5.0) {
                ++found;
                break;
            }
    }
    CHECK(truths == 8);
    CHECK_MSG(found * 10 >= truths * 8,
              std::to_string(found) + " of " + std::to_string(truths) + " found");
}

void detect_rerun_is_byte_identical() {
    const fs::path first = detect_default_out();
    const fs::path again = workspace / "det_again";
    const fs::path s = session_300();
    const Proc p = run_cli("detect --frames " + (s / "frames").string() + " --counts " +
                           (s / "counts.csv").string() + " --out-dir " + again.string() +
                           " --threads 2");
    CHECK_MSG(p.exit_code == 0, p.err);
    for (const char* name : {"detections.json", "detections.csv", "trace.csv"})
        CHECK_MSG(slurp(first / name) == slurp(again / name), name);
}

void detect_tau_zero_warns_and_writes_empty_artifacts() {
    const fs::path s = session_300();
    const fs::path ssim_csv = workspace / "ssim300.csv";
    CHECK(run_cli("ssim --frames " + (s / "frames").string() + " --out " + ssim_csv.string())
              .exit_code == 0);

    const fs::path out = workspace / "det_tau0";
    const Proc p = run_cli("detect --ssim " + ssim_csv.string() + " --counts " +
                           (s / "counts.csv").string() + " --tau 0.0 --out-dir " +
                           out.string());
    CHECK_MSG(p.exit_code == 0, p.err);
    CHECK_MSG(contains(p.err, "no detections possible"), p.err);
    CHECK(yeti::read_detections_json(out / "detections.json").events.empty());
    CHECK(lines_of(slurp(out / "trace.csv")).size() == 300);
}

void detect_variants_share_the_signal_columns() {
    const fs::path global_out = detect_default_out();
    const fs::path local_out = workspace / "det_local";
    const fs::path s = session_300();
    const Proc p = run_cli("detect --frames " + (s / "frames").string() + " --counts " +
                           (s / "counts.csv").string() + " --variant local --out-dir " +
                           local_out.string() + " --threads 4");
    CHECK_MSG(p.exit_code == 0, p.err);

    const auto global_rows = lines_of(slurp(global_out / "trace.csv"));
    const auto local_rows = lines_of(slurp(local_out / "trace.csv"));
    CHECK(global_rows.size() == local_rows.size());
    for (std::size_t i = 0; i < std::min(global_rows.size(), local_rows.size()); ++i)
        CHECK_MSG(trace_prefix(global_rows[i]) == trace_prefix(local_rows[i]),
                  "row " + std::to_string(i));
}

void detect_requires_a_count_source() {
    const fs::path s = session_300();
    Proc p = run_cli("detect --frames " + (s / "frames").string() + " --out-dir " +
                     (workspace / "det_nocounts").string());
    CHECK(p.exit_code != 0);
    CHECK_MSG(contains(p.err, "needs --counts"), p.err);

    p = run_cli("detect --frames " + (s / "frames").string() + " --counts " +
                (workspace / "missing.csv").string() + " --out-dir " +
                (workspace / "det_nocounts").string());
    CHECK(p.exit_code != 0);
}

// --- eval --------------------------------------------------------------------------

yeti::Json read_json(const fs::path& path) { return yeti::Json::parse(slurp(path)); }

void eval_scores_perfect_detections_at_one() {
    const auto annotations = yeti::read_annotations_jsonl(session_300() / "annotations.jsonl");
    std::vector<yeti::InterventionEvent> events;
    for (const yeti::Annotation& a : annotations)
        if (a.proactive)
            events.push_back({static_cast<int>(a.start_s), static_cast<int>(events.size()),
                              yeti::Trigger::extrema, 0});
    const fs::path detections = workspace / "det_perfect.json";
    yeti::write_detections_json(detections, events, yeti::DetectorConfig{}, 300);

    const fs::path report = workspace / "rep_perfect.json";
    const Proc p = run_cli("eval --detections " + detections.string() + " --annotations " +
                           (session_300() / "annotations.jsonl").string() + " --out-json " +
                           report.string() + " --out-csv " +
                           (workspace / "rep_perfect.csv").string());
    CHECK_MSG(p.exit_code == 0, p.err);
    const yeti::Json j = read_json(report);
    CHECK(j.at("metrics").at("precision") == 1.0);
    CHECK(j.at("metrics").at("recall") == 1.0);
    CHECK(j.at("metrics").at("f_measure") == 1.0);
    CHECK(j.at("counts").at("fn") == 0);
}

void eval_reports_undefined_precision_as_null() {
    const fs::path detections = workspace / "det_empty.json";
    yeti::write_detections_json(detections, {}, yeti::DetectorConfig{}, 300);

    const fs::path report = workspace / "rep_empty.json";
    const Proc p = run_cli("eval --detections " + detections.string() + " --annotations " +
                           (session_300() / "annotations.jsonl").string() + " --out-json " +
                           report.string() + " --out-csv " +
                           (workspace / "rep_empty.csv").string());
    CHECK_MSG(p.exit_code == 0, p.err);
    const yeti::Json j = read_json(report);
    CHECK(j.at("metrics").at("recall") == 0.0);
    CHECK(j.at("metrics").at("precision").is_null());
    CHECK(contains(p.out, "precision n/a"));
}

void eval_matches_the_worked_example() {
    std::vector<yeti::InterventionEvent> events{{10, 0, yeti::Trigger::extrema, 0},
                                                {40, 1, yeti::Trigger::extrema, 0}};
    const fs::path detections = workspace / "det_pair.json";
    yeti::write_detections_json(detections, events, yeti::DetectorConfig{}, 300);

    // the reactive user row keeps the session inside the default speaker
    // policy without adding ground truth
    std::vector<yeti::Annotation> annotations{
        {12.0, 14.0, yeti::Speaker::expert, "follow_up_instruction", true},
        {100.0, 102.0, yeti::Speaker::expert, "confirm_action", true},
        {150.0, 152.0, yeti::Speaker::user, "reactive", false}};
    const fs::path truth = workspace / "truth_pair.jsonl";
    yeti::write_annotations_jsonl(truth, annotations);

    const fs::path report = workspace / "rep_pair.json";
    const Proc p = run_cli("eval --detections " + detections.string() + " --annotations " +
                           truth.string() + " --out-json " + report.string() +
                           " --out-csv " + (workspace / "rep_pair.csv").string());
    CHECK_MSG(p.exit_code == 0, p.err);
    const yeti::Json j = read_json(report);
    CHECK(j.at("metrics").at("precision") == 0.5);
    CHECK(j.at("metrics").at("recall") == 0.5);
    CHECK(j.at("metrics").at("f_measure") == 0.5);
}

// --- sweep -------------------------------------------------------------------------

void sweep_emits_one_row_per_grid_point() {
    const fs::path out = workspace / "sweep2.csv";
    const Proc p = run_cli("sweep --session " + session_300().string() +
                           " --grid-tau 0.8 0.9 --grid-conv-interval 1 "
                           "--grid-extrema-range 1 --variants global --out " +
                           out.string() + " --threads 4");
    CHECK_MSG(p.exit_code == 0, p.err);
    const auto rows = lines_of(slurp(out));
    CHECK(rows.size() == 3);
    CHECK(rows[0] ==
          "variant,tau,conv_interval,extrema_range,episode_interval,sessions,detections,"
          "tp,fp,fn,tn,accuracy,precision,recall,f_measure");
    CHECK(rows[1].rfind("global,0.8,1,1,5,1,", 0) == 0);
    CHECK(rows[2].rfind("global,0.9,1,1,5,1,", 0) == 0);
}

// --- remote counts -----------------------------------------------------------------

class CountServer {
  public:
    CountServer() {
        server_.Post("/count", [this](const httplib::Request& req, httplib::Response& res) {
            yeti::Json reply;
            try {
                const yeti::Json body = yeti::Json::parse(req.body);
                const auto png =
                    yeti::base64_decode(body.at("image_png_base64").get<std::string>());
                const yeti::Frame frame = yeti::decode_png(png, "request image");
                reply["completion"] = "there are " +
                                      std::to_string(yeti::count_objects_in_frame(frame)) +
                                      " objects visible";
            } catch (const std::exception& e) {
                res.status = 400;
                reply["completion"] = std::string("error: ") + e.what();
            }
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~CountServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/count"; }

  private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

void detect_with_remote_counts_matches_the_file_provider() {
    const fs::path sess = workspace / "sess20";
    CHECK(run_cli("synth --out " + sess.string() +
                  " --seed 3 --duration-s 20 --n-interventions 1")
              .exit_code == 0);

    const fs::path by_file = workspace / "det20_file";
    CHECK(run_cli("detect --frames " + (sess / "frames").string() + " --counts " +
                  (sess / "counts.csv").string() + " --out-dir " + by_file.string())
              .exit_code == 0);

    CountServer server;
    setenv("YETI_REMOTE_ENDPOINT", server.url().c_str(), 1);
    const fs::path by_remote = workspace / "det20_remote";
    const Proc p = run_cli("detect --frames " + (sess / "frames").string() +
                           " --provider remote --out-dir " + by_remote.string() +
                           " --threads 3");
    unsetenv("YETI_REMOTE_ENDPOINT");
    CHECK_MSG(p.exit_code == 0, p.err);

    // the endpoint recounts the rendered objects, so the fetched series must
    // reproduce the session's own counts file and the same detections
    CHECK(slurp(by_remote / "counts.csv") == slurp(sess / "counts.csv"));
    CHECK(slurp(by_remote / "detections.csv") == slurp(by_file / "detections.csv"));
}

void detect_remote_without_endpoint_fails_loudly() {
    unsetenv("YETI_REMOTE_ENDPOINT");
    const fs::path sess = workspace / "sess20";
    const Proc p = run_cli("detect --frames " + (sess / "frames").string() +
                           " --provider remote --out-dir " +
                           (workspace / "det20_broken").string());
    CHECK(p.exit_code != 0);
    CHECK_MSG(contains(p.err, "YETI_REMOTE_ENDPOINT"), p.err);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_driver <path-to-cli-binary>\n");
        return 2;
    }
    cli_binary = argv[1];
    workspace = fs::temp_directory_path() /
                ("cli-driver-" + std::to_string(static_cast<unsigned>(::getpid())));
    fs::create_directories(workspace);

    const std::vector<std::pair<const char*, void (*)()>> scenarios{
        {"synth_then_verify_round_trip", synth_then_verify_round_trip},
        {"synth_repeats_bit_for_bit", synth_repeats_bit_for_bit},
        {"synth_rejects_infeasible_request", synth_rejects_infeasible_request},
        {"verify_catches_tampered_counts", verify_catches_tampered_counts},
        {"ssim_writes_one_row_per_transition", ssim_writes_one_row_per_transition},
        {"ssim_rejects_short_sequences", ssim_rejects_short_sequences},
        {"align_emits_deltas_and_histogram", align_emits_deltas_and_histogram},
        {"detect_finds_planted_interventions", detect_finds_planted_interventions},
        {"detect_rerun_is_byte_identical", detect_rerun_is_byte_identical},
        {"detect_tau_zero_warns_and_writes_empty_artifacts",
         detect_tau_zero_warns_and_writes_empty_artifacts},
        {"detect_variants_share_the_signal_columns", detect_variants_share_the_signal_columns},
        {"detect_requires_a_count_source", detect_requires_a_count_source},
        {"eval_scores_perfect_detections_at_one", eval_scores_perfect_detections_at_one},
        {"eval_reports_undefined_precision_as_null", eval_reports_undefined_precision_as_null},
        {"eval_matches_the_worked_example", eval_matches_the_worked_example},
        {"sweep_emits_one_row_per_grid_point", sweep_emits_one_row_per_grid_point},
        {"detect_with_remote_counts_matches_the_file_provider",
         detect_with_remote_counts_matches_the_file_provider},
        {"detect_remote_without_endpoint_fails_loudly",
         detect_remote_without_endpoint_fails_loudly},
    };
    for (const auto& [name, scenario] : scenarios) {
        try {
            scenario();
        } catch (const std::exception& e) {
            ++failures;
            std::fprintf(stderr, "cli_driver: %s threw: %s\n", name, e.what());
        }
    }

    std::error_code ec;
    fs::remove_all(workspace, ec);

    if (failures == 0) {
        std::printf("cli driver: all scenarios passed\n");
        return 0;
    }
    std::printf("cli driver: %d check(s) failed\n", failures);
    return 1;
}
