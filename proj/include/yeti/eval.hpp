#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "yeti/error.hpp"

namespace yeti {

enum class Speaker { expert, user };

inline const char* to_string(Speaker s) {
    return s == Speaker::expert ? "expert" : "user";
}

inline Speaker speaker_from_string(const std::string& s) {
    if (s == "expert") return Speaker::expert;
    if (s == "user") return Speaker::user;
    throw Error("unknown speaker '" + s + "' (expected expert or user)");
}

/// The proactive conversation taxonomy. The first three classes are the ones
/// that count as interventions; all eight count as interactions. Reactive
/// utterances carry the type "reactive" and belong to neither scope.
inline constexpr std::array<std::string_view, 8> kProactiveClasses = {
    "follow_up_instruction", "confirm_action",  "correct_mistake", "high_level_instruction",
    "opening_remarks",       "closing_remarks", "adjusting_video", "other",
};
inline constexpr std::size_t kInterventionClassCount = 3;
inline constexpr std::string_view kReactiveType = "reactive";

inline bool is_proactive_class(std::string_view type) {
    return std::find(kProactiveClasses.begin(), kProactiveClasses.end(), type) !=
           kProactiveClasses.end();
}

inline bool is_intervention_class(std::string_view type) {
    const auto first = kProactiveClasses.begin();
    return std::find(first, first + kInterventionClassCount, type) !=
           first + kInterventionClassCount;
}

/// One annotated utterance. Times are seconds from session start; at 1 FPS a
/// detection at frame f sits at second f.
struct Annotation {
    double start_s = 0.0;
    double end_s = 0.0;
    Speaker speaker = Speaker::expert;
    std::string type;
    bool proactive = false;

    void validate() const {
        if (start_s < 0.0)
            throw Error("annotation start " + std::to_string(start_s) + " is negative");
        if (end_s < start_s)
            throw Error("annotation end " + std::to_string(end_s) + " precedes start " +
                        std::to_string(start_s));
        if (!is_proactive_class(type) && type != kReactiveType)
            throw Error("unknown conversation type '" + type + "'");
    }
};

enum class EvalMode { intervention, interaction };

inline const char* to_string(EvalMode m) {
    return m == EvalMode::intervention ? "intervention" : "interaction";
}

inline EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "intervention") return EvalMode::intervention;
    if (s == "interaction") return EvalMode::interaction;
    throw Error("unknown mode '" + s + "' (expected intervention or interaction)");
}

enum class SessionPolicy { both_speakers, expert_only };

inline const char* to_string(SessionPolicy p) {
    return p == SessionPolicy::both_speakers ? "both" : "expert-only";
}

/// Classes that act as ground truth under the given mode, in taxonomy order.
inline std::vector<std::string> classes_in_mode(EvalMode mode) {
    const std::size_t n =
        mode == EvalMode::intervention ? kInterventionClassCount : kProactiveClasses.size();
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(kProactiveClasses[i]);
    return out;
}

inline bool in_scope(const Annotation& a, EvalMode mode) {
    if (!a.proactive) return false;
    return mode == EvalMode::intervention ? is_intervention_class(a.type)
                                          : is_proactive_class(a.type);
}

struct MatchResult {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;
    // (detection frame, ground-truth start second) for each true positive
    std::vector<std::pair<int, double>> matched_pairs;
};

/// Greedy one-to-one matching by ascending |detection second − truth start|,
/// ties broken toward the earlier truth, then the earlier detection. Matches
/// beyond window_s never form. TN is the frame-level complement.
inline MatchResult match_detections(const std::vector<int>& detections,
                                    const std::vector<double>& truth_starts, double window_s,
                                    long total_frames) {
    if (!(window_s > 0.0))
        throw Error("matching window must be positive, got " + std::to_string(window_s));
    if (total_frames < 0)
        throw Error("total frame count must be non-negative, got " +
                    std::to_string(total_frames));
    for (int d : detections)
        if (d < 0 || static_cast<long>(d) >= total_frames)
            throw Error("detection frame " + std::to_string(d) +
                        " outside session range [0, " + std::to_string(total_frames) + ")");

    struct Candidate {
        double distance;
        double truth_start;
        int detection;
        std::size_t truth_index;
        std::size_t detection_index;
    };
    std::vector<Candidate> candidates;
    for (std::size_t di = 0; di < detections.size(); ++di) {
        const double second = static_cast<double>(detections[di]);
        for (std::size_t ti = 0; ti < truth_starts.size(); ++ti) {
            const double dist = std::abs(second - truth_starts[ti]);
            if (dist <= window_s)
                candidates.push_back({dist, truth_starts[ti], detections[di], ti, di});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.truth_start != b.truth_start) return a.truth_start < b.truth_start;
        return a.detection < b.detection;
    });

    std::vector<bool> detection_used(detections.size(), false);
    std::vector<bool> truth_used(truth_starts.size(), false);
    MatchResult result;
    for (const Candidate& c : candidates) {
        if (detection_used[c.detection_index] || truth_used[c.truth_index]) continue;
        detection_used[c.detection_index] = true;
        truth_used[c.truth_index] = true;
        result.matched_pairs.emplace_back(c.detection, c.truth_start);
    }
    result.tp = static_cast<long>(result.matched_pairs.size());
    result.fp = static_cast<long>(detections.size()) - result.tp;
    result.fn = static_cast<long>(truth_starts.size()) - result.tp;
    result.tn = std::max<long>(0, total_frames - result.tp - result.fp - result.fn);
    return result;
}

/// Metric values; a metric whose defining ratio is 0/0 is left unset and must
/// be printed as "n/a", never coerced to 0 or 1.
struct Metrics {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f_measure;
};

inline Metrics compute_metrics(const MatchResult& m) {
    if (m.tp < 0 || m.fp < 0 || m.fn < 0 || m.tn < 0)
        throw Error("match counts must be non-negative");
    Metrics out;
    const double tp = static_cast<double>(m.tp);
    if (m.tp + m.fp > 0) out.precision = tp / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0) out.recall = tp / static_cast<double>(m.tp + m.fn);
    const long denom = m.tp + m.tn + m.fp + m.fn;
    if (denom > 0)
        out.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(denom);
    if (out.precision && out.recall && *out.precision + *out.recall > 0.0)
        out.f_measure =
            2.0 * *out.precision * *out.recall / (*out.precision + *out.recall);
    return out;
}

struct ClassReport {
    MatchResult counts;
    Metrics metrics;
};

struct EvalReport {
    EvalMode mode = EvalMode::intervention;
    double window_s = 5.0;
    MatchResult overall;
    Metrics metrics;
    // taxonomy order; populated only for unfiltered evaluations
    std::vector<std::pair<std::string, ClassReport>> per_class;
    std::size_t session_count = 1;
};

/// Score one session's detections against its annotations. With class_filter
/// set, only that class's truths count (the per-class columns); otherwise the
/// union of in-scope truths is the target and per_class is filled in as well.
inline EvalReport evaluate_session(const std::vector<int>& detections,
                                   const std::vector<Annotation>& annotations, EvalMode mode,
                                   const std::optional<std::string>& class_filter,
                                   double window_s, long total_frames) {
    if (class_filter && !is_proactive_class(*class_filter))
        throw Error("unknown class '" + *class_filter + "'");

    auto starts_of = [&](const std::optional<std::string>& cls) {
        std::vector<double> starts;
        for (const Annotation& a : annotations)
            if (in_scope(a, mode) && (!cls || a.type == *cls)) starts.push_back(a.start_s);
        return starts;
    };

    EvalReport report;
    report.mode = mode;
    report.window_s = window_s;
    report.overall = match_detections(detections, starts_of(class_filter), window_s,
                                      total_frames);
    report.metrics = compute_metrics(report.overall);
    if (!class_filter) {
        for (const std::string& cls : classes_in_mode(mode)) {
            ClassReport entry;
            entry.counts = match_detections(detections, starts_of(cls), window_s, total_frames);
            entry.metrics = compute_metrics(entry.counts);
            report.per_class.emplace_back(cls, std::move(entry));
        }
    }
    return report;
}

inline bool has_speaker(const std::vector<Annotation>& annotations, Speaker s) {
    return std::any_of(annotations.begin(), annotations.end(),
                       [s](const Annotation& a) { return a.speaker == s; });
}

/// both_speakers keeps sessions where expert and user both talk; expert_only
/// keeps those where only the expert does. Sessions with no expert dialogue
/// (including empty ones) fall outside both policies.
inline bool session_included(const std::vector<Annotation>& annotations, SessionPolicy policy) {
    const bool expert = has_speaker(annotations, Speaker::expert);
    const bool user = has_speaker(annotations, Speaker::user);
    return policy == SessionPolicy::both_speakers ? (expert && user) : (expert && !user);
}

inline std::vector<std::size_t> filter_sessions(
    const std::vector<std::vector<Annotation>>& sessions, SessionPolicy policy) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < sessions.size(); ++i)
        if (session_included(sessions[i], policy)) kept.push_back(i);
    return kept;
}

enum class Aggregation { micro, macro };

inline const char* to_string(Aggregation a) {
    return a == Aggregation::micro ? "micro" : "macro";
}

namespace eval_detail {

inline void add_counts(MatchResult& into, const MatchResult& from) {
    into.tp += from.tp;
    into.fp += from.fp;
    into.fn += from.fn;
    into.tn += from.tn;
}

inline std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values)
        if (v) {
            sum += *v;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

}  // namespace eval_detail

/// Combine per-session reports. Micro sums raw counts, then computes metrics
/// once; macro averages each metric over the sessions where it is defined.
/// Per-session matched pairs are dropped (they are session-local detail).
inline EvalReport aggregate_reports(const std::vector<EvalReport>& reports, Aggregation how) {
    if (reports.empty()) throw Error("cannot aggregate zero evaluation reports");
    for (const EvalReport& r : reports)
        if (r.mode != reports.front().mode || r.window_s != reports.front().window_s)
            throw Error("cannot aggregate reports with differing mode or window");

    EvalReport out;
    out.mode = reports.front().mode;
    out.window_s = reports.front().window_s;
    out.session_count = reports.size();

    std::vector<std::string> class_names;
    for (const auto& [name, entry] : reports.front().per_class) class_names.push_back(name);

    for (const EvalReport& r : reports) eval_detail::add_counts(out.overall, r.overall);
    for (const std::string& name : class_names) {
        ClassReport merged;
        for (const EvalReport& r : reports)
            for (const auto& [cls, entry] : r.per_class)
                if (cls == name) eval_detail::add_counts(merged.counts, entry.counts);
        out.per_class.emplace_back(name, std::move(merged));
    }

    if (how == Aggregation::micro) {
        out.metrics = compute_metrics(out.overall);
        for (auto& [name, entry] : out.per_class) entry.metrics = compute_metrics(entry.counts);
        return out;
    }

    auto macro_metrics = [&](auto&& project) {
        std::vector<std::optional<double>> acc, prec, rec, f;
        for (const EvalReport& r : reports) {
            const Metrics* m = project(r);
            if (!m) continue;
            acc.push_back(m->accuracy);
            prec.push_back(m->precision);
            rec.push_back(m->recall);
            f.push_back(m->f_measure);
        }
        Metrics out_m;
        out_m.accuracy = eval_detail::mean_defined(acc);
        out_m.precision = eval_detail::mean_defined(prec);
        out_m.recall = eval_detail::mean_defined(rec);
        out_m.f_measure = eval_detail::mean_defined(f);
        return out_m;
    };
    out.metrics = macro_metrics([](const EvalReport& r) { return &r.metrics; });
    for (auto& [name, entry] : out.per_class) {
        const std::string& cls = name;
        entry.metrics = macro_metrics([&cls](const EvalReport& r) -> const Metrics* {
            for (const auto& [c, e] : r.per_class)
                if (c == cls) return &e.metrics;
            return nullptr;
        });
    }
    return out;
}

struct SessionEvalInput {
    std::vector<int> detections;
    std::vector<Annotation> annotations;
    long total_frames = 0;
};

/// Evaluate many sessions, optionally across threads. Reports come back in
/// input order regardless of scheduling.
inline std::vector<EvalReport> evaluate_sessions(const std::vector<SessionEvalInput>& sessions,
                                                 EvalMode mode,
                                                 const std::optional<std::string>& class_filter,
                                                 double window_s, unsigned threads = 1) {
    std::vector<EvalReport> reports(sessions.size());
    auto run = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < sessions.size(); i += step)
            reports[i] = evaluate_session(sessions[i].detections, sessions[i].annotations,
                                          mode, class_filter, window_s,
                                          sessions[i].total_frames);
    };
    if (threads <= 1 || sessions.size() <= 1) {
        run(0, 1);
        return reports;
    }
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(sessions.size()));
    std::vector<std::thread> pool;
    pool.reserve(n);
    std::mutex failure_mutex;
    std::exception_ptr failure;
    for (unsigned w = 0; w < n; ++w)
        pool.emplace_back([&, w] {
            try {
                run(w, n);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return reports;
}

}  // namespace yeti
