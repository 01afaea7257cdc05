#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "legato/flowmath.hpp"
#include "legato/policy.hpp"
#include "legato/tasks.hpp"

namespace legato {

enum class Strategy { naive, oneshot, rtc_soft, rtc_train, legato };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::naive: return "naive";
        case Strategy::oneshot: return "oneshot";
        case Strategy::rtc_soft: return "rtc_soft";
        case Strategy::rtc_train: return "rtc_train";
        case Strategy::legato: return "legato";
    }
    throw std::logic_error("to_string(Strategy): bad value");
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "naive") return Strategy::naive;
    if (s == "oneshot") return Strategy::oneshot;
    if (s == "rtc_soft") return Strategy::rtc_soft;
    if (s == "rtc_train") return Strategy::rtc_train;
    if (s == "legato") return Strategy::legato;
    throw std::invalid_argument("unknown strategy: " + s);
}

// Which training family a strategy's checkpoint must come from.
inline TrainFamily required_family(Strategy s) {
    switch (s) {
        case Strategy::naive:
        case Strategy::oneshot:
        case Strategy::rtc_soft: return TrainFamily::vanilla;
        case Strategy::rtc_train: return TrainFamily::rtc_train;
        case Strategy::legato: return TrainFamily::legato;
    }
    throw std::logic_error("required_family: bad strategy");
}

struct ExecConfig {
    Strategy strategy = Strategy::legato;
    ScheduleParams params;
    // When set, replaces the (d, r)-shaped weights; d still controls the
    // delay overlap and s the stride.
    std::optional<std::vector<double>> explicit_omega;
    int n_steps = 5;
    int max_cycles = 8;
    double goal_tolerance = 0.0;  // absolute distance; <= 0 means never fires
    std::uint64_t seed = 0;

    void validate() const {
        params.validate();
        if (n_steps < 1) throw std::invalid_argument("ExecConfig: n_steps must be >= 1");
        if (max_cycles < 1) throw std::invalid_argument("ExecConfig: max_cycles must be >= 1");
        // The planner is triggered s - d steps into each executed segment,
        // so the delay cannot exceed the stride.
        if (params.d > params.s)
            throw std::invalid_argument("ExecConfig: delay d must not exceed stride s");
        if (explicit_omega && static_cast<int>(explicit_omega->size()) != params.h)
            throw std::invalid_argument("ExecConfig: explicit omega length must equal h");
    }

    GuidanceSchedule schedule() const {
        return explicit_omega ? schedule_from_omega(*explicit_omega, n_steps)
                              : build_schedule(params, n_steps);
    }
};

// Shifts the previous chunk forward by the stride and repeats its final row:
// rows [s, h) followed by s copies of row h-1.
inline Chunk pad_last(const Chunk& prev, int s) {
    const int h = static_cast<int>(prev.rows());
    if (s < 0 || s > h) throw std::out_of_range("pad_last: stride out of range");
    Chunk out(prev.rows(), prev.cols());
    for (int i = 0; i < h; ++i) {
        const int src = std::min(i + s, h - 1);
        for (std::size_t j = 0; j < prev.cols(); ++j)
            out(static_cast<std::size_t>(i), j) = prev(static_cast<std::size_t>(src), j);
    }
    return out;
}

// Per-denoising-step mean Euclidean distance between the carried state's
// first d rows and the reference, in normalized action units. Entry k is
// the state after step k (k = 0 is the initial state).
struct GenerationLog {
    std::vector<double> prefix_dist;
};

namespace detail {

inline double prefix_distance(const Chunk& state, const Chunk& a_ref, int d) {
    if (d <= 0) return 0.0;
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < state.cols(); ++j) {
            const double diff = state(static_cast<std::size_t>(i), j) -
                                a_ref(static_cast<std::size_t>(i), j);
            row += diff * diff;
        }
        acc += std::sqrt(row);
    }
    return acc / d;
}

inline void log_state(GenerationLog* log, const Chunk& state, const Chunk& a_ref, int d) {
    if (log != nullptr) log->prefix_dist.push_back(prefix_distance(state, a_ref, d));
}

}  // namespace detail

/**
 * Draws eps ~ N(0, I) and denoises one chunk in normalized action units.
 *
 *   naive      plain Euler from eps, no reference.
 *   oneshot    reference written over the first d rows of eps once, then
 *              plain Euler; nothing holds the prefix in place afterwards.
 *   rtc_soft   per-step soft pull toward the reference around a net that
 *              was trained without guidance (zero condition row); the final
 *              transported state is returned un-pulled.
 *   rtc_train  hard prefix: rows < d overwritten with the reference at
 *              initialization and after every step.
 *   legato     per-step pull with the full schedule; the returned chunk is
 *              the guided state, so rows with weight 1 equal the reference
 *              bit-for-bit.
 */
inline Chunk generate_chunk(const PolicyNet& net, std::span<const double> obs_norm,
                            const Chunk& a_ref_norm, const GuidanceSchedule& sched,
                            Strategy strategy, int prefix_len, Rng& rng,
                            GenerationLog* log = nullptr) {
    const auto& arch = net.arch();
    const auto h = static_cast<std::size_t>(arch.h);
    const auto da = static_cast<std::size_t>(arch.action_dim);
    if (sched.horizon() != h)
        throw std::invalid_argument("generate_chunk: schedule horizon does not match network");
    if (prefix_len < 0 || prefix_len > static_cast<int>(h))
        throw std::invalid_argument("generate_chunk: prefix length out of range");
    require_same_shape(a_ref_norm, Chunk(h, da), "generate_chunk");

    const Chunk eps = draw_normal_chunk(rng, h, da);
    const int n = sched.n_steps;
    const int d = prefix_len;
    const GuidanceSchedule zero = zero_schedule(static_cast<int>(h), n);

    auto hard_prefix = [&]() {
        ScheduleParams p;
        p.h = static_cast<int>(h);
        p.d = d;
        p.r = 0;
        p.s = std::max(1, static_cast<int>(h) - d);
        return build_schedule(p, n);
    };

    auto euler_from = [&](Chunk x) {
        detail::log_state(log, x, a_ref_norm, d);
        for (int k = 0; k < n; ++k) {
            const double t = static_cast<double>(k) / n;
            const Chunk v = net.forward(x, obs_norm, t, zero);
            for (std::size_t i = 0; i < x.size(); ++i)
                x.data()[i] += sched.delta_t * v.data()[i];
            detail::log_state(log, x, a_ref_norm, d);
        }
        return x;
    };

    switch (strategy) {
        case Strategy::naive:
            return euler_from(eps);

        case Strategy::oneshot:
            return euler_from(guide(eps, a_ref_norm, hard_prefix()));

        case Strategy::rtc_soft: {
            // Same soft per-step pull as legato, but the net was trained
            // without guidance (zero condition column) and the returned
            // chunk is the final transported state, not the guided one.
            DenoiseState state = make_denoise_state(eps, a_ref_norm, sched);
            detail::log_state(log, state.y, a_ref_norm, d);
            Chunk x = state.y;
            for (int k = 0; k < n; ++k) {
                const Chunk v = net.forward(state.y, obs_norm, state.t, zero);
                x = state.y;
                for (std::size_t i = 0; i < x.size(); ++i)
                    x.data()[i] += sched.delta_t * v.data()[i];
                state.y = guide(x, a_ref_norm, sched);
                state.k += 1;
                state.t = static_cast<double>(state.k) / n;
                detail::log_state(log, k + 1 < n ? state.y : x, a_ref_norm, d);
            }
            return x;
        }

        case Strategy::rtc_train: {
            const GuidanceSchedule binary = hard_prefix();
            DenoiseState state = make_denoise_state(eps, a_ref_norm, binary);
            detail::log_state(log, state.y, a_ref_norm, d);
            for (int k = 0; k < n; ++k) {
                const Chunk v = net.forward(state.y, obs_norm, state.t, binary);
                state = guided_step(state, v, a_ref_norm, binary);
                detail::log_state(log, state.y, a_ref_norm, d);
            }
            return state.y;
        }

        case Strategy::legato: {
            DenoiseState state = make_denoise_state(eps, a_ref_norm, sched);
            detail::log_state(log, state.y, a_ref_norm, d);
            for (int k = 0; k < n; ++k) {
                const Chunk v = net.forward(state.y, obs_norm, state.t, sched);
                state = guided_step(state, v, a_ref_norm, sched);
                detail::log_state(log, state.y, a_ref_norm, d);
            }
            return state.y;
        }
    }
    throw std::logic_error("generate_chunk: bad strategy");
}

struct CycleRecord {
    Chunk chunk;        // generated chunk, env units
    Chunk reference;    // padded previous chunk, env units (zeros on cycle 0)
    bool has_reference = false;
    int overlap_len = 0;            // d rows compared for overlap RMSE
    int frame_overlap_len = 0;      // h - s rows shared between frames
    int mode_label = 0;
    GenerationLog log;
};

struct ExecutionTrace {
    std::string strategy;
    ScheduleParams params;
    int n_steps = 0;
    int max_cycles = 0;
    double goal_tolerance = 0.0;
    std::uint64_t seed = 0;
    int h = 0;
    int action_dim = 0;
    Chunk stream;  // committed commands, (cycles * s) x action_dim
    std::vector<CycleRecord> cycles;
    std::vector<int> delay_per_cycle;
};

/**
 * Receding-horizon rollout. Each planning cycle is triggered d steps before
 * the previous chunk's executed segment runs out, so the new chunk's first
 * d rows cover commands that are already being executed; generation sees
 * the observation from the trigger time. Rows [d, d + s) of each chunk are
 * committed. Cycle 0 guides against an all-zero previous chunk; its record
 * carries no overlap boundary since there is no real predecessor to score.
 * The loop stops after the cycle in which a committed step enters the goal
 * tolerance, or after max_cycles.
 */
inline ExecutionTrace run_episode(const PolicyNet& net, const BimodalReachTask& task,
                                  const ExecConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto& arch = net.arch();
    if (arch.h != cfg.params.h)
        throw std::invalid_argument("run_episode: schedule horizon does not match network");
    if (arch.action_dim < 2)
        throw std::invalid_argument("run_episode: task needs at least 2 action dims");

    const int h = arch.h;
    const int da = arch.action_dim;
    const int s = cfg.params.s;
    const int d = cfg.params.d;
    const GuidanceSchedule sched = cfg.schedule();
    const Normalizer& norm = net.normalizer();

    ExecutionTrace trace;
    trace.strategy = to_string(cfg.strategy);
    trace.params = cfg.params;
    trace.n_steps = cfg.n_steps;
    trace.max_cycles = cfg.max_cycles;
    trace.goal_tolerance = cfg.goal_tolerance;
    trace.seed = cfg.seed;
    trace.h = h;
    trace.action_dim = da;

    std::vector<std::array<double, 2>> pos_after;  // position after m+1 committed steps
    std::vector<double> stream_rows;
    Chunk a_prev_norm(static_cast<std::size_t>(h), static_cast<std::size_t>(da));
    bool reached = false;

    for (int c = 0; c < cfg.max_cycles && !reached; ++c) {
        // Observation from the trigger time: c*s - d committed steps in.
        std::array<double, 2> obs_pos = task.start;
        if (c > 0) {
            const int k = c * s - d;
            if (k > 0) obs_pos = pos_after[static_cast<std::size_t>(k - 1)];
        }
        const std::vector<double> obs_raw{obs_pos[0], obs_pos[1]};
        const std::vector<double> obs_norm = norm.normalize_obs(obs_raw);

        // The first cycle runs the same guided machinery against an all-zero
        // previous chunk; only the overlap bookkeeping treats it specially,
        // since there is no real chunk-to-chunk boundary to score yet.
        const Chunk a_ref_norm = pad_last(a_prev_norm, s);
        const bool real_boundary = c > 0;

        CycleRecord rec;
        const Chunk chunk_norm = generate_chunk(net, obs_norm, a_ref_norm, sched,
                                                cfg.strategy, d, rng, &rec.log);
        rec.chunk = norm.denormalize_actions(chunk_norm);
        rec.reference = norm.denormalize_actions(a_ref_norm);
        rec.has_reference = real_boundary;
        rec.overlap_len = real_boundary ? d : 0;
        rec.frame_overlap_len = real_boundary ? h - s : 0;

        double x_sum = 0.0;
        for (int i = 0; i < h; ++i) x_sum += rec.chunk(static_cast<std::size_t>(i), 0);
        rec.mode_label = x_sum > 0.0 ? 1 : 0;

        for (int i = d; i < d + s; ++i) {
            std::array<double, 2> p =
                pos_after.empty() ? task.start : pos_after.back();
            for (int j = 0; j < da; ++j)
                stream_rows.push_back(rec.chunk(static_cast<std::size_t>(i),
                                                static_cast<std::size_t>(j)));
            p[0] += rec.chunk(static_cast<std::size_t>(i), 0);
            p[1] += rec.chunk(static_cast<std::size_t>(i), 1);
            pos_after.push_back(p);
            if (cfg.goal_tolerance > 0.0 && task.at_goal(p, cfg.goal_tolerance))
                reached = true;
        }

        trace.cycles.push_back(std::move(rec));
        trace.delay_per_cycle.push_back(d);
        a_prev_norm = chunk_norm;
    }

    const std::size_t n_rows = stream_rows.size() / static_cast<std::size_t>(da);
    trace.stream = Chunk::from_rows(n_rows, static_cast<std::size_t>(da), std::move(stream_rows));
    return trace;
}

// First committed step index whose cumulative position is inside the goal
// tolerance; empty if the stream never gets there.
inline std::optional<int> completion_time(const ExecutionTrace& trace,
                                          const BimodalReachTask& task, double tol) {
    std::array<double, 2> p = task.start;
    for (std::size_t m = 0; m < trace.stream.rows(); ++m) {
        p[0] += trace.stream(m, 0);
        p[1] += trace.stream(m, 1);
        if (task.at_goal(p, tol)) return static_cast<int>(m);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Trace file: versioned JSON, config echo plus committed stream and
// per-cycle records.
// ---------------------------------------------------------------------------

constexpr int kTraceVersion = 1;

namespace detail {

inline nlohmann::json chunk_to_json(const Chunk& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < c.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < c.cols(); ++j) row.push_back(c(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Chunk chunk_from_json(const nlohmann::json& j, std::size_t cols_hint) {
    const std::size_t rows = j.size();
    std::size_t cols = cols_hint;
    if (rows > 0) cols = j.front().size();
    Chunk c(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t jj = 0; jj < cols; ++jj) c(i, jj) = j[i][jj].get<double>();
    return c;
}

}  // namespace detail

inline void save_trace(const ExecutionTrace& trace, const std::filesystem::path& path) {
    nlohmann::json j = {{"format_version", kTraceVersion},
                        {"strategy", trace.strategy},
                        {"schedule",
                         {{"d", trace.params.d},
                          {"r", trace.params.r},
                          {"s", trace.params.s},
                          {"h", trace.params.h},
                          {"n_steps", trace.n_steps}}},
                        {"max_cycles", trace.max_cycles},
                        {"goal_tolerance", trace.goal_tolerance},
                        {"seed", trace.seed},
                        {"h", trace.h},
                        {"action_dim", trace.action_dim},
                        {"delay_per_cycle", trace.delay_per_cycle},
                        {"stream", detail::chunk_to_json(trace.stream)}};

    nlohmann::json cycles = nlohmann::json::array();
    for (const auto& rec : trace.cycles) {
        cycles.push_back({{"chunk", detail::chunk_to_json(rec.chunk)},
                          {"reference", detail::chunk_to_json(rec.reference)},
                          {"has_reference", rec.has_reference},
                          {"overlap_len", rec.overlap_len},
                          {"frame_overlap_len", rec.frame_overlap_len},
                          {"mode_label", rec.mode_label},
                          {"prefix_dist", rec.log.prefix_dist}});
    }
    j["cycles"] = std::move(cycles);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_trace: cannot open " + path.string());
    os << j.dump();
    if (!os) throw std::runtime_error("save_trace: write failed for " + path.string());
}

inline ExecutionTrace load_trace(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_trace: cannot open " + path.string());
    nlohmann::json j;
    is >> j;
    if (j.at("format_version").get<int>() != kTraceVersion)
        throw std::runtime_error("load_trace: unsupported format version");

    ExecutionTrace trace;
    trace.strategy = j.at("strategy").get<std::string>();
    const auto& js = j.at("schedule");
    trace.params.d = js.at("d").get<int>();
    trace.params.r = js.at("r").get<int>();
    trace.params.s = js.at("s").get<int>();
    trace.params.h = js.at("h").get<int>();
    trace.n_steps = js.at("n_steps").get<int>();
    trace.max_cycles = j.at("max_cycles").get<int>();
    trace.goal_tolerance = j.at("goal_tolerance").get<double>();
    trace.seed = j.at("seed").get<std::uint64_t>();
    trace.h = j.at("h").get<int>();
    trace.action_dim = j.at("action_dim").get<int>();
    trace.delay_per_cycle = j.at("delay_per_cycle").get<std::vector<int>>();
    trace.stream = detail::chunk_from_json(j.at("stream"),
                                           static_cast<std::size_t>(trace.action_dim));

    for (const auto& jc : j.at("cycles")) {
        CycleRecord rec;
        rec.chunk = detail::chunk_from_json(jc.at("chunk"),
                                            static_cast<std::size_t>(trace.action_dim));
        rec.reference = detail::chunk_from_json(jc.at("reference"),
                                                static_cast<std::size_t>(trace.action_dim));
        rec.has_reference = jc.at("has_reference").get<bool>();
        rec.overlap_len = jc.at("overlap_len").get<int>();
        rec.frame_overlap_len = jc.at("frame_overlap_len").get<int>();
        rec.mode_label = jc.at("mode_label").get<int>();
        rec.log.prefix_dist = jc.at("prefix_dist").get<std::vector<double>>();
        trace.cycles.push_back(std::move(rec));
    }
    return trace;
}

}  // namespace legato
