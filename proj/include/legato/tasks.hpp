#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "legato/chunk.hpp"
#include "legato/rng.hpp"

namespace legato {

static_assert(std::endian::native == std::endian::little,
              "dataset container is written little-endian");

// Point-mass state driven by per-step displacement commands.
struct EnvState {
    std::array<double, 2> pos{0.0, 0.0};
    int time = 0;
};

inline EnvState rollout_env(EnvState state, const double* action, std::size_t dim) {
    if (dim < 2) throw std::invalid_argument("rollout_env: need at least 2 action dims");
    state.pos[0] += action[0];
    state.pos[1] += action[1];
    state.time += 1;
    return state;
}

// Reaching task with two symmetric goals; the sign of the final x position
// labels the mode.
struct BimodalReachTask {
    std::array<double, 2> start{0.0, 0.0};
    std::vector<std::array<double, 2>> goals{{-1.0, 1.0}, {1.0, 1.0}};

    double goal_distance() const {
        const double dx = goals[1][0] - start[0];
        const double dy = goals[1][1] - start[1];
        return std::sqrt(dx * dx + dy * dy);
    }

    bool at_goal(const std::array<double, 2>& pos, double tol) const {
        for (const auto& g : goals) {
            const double dx = pos[0] - g[0];
            const double dy = pos[1] - g[1];
            if (std::sqrt(dx * dx + dy * dy) <= tol) return true;
        }
        return false;
    }
};

struct Demonstration {
    std::vector<double> obs;
    Chunk actions;
    int mode_label = 0;
};

struct Dataset {
    int h = 0;
    int action_dim = 0;
    int obs_dim = 0;
    std::uint64_t seed = 0;
    std::string generator;
    std::map<std::string, double> params;
    std::vector<Demonstration> demos;

    std::size_t size() const { return demos.size(); }
};

namespace detail {

// Quintic ease 10 tau^3 - 15 tau^4 + 6 tau^5: zero velocity and
// acceleration at both ends.
inline double minjerk_fraction(double tau) {
    return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

}  // namespace detail

// Displacement rows of a smooth point-to-point profile over h steps. The
// rows telescope, so their cumulative sum lands on (goal - start) up to
// rounding.
inline Chunk minjerk_chunk(const std::array<double, 2>& start,
                           const std::array<double, 2>& goal, int h) {
    if (h < 1) throw std::invalid_argument("minjerk_chunk: h must be >= 1");
    Chunk c(static_cast<std::size_t>(h), 2);
    double prev = 0.0;
    for (int t = 0; t < h; ++t) {
        const double cur = detail::minjerk_fraction(static_cast<double>(t + 1) / h);
        const double df = cur - prev;
        c(static_cast<std::size_t>(t), 0) = df * (goal[0] - start[0]);
        c(static_cast<std::size_t>(t), 1) = df * (goal[1] - start[1]);
        prev = cur;
    }
    return c;
}

struct BimodalReachParams {
    double noise_scale = 0.05;   // per-demo Gaussian jitter on the goal
    double start_scale = 0.5;    // spread of start positions around the origin
};

/**
 * Expert data for the reaching task: each demo starts near the origin,
 * picks one of the two goals uniformly at random (independently of the
 * start), and follows a minimum-jerk displacement profile that integrates
 * exactly from its start to its (jittered) goal. The observation is the
 * start position; the label is the sign of the final position's x.
 */
inline Dataset gen_bimodal_reach(Rng& rng, int n_demos, int h,
                                 const BimodalReachParams& p = {},
                                 const BimodalReachTask& task = {}) {
    if (n_demos < 1) throw std::invalid_argument("gen_bimodal_reach: n_demos must be >= 1");
    Dataset ds;
    ds.h = h;
    ds.action_dim = 2;
    ds.obs_dim = 2;
    ds.generator = "bimodal_reach";
    ds.params = {{"noise_scale", p.noise_scale}, {"start_scale", p.start_scale}};
    ds.demos.reserve(static_cast<std::size_t>(n_demos));

    for (int n = 0; n < n_demos; ++n) {
        std::array<double, 2> start{task.start[0] + draw_normal(rng, 0.0, p.start_scale),
                                    task.start[1] + draw_normal(rng, 0.0, p.start_scale)};
        const std::size_t pick = draw_int(rng, 0, 1);
        std::array<double, 2> goal = task.goals[pick];
        goal[0] += draw_normal(rng, 0.0, p.noise_scale);
        goal[1] += draw_normal(rng, 0.0, p.noise_scale);

        Demonstration demo;
        demo.obs = {start[0], start[1]};
        demo.actions = minjerk_chunk(start, goal, h);
        demo.mode_label = goal[0] > 0.0 ? 1 : 0;
        ds.demos.push_back(std::move(demo));
    }
    return ds;
}

struct OscillatingPourParams {
    double period = 40.0;       // steps per oscillation
    double reach_amp = 0.03;    // displacement amplitude, reach axis
    double tilt_amp = 0.015;    // displacement amplitude, tilt axis
    double noise_scale = 0.0;
};

// Expert displacement command at step t of the pouring motion: a slow
// reach-and-return on axis 0 and a double-rate tilt oscillation on axis 1.
inline std::array<double, 2> pour_command(int t, const OscillatingPourParams& p) {
    const double ph = 2.0 * std::numbers::pi * static_cast<double>(t) / p.period;
    return {p.reach_amp * std::sin(ph), p.tilt_amp * std::sin(2.0 * ph + 0.5)};
}

/**
 * A single long sinusoidal pouring motion cut into n_demos consecutive
 * h-step chunks. Re-concatenating the chunks in order reproduces the
 * expert stream sample-for-sample (noise 0). The observation is the
 * cumulative position at the chunk start.
 */
inline Dataset gen_oscillating_pour(Rng& rng, int n_demos, int h,
                                    const OscillatingPourParams& p = {}) {
    if (n_demos < 1) throw std::invalid_argument("gen_oscillating_pour: n_demos must be >= 1");
    Dataset ds;
    ds.h = h;
    ds.action_dim = 2;
    ds.obs_dim = 2;
    ds.generator = "oscillating_pour";
    ds.params = {{"period", p.period},
                 {"reach_amp", p.reach_amp},
                 {"tilt_amp", p.tilt_amp},
                 {"noise_scale", p.noise_scale}};
    ds.demos.reserve(static_cast<std::size_t>(n_demos));

    std::array<double, 2> pos{0.0, 0.0};
    for (int n = 0; n < n_demos; ++n) {
        Demonstration demo;
        demo.obs = {pos[0], pos[1]};
        demo.actions = Chunk(static_cast<std::size_t>(h), 2);
        for (int t = 0; t < h; ++t) {
            auto u = pour_command(n * h + t, p);
            if (p.noise_scale > 0.0) {
                u[0] += draw_normal(rng, 0.0, p.noise_scale);
                u[1] += draw_normal(rng, 0.0, p.noise_scale);
            }
            demo.actions(static_cast<std::size_t>(t), 0) = u[0];
            demo.actions(static_cast<std::size_t>(t), 1) = u[1];
            pos[0] += u[0];
            pos[1] += u[1];
        }
        demo.mode_label = 0;
        ds.demos.push_back(std::move(demo));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset container: "LGDS" magic, u32 format version, length-prefixed JSON
// header, then packed little-endian float64 arrays (observations, then
// action chunks, then int32 mode labels).
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr char kDatasetMagic[4] = {'L', 'G', 'D', 'S'};

template <typename T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw std::runtime_error("dataset container: truncated file");
    return value;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_dataset: cannot open " + path.string());

    nlohmann::json header = {{"h", ds.h},
                             {"action_dim", ds.action_dim},
                             {"obs_dim", ds.obs_dim},
                             {"n_demos", ds.demos.size()},
                             {"seed", ds.seed},
                             {"generator", ds.generator},
                             {"params", ds.params}};
    const std::string header_text = header.dump();

    os.write(detail::kDatasetMagic, 4);
    detail::write_pod(os, detail::kDatasetVersion);
    detail::write_pod(os, static_cast<std::uint64_t>(header_text.size()));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    for (const auto& demo : ds.demos)
        os.write(reinterpret_cast<const char*>(demo.obs.data()),
                 static_cast<std::streamsize>(demo.obs.size() * sizeof(double)));
    for (const auto& demo : ds.demos)
        os.write(reinterpret_cast<const char*>(demo.actions.data().data()),
                 static_cast<std::streamsize>(demo.actions.size() * sizeof(double)));
    for (const auto& demo : ds.demos) {
        const std::int32_t label = demo.mode_label;
        detail::write_pod(os, label);
    }
    if (!os) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_dataset: cannot open " + path.string());

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
        throw std::runtime_error("load_dataset: bad magic in " + path.string());
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != detail::kDatasetVersion)
        throw std::runtime_error("load_dataset: unsupported format version");

    const auto header_len = detail::read_pod<std::uint64_t>(is);
    std::string header_text(header_len, '\0');
    is.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("load_dataset: truncated header");
    const nlohmann::json header = nlohmann::json::parse(header_text);

    Dataset ds;
    ds.h = header.at("h").get<int>();
    ds.action_dim = header.at("action_dim").get<int>();
    ds.obs_dim = header.at("obs_dim").get<int>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.generator = header.at("generator").get<std::string>();
    ds.params = header.at("params").get<std::map<std::string, double>>();
    const auto n = header.at("n_demos").get<std::size_t>();

    ds.demos.resize(n);
    for (auto& demo : ds.demos) {
        demo.obs.resize(static_cast<std::size_t>(ds.obs_dim));
        is.read(reinterpret_cast<char*>(demo.obs.data()),
                static_cast<std::streamsize>(demo.obs.size() * sizeof(double)));
    }
    for (auto& demo : ds.demos) {
        demo.actions = Chunk(static_cast<std::size_t>(ds.h),
                             static_cast<std::size_t>(ds.action_dim));
        is.read(reinterpret_cast<char*>(demo.actions.data().data()),
                static_cast<std::streamsize>(demo.actions.size() * sizeof(double)));
    }
    for (auto& demo : ds.demos) demo.mode_label = detail::read_pod<std::int32_t>(is);
    if (!is) throw std::runtime_error("load_dataset: truncated payload");
    return ds;
}

}  // namespace legato
