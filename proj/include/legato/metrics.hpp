#pragma once

#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "legato/executor.hpp"

namespace legato {

// Position samples of a command stream at fixed rate 1/dt. Model outputs are
// per-step displacements, so metrics consume their cumulative sum.
struct CommandStream {
    Chunk samples;  // T x D positions
    double dt = 1.0 / 30.0;

    static CommandStream from_displacements(const Chunk& displacements, double dt) {
        CommandStream cs;
        cs.dt = dt;
        cs.samples = Chunk(displacements.rows() + 1, displacements.cols());
        for (std::size_t j = 0; j < displacements.cols(); ++j) cs.samples(0, j) = 0.0;
        for (std::size_t i = 0; i < displacements.rows(); ++i)
            for (std::size_t j = 0; j < displacements.cols(); ++j)
                cs.samples(i + 1, j) = cs.samples(i, j) + displacements(i, j);
        return cs;
    }
};

namespace detail {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline std::vector<double> row_norms(const Chunk& rows) {
    std::vector<double> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < rows.cols(); ++j) acc += rows(i, j) * rows(i, j);
        out[i] = std::sqrt(acc);
    }
    return out;
}

}  // namespace detail

/**
 * Spectral-arc-length roughness of the speed profile. Speed comes from
 * first differences of the position samples; its zero-padded DFT magnitude
 * spectrum is normalized by the DC bin, cut off at the first frequency
 * where it falls below `threshold` (capped at `max_cutoff_hz`), and the arc
 * length of the normalized spectrum over that band is returned. Larger
 * means rougher; the value is the negation of the conventional
 * (negative-valued) spectral arc length.
 */
inline double nsparc(const CommandStream& cs, double threshold = 0.05,
                     double max_cutoff_hz = 10.0, int pad_levels = 4) {
    const std::size_t t_len = cs.samples.rows();
    if (t_len < 8) throw std::invalid_argument("nsparc: need at least 8 samples");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("nsparc: threshold must be in (0, 1)");

    const std::size_t m = t_len - 1;
    Chunk vel(m, cs.samples.cols());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cs.samples.cols(); ++j)
            vel(i, j) = (cs.samples(i + 1, j) - cs.samples(i, j)) / cs.dt;
    const std::vector<double> speed = detail::row_norms(vel);

    const std::size_t nfft = detail::next_pow2(m) << pad_levels;
    std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
    for (std::size_t i = 0; i < m; ++i) buf[i] = {speed[i], 0.0};
    detail::fft(buf);

    const double dc = std::abs(buf[0]);
    if (dc <= 0.0) throw std::domain_error("nsparc: zero-DC speed spectrum is undefined");

    const double fs = 1.0 / cs.dt;
    const double df = fs / static_cast<double>(nfft);
    std::size_t k_cap = static_cast<std::size_t>(max_cutoff_hz / df);
    k_cap = std::min(k_cap, nfft / 2);
    if (k_cap < 1) k_cap = 1;

    std::size_t k_cut = k_cap;
    for (std::size_t k = 1; k <= k_cap; ++k) {
        if (std::abs(buf[k]) / dc < threshold) {
            k_cut = k;
            break;
        }
    }

    double arc = 0.0;
    const double dx = 1.0 / static_cast<double>(k_cut);  // frequency axis scaled to [0, 1]
    double prev = 1.0;                                   // normalized DC magnitude
    for (std::size_t k = 1; k <= k_cut; ++k) {
        const double cur = std::abs(buf[k]) / dc;
        arc += std::sqrt(dx * dx + (cur - prev) * (cur - prev));
        prev = cur;
    }
    return arc;
}

namespace detail {

// Third derivative of the position samples. Central five-point stencil in
// the interior, one-sided four-point stencils within two samples of either
// end; when the stream is too short for a stencil the nearest computed
// value is reused.
inline Chunk jerk_samples(const Chunk& p, double dt) {
    const std::size_t t_len = p.rows();
    const std::size_t dim = p.cols();
    Chunk j(t_len, dim);
    std::vector<bool> have(t_len, false);
    const double dt3 = dt * dt * dt;

    for (std::size_t t = 0; t < t_len; ++t) {
        if (t >= 2 && t + 2 < t_len) {
            for (std::size_t c = 0; c < dim; ++c)
                j(t, c) = (p(t + 2, c) - 2.0 * p(t + 1, c) + 2.0 * p(t - 1, c) -
                           p(t - 2, c)) /
                          (2.0 * dt3);
            have[t] = true;
        } else if (t + 3 < t_len && t < 2) {
            for (std::size_t c = 0; c < dim; ++c)
                j(t, c) = (p(t + 3, c) - 3.0 * p(t + 2, c) + 3.0 * p(t + 1, c) - p(t, c)) / dt3;
            have[t] = true;
        } else if (t >= 3) {
            for (std::size_t c = 0; c < dim; ++c)
                j(t, c) = (p(t, c) - 3.0 * p(t - 1, c) + 3.0 * p(t - 2, c) - p(t - 3, c)) / dt3;
            have[t] = true;
        }
    }
    // Short-stream fallback: copy the nearest defined sample.
    for (std::size_t t = 0; t < t_len; ++t) {
        if (have[t]) continue;
        std::size_t src = t;
        for (std::size_t off = 1; off < t_len; ++off) {
            if (t >= off && have[t - off]) { src = t - off; break; }
            if (t + off < t_len && have[t + off]) { src = t + off; break; }
        }
        for (std::size_t c = 0; c < dim; ++c) j(t, c) = j(src, c);
    }
    return j;
}

}  // namespace detail

/**
 * Negated log-dimensionless-jerk of the position stream:
 *   ln( duration^5 / v_peak^2 * integral ||jerk||^2 dt ).
 * Lower is smoother. `junctions` lists the first stream index of each
 * later segment when the stream was stitched from chunks; jerk samples
 * within [m - 2, m + 1] of a junction m are excluded so the splice itself
 * is not scored.
 */
inline double nldlj(const CommandStream& cs, std::span<const int> junctions = {}) {
    const std::size_t t_len = cs.samples.rows();
    if (t_len < 4) throw std::invalid_argument("nldlj: need at least 4 samples");

    // Central-difference velocity, one-sided at the ends, for the peak.
    Chunk vel(t_len, cs.samples.cols());
    for (std::size_t i = 0; i < t_len; ++i) {
        for (std::size_t j = 0; j < cs.samples.cols(); ++j) {
            if (i == 0)
                vel(i, j) = (cs.samples(1, j) - cs.samples(0, j)) / cs.dt;
            else if (i + 1 == t_len)
                vel(i, j) = (cs.samples(i, j) - cs.samples(i - 1, j)) / cs.dt;
            else
                vel(i, j) = (cs.samples(i + 1, j) - cs.samples(i - 1, j)) / (2.0 * cs.dt);
        }
    }
    double v_peak = 0.0;
    for (double n : detail::row_norms(vel)) v_peak = std::max(v_peak, n);
    if (v_peak <= 0.0) throw std::domain_error("nldlj: zero peak speed is undefined");

    const Chunk jerk = detail::jerk_samples(cs.samples, cs.dt);
    auto excluded = [&](std::size_t t) {
        for (int m : junctions) {
            const auto tt = static_cast<long>(t);
            if (tt >= static_cast<long>(m) - 2 && tt <= static_cast<long>(m) + 1) return true;
        }
        return false;
    };

    double integral = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
        if (excluded(t)) continue;
        double n2 = 0.0;
        for (std::size_t c = 0; c < jerk.cols(); ++c) n2 += jerk(t, c) * jerk(t, c);
        integral += n2 * cs.dt;
    }
    if (integral <= 0.0) throw std::domain_error("nldlj: zero jerk integral is undefined");

    const double duration = static_cast<double>(t_len) * cs.dt;
    return std::log(std::pow(duration, 5) / (v_peak * v_peak) * integral);
}

// Averages a metric over disjoint column groups (e.g. one group per
// effector); every column index must be valid for the stream.
template <typename MetricFn>
inline double average_over_blocks(const CommandStream& cs,
                                  const std::vector<std::vector<int>>& blocks,
                                  MetricFn&& fn) {
    if (blocks.empty()) throw std::invalid_argument("average_over_blocks: no blocks");
    double acc = 0.0;
    for (const auto& cols : blocks) {
        if (cols.empty()) throw std::invalid_argument("average_over_blocks: empty block");
        CommandStream sub;
        sub.dt = cs.dt;
        sub.samples = Chunk(cs.samples.rows(), cols.size());
        for (std::size_t i = 0; i < cs.samples.rows(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                sub.samples(i, j) = cs.samples(i, static_cast<std::size_t>(cols[j]));
        acc += fn(sub);
    }
    return acc / static_cast<double>(blocks.size());
}

// Removes 2*pi jumps from a sampled angle signal so rotational channels can
// be fed to the smoothness metrics as ordinary scalar streams.
inline std::vector<double> unwrap_angles(std::span<const double> angles) {
    std::vector<double> out(angles.begin(), angles.end());
    double shift = 0.0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        const double raw = angles[i] + shift;
        double diff = raw - out[i - 1];
        while (diff > std::numbers::pi) { shift -= 2.0 * std::numbers::pi; diff -= 2.0 * std::numbers::pi; }
        while (diff < -std::numbers::pi) { shift += 2.0 * std::numbers::pi; diff += 2.0 * std::numbers::pi; }
        out[i] = angles[i] + shift;
    }
    return out;
}

struct OverlapPair {
    Chunk reference;  // O x D rows predicted by the previous chunk
    Chunk fresh;      // O x D rows of the new chunk
};

/**
 * Chunk-to-chunk disagreement: per boundary, the root of the mean over
 * overlap steps of the squared row distance; the mean over boundaries is
 * returned. Boundaries with no overlap rows contribute nothing; if none
 * has any, the metric is absent (never reported as zero).
 */
inline std::optional<double> overlap_rmse(const std::vector<OverlapPair>& boundaries) {
    double acc = 0.0;
    int counted = 0;
    for (const auto& b : boundaries) {
        require_same_shape(b.reference, b.fresh, "overlap_rmse");
        if (b.reference.rows() == 0) continue;
        double sq = 0.0;
        for (std::size_t i = 0; i < b.reference.rows(); ++i)
            for (std::size_t j = 0; j < b.reference.cols(); ++j) {
                const double diff = b.reference(i, j) - b.fresh(i, j);
                sq += diff * diff;
            }
        acc += std::sqrt(sq / static_cast<double>(b.reference.rows()));
        counted += 1;
    }
    if (counted == 0) return std::nullopt;
    return acc / counted;
}

inline int mode_switches(std::span<const int> labels) {
    if (labels.size() < 2)
        throw std::invalid_argument("mode_switches: need at least 2 labels");
    int count = 0;
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] != labels[i - 1]) ++count;
    return count;
}

struct MetricReport {
    double nsparc = 0.0;
    double nldlj = 0.0;
    std::optional<double> overlap_rmse;
    int mode_switches = 0;
    std::optional<int> completion_steps;
};

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j = {{"nsparc", r.nsparc},
                        {"nldlj", r.nldlj},
                        {"mode_switches", r.mode_switches}};
    j["overlap_rmse"] = r.overlap_rmse ? nlohmann::json(*r.overlap_rmse) : nlohmann::json();
    j["completion_steps"] =
        r.completion_steps ? nlohmann::json(*r.completion_steps) : nlohmann::json();
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.nsparc = j.at("nsparc").get<double>();
    r.nldlj = j.at("nldlj").get<double>();
    r.mode_switches = j.at("mode_switches").get<int>();
    if (!j.at("overlap_rmse").is_null()) r.overlap_rmse = j.at("overlap_rmse").get<double>();
    if (!j.at("completion_steps").is_null())
        r.completion_steps = j.at("completion_steps").get<int>();
    return r;
}

struct MetricOptions {
    double dt = 1.0 / 30.0;
    double sparc_threshold = 0.05;
    double sparc_cutoff_hz = 10.0;
    double goal_tolerance = 0.0;  // absolute; <= 0 disables completion lookup
};

inline std::vector<OverlapPair> overlap_pairs_from_trace(const ExecutionTrace& trace) {
    std::vector<OverlapPair> pairs;
    for (const auto& rec : trace.cycles) {
        if (!rec.has_reference || rec.overlap_len == 0) continue;
        OverlapPair p;
        const auto o = static_cast<std::size_t>(rec.overlap_len);
        p.reference = Chunk(o, rec.reference.cols());
        p.fresh = Chunk(o, rec.chunk.cols());
        for (std::size_t i = 0; i < o; ++i)
            for (std::size_t j = 0; j < rec.chunk.cols(); ++j) {
                p.reference(i, j) = rec.reference(i, j);
                p.fresh(i, j) = rec.chunk(i, j);
            }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// Same disagreement measure over the full h - s rows both planning frames
// share, where guidance is partial or absent. Diagnostic companion to the
// d-row overlap above.
inline std::optional<double> frame_overlap_rmse(const ExecutionTrace& trace) {
    std::vector<OverlapPair> pairs;
    for (const auto& rec : trace.cycles) {
        if (!rec.has_reference || rec.frame_overlap_len == 0) continue;
        OverlapPair p;
        const auto o = static_cast<std::size_t>(rec.frame_overlap_len);
        p.reference = Chunk(o, rec.reference.cols());
        p.fresh = Chunk(o, rec.chunk.cols());
        for (std::size_t i = 0; i < o; ++i)
            for (std::size_t j = 0; j < rec.chunk.cols(); ++j) {
                p.reference(i, j) = rec.reference(i, j);
                p.fresh(i, j) = rec.chunk(i, j);
            }
        pairs.push_back(std::move(p));
    }
    return overlap_rmse(pairs);
}

inline std::vector<int> junction_indices(const ExecutionTrace& trace) {
    std::vector<int> junctions;
    for (std::size_t c = 1; c < trace.cycles.size(); ++c)
        junctions.push_back(static_cast<int>(c) * trace.params.s);
    return junctions;
}

inline MetricReport compute_report(const ExecutionTrace& trace, const BimodalReachTask& task,
                                   const MetricOptions& opt = {}) {
    MetricReport r;
    const CommandStream cs = CommandStream::from_displacements(trace.stream, opt.dt);
    const std::vector<int> junctions = junction_indices(trace);
    r.nsparc = nsparc(cs, opt.sparc_threshold, opt.sparc_cutoff_hz);
    r.nldlj = nldlj(cs, junctions);
    r.overlap_rmse = overlap_rmse(overlap_pairs_from_trace(trace));

    std::vector<int> labels;
    for (const auto& rec : trace.cycles) labels.push_back(rec.mode_label);
    r.mode_switches = labels.size() >= 2 ? mode_switches(labels) : 0;

    const double tol = opt.goal_tolerance > 0.0 ? opt.goal_tolerance : trace.goal_tolerance;
    if (tol > 0.0) {
        if (auto step = completion_time(trace, task, tol)) r.completion_steps = *step;
    }
    return r;
}

struct Aggregate {
    double mean = 0.0;
    std::optional<double> stderr_;
    int n = 0;
};

inline Aggregate mean_stderr(std::span<const double> values) {
    Aggregate a;
    a.n = static_cast<int>(values.size());
    if (a.n == 0) throw std::invalid_argument("mean_stderr: empty sample");
    for (double v : values) a.mean += v;
    a.mean /= a.n;
    if (a.n >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stderr_ = std::sqrt(ss / (a.n - 1)) / std::sqrt(static_cast<double>(a.n));
    }
    return a;
}

}  // namespace legato
