#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "legato/rng.hpp"

namespace legato {

/**
 * Shape parameters for a guidance schedule over a horizon of h steps:
 *   d  fully guided prefix length (inference delay, in control steps)
 *   r  linear ramp length following the prefix
 *   s  execution stride (steps committed per planning cycle)
 *
 * In receding-horizon execution the stride constraint r + s + d = h ties the
 * ramp length to the stride; elsewhere only d + r <= h is required.
 */
struct ScheduleParams {
    int d = 0;
    int r = 0;
    int s = 1;
    int h = 1;

    void validate() const {
        if (h < 1) throw std::invalid_argument("ScheduleParams: h must be >= 1");
        if (d < 0 || r < 0) throw std::invalid_argument("ScheduleParams: d and r must be >= 0");
        if (d + r > h) throw std::invalid_argument("ScheduleParams: d + r must be <= h");
        if (s < 1 || s > h) throw std::invalid_argument("ScheduleParams: s must be in [1, h]");
    }

    bool satisfies_stride_constraint() const { return d + r + s == h; }
};

/**
 * Per-row guidance weights omega in [0,1]^h and their rate form
 * kappa = omega / delta_t, where delta_t = 1 / n_steps is the step size of
 * the n_steps-step Euler integration from t=0 to t=1.
 *
 * omega[i] = 1 pins row i to the reference; omega[i] = 0 leaves it free.
 */
struct GuidanceSchedule {
    std::vector<double> omega;
    std::vector<double> kappa;
    double delta_t = 1.0;
    int n_steps = 1;
    ScheduleParams params;
    bool explicit_omega = false;

    std::size_t horizon() const { return omega.size(); }
};

/**
 * Builds the piecewise schedule: omega[i] = 1 for i < d, then a linear ramp
 * omega[d + j] = 1 - (j + 1) / (r + 1) for j = 0..r-1 (strictly inside
 * (0, 1)), then omega[i] = 0 for i >= d + r.
 */
inline GuidanceSchedule build_schedule(const ScheduleParams& p, int n_steps) {
    p.validate();
    if (n_steps < 1) throw std::invalid_argument("build_schedule: n_steps must be >= 1");

    GuidanceSchedule g;
    g.params = p;
    g.n_steps = n_steps;
    g.delta_t = 1.0 / static_cast<double>(n_steps);
    g.omega.assign(static_cast<std::size_t>(p.h), 0.0);
    for (int i = 0; i < p.d; ++i) g.omega[static_cast<std::size_t>(i)] = 1.0;
    for (int j = 0; j < p.r; ++j)
        g.omega[static_cast<std::size_t>(p.d + j)] =
            1.0 - static_cast<double>(j + 1) / static_cast<double>(p.r + 1);

    g.kappa.resize(g.omega.size());
    for (std::size_t i = 0; i < g.omega.size(); ++i)
        g.kappa[i] = g.omega[i] * static_cast<double>(n_steps);
    return g;
}

// Wraps an explicit weight vector (entries must lie in [0,1]). Used when a
// run config overrides the (d, r) shape with a hand-written omega.
inline GuidanceSchedule schedule_from_omega(std::vector<double> omega, int n_steps) {
    if (omega.empty()) throw std::invalid_argument("schedule_from_omega: empty omega");
    if (n_steps < 1) throw std::invalid_argument("schedule_from_omega: n_steps must be >= 1");
    for (double w : omega)
        if (!(w >= 0.0 && w <= 1.0))
            throw std::invalid_argument("schedule_from_omega: omega entries must be in [0,1]");

    GuidanceSchedule g;
    g.explicit_omega = true;
    g.n_steps = n_steps;
    g.delta_t = 1.0 / static_cast<double>(n_steps);
    g.params.h = static_cast<int>(omega.size());
    g.params.d = 0;
    g.params.r = 0;
    g.params.s = 1;
    g.omega = std::move(omega);
    g.kappa.resize(g.omega.size());
    for (std::size_t i = 0; i < g.omega.size(); ++i)
        g.kappa[i] = g.omega[i] * static_cast<double>(n_steps);
    return g;
}

struct IntRange {
    int lo = 0;
    int hi = 0;

    void validate() const {
        if (lo < 0 || hi < lo) throw std::invalid_argument("IntRange: need 0 <= lo <= hi");
    }
};

/**
 * Samples d ~ U{d_range}, r ~ U{r_range}, then clips r to h - d so the pair
 * stays feasible. Clipping (rather than resampling) keeps the marginal
 * distribution of d uniform. The stride is set to h - d - r when that is
 * positive, else 1; training only consumes the weights, so the stride value
 * is a placeholder there.
 */
inline GuidanceSchedule sample_schedule(Rng& rng, IntRange d_range, IntRange r_range,
                                        int h, int n_steps) {
    d_range.validate();
    r_range.validate();
    if (d_range.hi > h) throw std::invalid_argument("sample_schedule: d_range exceeds horizon");

    ScheduleParams p;
    p.h = h;
    p.d = draw_int(rng, d_range.lo, d_range.hi);
    p.r = std::min(draw_int(rng, r_range.lo, r_range.hi), h - p.d);
    p.s = std::max(1, h - p.d - p.r);
    return build_schedule(p, n_steps);
}

// All-zero weights: plain flow matching, no reference pull.
inline GuidanceSchedule zero_schedule(int h, int n_steps) {
    ScheduleParams p;
    p.h = h;
    p.d = 0;
    p.r = 0;
    p.s = std::max(1, h);
    return build_schedule(p, n_steps);
}

}  // namespace legato
