#pragma once

#include <stdexcept>

#include "legato/chunk.hpp"
#include "legato/schedule.hpp"

namespace legato {

namespace detail {

inline void require_time(double t, const char* where) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error(std::string(where) + ": t must be in [0, 1]");
}

inline void require_horizon(const Chunk& c, const GuidanceSchedule& g, const char* where) {
    if (c.rows() != g.horizon())
        throw std::invalid_argument(std::string(where) + ": chunk rows do not match schedule horizon");
}

}  // namespace detail

// Straight interpolation from noise to data: (1 - t) * eps + t * a.
inline Chunk fm_path(const Chunk& eps, const Chunk& a, double t) {
    require_same_shape(eps, a, "fm_path");
    detail::require_time(t, "fm_path");
    Chunk out(eps.rows(), eps.cols());
    for (std::size_t i = 0; i < eps.size(); ++i)
        out.data()[i] = (1.0 - t) * eps.data()[i] + t * a.data()[i];
    return out;
}

// Effective start point: rows with weight w are moved toward the data,
// (1 - w) * eps + w * a, with w broadcast across action dimensions.
inline Chunk mix_noise(const Chunk& eps, const Chunk& a, const GuidanceSchedule& g) {
    require_same_shape(eps, a, "mix_noise");
    detail::require_horizon(eps, g, "mix_noise");
    Chunk out(eps.rows(), eps.cols());
    for (std::size_t i = 0; i < eps.rows(); ++i) {
        const double w = g.omega[i];
        for (std::size_t j = 0; j < eps.cols(); ++j)
            out(i, j) = (1.0 - w) * eps(i, j) + w * a(i, j);
    }
    return out;
}

// Interpolation from the mixed start point: (1 - t) * mix_noise + t * a.
// With all-zero weights this reduces to fm_path; with all-one weights it is
// constantly a.
inline Chunk legato_path(const Chunk& eps, const Chunk& a, const GuidanceSchedule& g, double t) {
    detail::require_time(t, "legato_path");
    return fm_path(mix_noise(eps, a, g), a, t);
}

// Closed-form regression target (1 - kappa * (1 - t)) * (a - eps), defined
// for every weight including 1. Never divides by (1 - omega).
inline Chunk target_velocity(const Chunk& a, const Chunk& eps, const GuidanceSchedule& g, double t) {
    require_same_shape(eps, a, "target_velocity");
    detail::require_horizon(a, g, "target_velocity");
    detail::require_time(t, "target_velocity");
    Chunk out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double c = 1.0 - g.kappa[i] * (1.0 - t);
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(i, j) = c * (a(i, j) - eps(i, j));
    }
    return out;
}

// Row-wise convex pull toward the reference: (1 - w) * x + w * a_ref.
// Rows with w = 1 come out bit-for-bit equal to the reference row.
inline Chunk guide(const Chunk& x, const Chunk& a_ref, const GuidanceSchedule& g) {
    require_same_shape(x, a_ref, "guide");
    detail::require_horizon(x, g, "guide");
    Chunk out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double w = g.omega[i];
        if (w == 1.0) {
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = a_ref(i, j);
        } else {
            for (std::size_t j = 0; j < x.cols(); ++j)
                out(i, j) = (1.0 - w) * x(i, j) + w * a_ref(i, j);
        }
    }
    return out;
}

// Guided denoising state on the uniform grid t_k = k / n_steps. y is the
// state after the guide of step k.
struct DenoiseState {
    Chunk y;
    int k = 0;
    double t = 0.0;
};

inline DenoiseState make_denoise_state(const Chunk& eps, const Chunk& a_ref,
                                       const GuidanceSchedule& g) {
    DenoiseState s;
    s.y = guide(eps, a_ref, g);
    s.k = 0;
    s.t = 0.0;
    return s;
}

// One transport-then-guide step: x_next = y + delta_t * velocity, then pull
// x_next toward the reference. The guide is the last operation, so rows with
// weight 1 equal the reference after every step.
inline DenoiseState guided_step(const DenoiseState& state, const Chunk& velocity,
                                const Chunk& a_ref, const GuidanceSchedule& g) {
    require_same_shape(state.y, velocity, "guided_step");
    detail::require_horizon(state.y, g, "guided_step");
    if (state.k >= g.n_steps)
        throw std::domain_error("guided_step: integration already at t = 1");

    DenoiseState next;
    Chunk x(state.y.rows(), state.y.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data()[i] = state.y.data()[i] + g.delta_t * velocity.data()[i];
    next.y = guide(x, a_ref, g);
    next.k = state.k + 1;
    next.t = static_cast<double>(next.k) / static_cast<double>(g.n_steps);
    return next;
}

// Integrates the closed-form target with the data itself as reference.
// The recurrence telescopes along the interpolation path, so the result is
// a up to floating-point rounding, for any weights in [0, 1].
inline Chunk integrate_exact(const Chunk& eps, const Chunk& a, const GuidanceSchedule& g) {
    DenoiseState s = make_denoise_state(eps, a, g);
    for (int k = 0; k < g.n_steps; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(g.n_steps);
        s = guided_step(s, target_velocity(a, eps, g, t), a, g);
    }
    return s.y;
}

}  // namespace legato
