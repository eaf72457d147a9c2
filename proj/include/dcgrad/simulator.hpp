#pragma once

// =============================================================================
// Transient simulation of the grid dynamics.
//
// Explicit adaptive Runge-Kutta (Dormand-Prince 4/5 pair) over the selected
// droop variant, with:
//   - piecewise-constant schedules for the master voltage, islanding and
//     terminal parameter overrides (applied at exact times),
//   - local under-voltage protection: a terminal trips when its own voltage
//     falls below its v_min threshold, reconnects after the voltage recovers
//     past a hysteresis level and a minimum off-time has elapsed,
//   - state-event localization by bisection on the step (1 ns resolution),
//   - divergence detection when a voltage leaves [v_min_hard, v_max] or the
//     step size underflows.
//
// A disconnected terminal keeps its capacitor node: only p and k are zeroed,
// so the node voltage keeps evolving with the network.
// =============================================================================

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dcgrad/equilibrium.hpp"
#include "dcgrad/errors.hpp"
#include "dcgrad/potential.hpp"

namespace dcgrad {

struct ProtectionConfig {
    bool enabled = false;
    Eigen::VectorXd v_min;      // per-terminal trip thresholds; 0 disables a terminal
    double reconnect_v = 0.9;   // hysteresis: reconnect once own voltage >= this
    double lockout = 1e-3;      // minimum off-time in seconds
};

struct V0Step {
    double t = 0.0;
    double v0 = 1.0;
};

struct IslandStep {
    double t = 0.0;
    bool open = true;
};

struct OverrideStep {
    double t = 0.0;
    int node = 0; // terminal node id
    std::optional<double> p;
    std::optional<double> k;
};

struct SagSpec {
    double v0_low = 0.2;
    double t_start = 0.0;
    double t_end = 0.0;
};

struct Scenario {
    double t_end = 0.1;
    Eigen::VectorXd initial_v; // empty -> all ones
    std::vector<V0Step> v0_schedule;
    std::vector<IslandStep> island_schedule;
    std::vector<OverrideStep> overrides;
    ProtectionConfig protection;
    std::optional<SagSpec> sag; // convenience block consumed by the CLI
};

struct IntegratorConfig {
    double rtol = 1e-6;
    double atol = 1e-9;
    double max_step = std::numeric_limits<double>::infinity();
    double v_max = 1e3;      // divergence ceiling, pu
    double v_min_hard = 1e-6; // divergence floor, pu
};

enum class EventKind { Disconnect, Reconnect, SagStart, SagEnd, Island, Diverged };

inline const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::Disconnect: return "disconnect";
        case EventKind::Reconnect: return "reconnect";
        case EventKind::SagStart: return "sag-start";
        case EventKind::SagEnd: return "sag-end";
        case EventKind::Island: return "island";
        case EventKind::Diverged: return "diverged";
    }
    return "?";
}

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::Diverged;
    int node = -1;                                          // terminal node id, -1 if n/a
    double value = std::numeric_limits<double>::quiet_NaN(); // v0 for sags, 1/0 for island open/close
};

struct Sample {
    double t = 0.0;
    Eigen::VectorXd v;
    double w = 0.0;    // potential of the active model
    double lyap = 0.0; // w minus the reference equilibrium potential (NaN if no reference)
    std::vector<std::uint8_t> connected;
};

struct Trajectory {
    std::vector<Sample> samples;
    std::vector<Event> events;
    std::vector<double> break_times; // instants where the active model changed
    bool diverged = false;
    DroopVariant variant = DroopVariant::GradientConsistent;
    double w_ref = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Dormand-Prince 5(4) tableau
struct Dopri5 {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                            e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;
};

struct RkStep {
    Eigen::VectorXd y5;   // 5th-order solution
    double err = 0.0;     // scaled error estimate (accept when <= 1)
};

inline RkStep dopri5_step(const GridModel& model, DroopVariant variant, const Eigen::VectorXd& y,
                          double h, const IntegratorConfig& cfg) {
    using T = Dopri5;
    const auto f = [&](const Eigen::VectorXd& state) {
        return dynamics_rhs_guarded(model, state, variant);
    };
    const Eigen::VectorXd k1 = f(y);
    const Eigen::VectorXd k2 = f(y + h * (T::a21 * k1));
    const Eigen::VectorXd k3 = f(y + h * (T::a31 * k1 + T::a32 * k2));
    const Eigen::VectorXd k4 = f(y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
    const Eigen::VectorXd k5 = f(y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
    const Eigen::VectorXd k6 =
        f(y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5));

    RkStep step;
    step.y5 = y + h * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
    const Eigen::VectorXd k7 = f(step.y5);
    const Eigen::VectorXd y4 =
        y + h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);

    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double scale = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(step.y5[i]));
        const double r = (step.y5[i] - y4[i]) / scale;
        acc += r * r;
    }
    step.err = std::sqrt(acc / static_cast<double>(y.size()));
    return step;
}

} // namespace detail

/// Integrates the scenario. The reference equilibrium (used only to report
/// the Lyapunov column V = W - W(v_ref)) may be passed in; otherwise a solve
/// of the base model is attempted and V is NaN if it fails.
inline Trajectory simulate(const GridModel& model, const Scenario& scenario, DroopVariant variant,
                           const IntegratorConfig& cfg = {},
                           std::optional<Eigen::VectorXd> v_ref = std::nullopt) {
    const Eigen::Index n = model.n();
    if (!(scenario.t_end > 0.0)) throw ValidationError("scenario: t_end must be > 0");
    if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0))
        throw ValidationError("integrator: tolerances must be > 0");
    if (!(cfg.max_step > 0.0)) throw ValidationError("integrator: max_step must be > 0");
    if (!(cfg.v_max > cfg.v_min_hard) || !(cfg.v_min_hard >= 0.0))
        throw ValidationError("integrator: require 0 <= v_min_hard < v_max");

    auto check_sorted = [](const auto& schedule, const char* name) {
        for (std::size_t i = 0; i + 1 < schedule.size(); ++i)
            if (schedule[i + 1].t < schedule[i].t)
                throw ValidationError(std::string("scenario: ") + name + " is not time-sorted");
        for (const auto& entry : schedule)
            if (!(entry.t >= 0.0) || !std::isfinite(entry.t))
                throw ValidationError(std::string("scenario: ") + name + " has an invalid time");
    };
    check_sorted(scenario.v0_schedule, "v0_schedule");
    check_sorted(scenario.island_schedule, "island_schedule");
    check_sorted(scenario.overrides, "overrides");

    auto index_of_node = [&](int node) -> Eigen::Index {
        for (std::size_t i = 0; i < model.terminals.size(); ++i)
            if (model.terminals[i].node == node) return static_cast<Eigen::Index>(i);
        throw ValidationError("scenario references unknown terminal node " + std::to_string(node));
    };
    for (const OverrideStep& ov : scenario.overrides) index_of_node(ov.node);

    const ProtectionConfig& prot = scenario.protection;
    if (prot.enabled) {
        if (prot.v_min.size() != n)
            throw ValidationError("protection: v_min must have one entry per terminal");
        if (!(prot.reconnect_v > 0.0) || !(prot.lockout >= 0.0))
            throw ValidationError("protection: bad hysteresis or lockout");
    }

    Eigen::VectorXd v = scenario.initial_v.size() ? scenario.initial_v : Eigen::VectorXd::Ones(n);
    if (v.size() != n) throw ValidationError("scenario: initial state size mismatch");
    detail::require_positive(v);

    // Lyapunov reference
    double w_ref = std::numeric_limits<double>::quiet_NaN();
    if (v_ref && v_ref->size() == n) {
        w_ref = potential_w(model, *v_ref);
    } else if (!v_ref) {
        try {
            w_ref = solve_equilibrium(model).w_at_eq;
        } catch (const std::exception&) {
            // no reference; V column stays NaN
        }
    }

    // active configuration
    GridModel active = model;
    Eigen::VectorXd intended_p = model.p;
    Eigen::VectorXd intended_k = model.k;
    std::vector<std::uint8_t> connected(static_cast<std::size_t>(n), 1);
    Eigen::VectorXd off_since = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());

    Trajectory traj;
    traj.variant = variant;
    traj.w_ref = w_ref;

    auto push_sample = [&](double t_now, const Eigen::VectorXd& state) {
        Sample s;
        s.t = t_now;
        s.v = state;
        bool positive = true;
        for (Eigen::Index i = 0; i < n; ++i) positive = positive && state[i] > 0.0;
        s.w = positive ? potential_w(active, state) : std::numeric_limits<double>::quiet_NaN();
        s.lyap = s.w - w_ref;
        s.connected = connected;
        traj.samples.push_back(std::move(s));
    };

    std::size_t iv0 = 0, iisl = 0, iov = 0;
    auto apply_schedules_at = [&](double t_now) {
        while (iv0 < scenario.v0_schedule.size() && scenario.v0_schedule[iv0].t <= t_now) {
            const double next_v0 = scenario.v0_schedule[iv0].v0;
            if (!(next_v0 >= 0.0) || !std::isfinite(next_v0))
                throw ValidationError("scenario: v0 values must be finite and non-negative");
            traj.events.push_back({t_now,
                                   next_v0 < active.v0 ? EventKind::SagStart : EventKind::SagEnd,
                                   -1, next_v0});
            traj.break_times.push_back(t_now);
            active.v0 = next_v0;
            ++iv0;
        }
        while (iisl < scenario.island_schedule.size() && scenario.island_schedule[iisl].t <= t_now) {
            const bool open = scenario.island_schedule[iisl].open;
            active.island = open || model.island;
            active.g0 = active.island ? Eigen::VectorXd::Zero(n).eval() : model.g0;
            traj.events.push_back({t_now, EventKind::Island, -1, open ? 1.0 : 0.0});
            traj.break_times.push_back(t_now);
            ++iisl;
        }
        while (iov < scenario.overrides.size() && scenario.overrides[iov].t <= t_now) {
            const OverrideStep& ov = scenario.overrides[iov];
            const Eigen::Index idx = index_of_node(ov.node);
            if (ov.p) intended_p[idx] = *ov.p;
            if (ov.k) {
                if (*ov.k < 0.0) throw ValidationError("scenario: droop override must be >= 0");
                intended_k[idx] = *ov.k;
            }
            if (connected[static_cast<std::size_t>(idx)]) {
                active.p[idx] = intended_p[idx];
                active.k[idx] = intended_k[idx];
            }
            traj.break_times.push_back(t_now);
            ++iov;
        }
    };

    // protection conditions evaluated at a candidate state; lockout arming is
    // respected because arming instants are integration stop times
    auto any_trip = [&](double /*t_now*/, const Eigen::VectorXd& state) {
        if (!prot.enabled) return false;
        for (Eigen::Index i = 0; i < n; ++i)
            if (connected[static_cast<std::size_t>(i)] && prot.v_min[i] > 0.0 &&
                state[i] < prot.v_min[i])
                return true;
        return false;
    };
    auto any_reconnect = [&](double t_now, const Eigen::VectorXd& state) {
        if (!prot.enabled) return false;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!connected[static_cast<std::size_t>(i)] &&
                t_now >= off_since[i] + prot.lockout && state[i] >= prot.reconnect_v)
                return true;
        return false;
    };
    auto apply_state_events = [&](double t_now, const Eigen::VectorXd& state) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                if (prot.enabled && connected[ui] && prot.v_min[i] > 0.0 &&
                    state[i] < prot.v_min[i]) {
                    connected[ui] = 0;
                    off_since[i] = t_now;
                    active.p[i] = 0.0;
                    active.k[i] = 0.0;
                    traj.events.push_back(
                        {t_now, EventKind::Disconnect, model.terminals[ui].node, state[i]});
                    traj.break_times.push_back(t_now);
                    changed = true;
                } else if (prot.enabled && !connected[ui] && t_now >= off_since[i] + prot.lockout &&
                           state[i] >= prot.reconnect_v) {
                    connected[ui] = 1;
                    active.p[i] = intended_p[i];
                    active.k[i] = intended_k[i];
                    traj.events.push_back(
                        {t_now, EventKind::Reconnect, model.terminals[ui].node, state[i]});
                    traj.break_times.push_back(t_now);
                    changed = true;
                }
            }
        }
    };

    auto diverged_state = [&](const Eigen::VectorXd& state) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (!std::isfinite(state[i]) || state[i] > cfg.v_max || state[i] < cfg.v_min_hard)
                return true;
        return false;
    };

    // static stop times: schedule entries and the horizon
    std::vector<double> stops;
    for (const auto& s : scenario.v0_schedule) stops.push_back(s.t);
    for (const auto& s : scenario.island_schedule) stops.push_back(s.t);
    for (const auto& s : scenario.overrides) stops.push_back(s.t);
    stops.push_back(scenario.t_end);
    std::sort(stops.begin(), stops.end());

    constexpr double event_resolution = 1e-9; // seconds
    constexpr double h_floor = 1e-14;

    double t = 0.0;
    apply_schedules_at(0.0);
    apply_state_events(0.0, v);
    push_sample(0.0, v);
    if (diverged_state(v)) {
        traj.events.push_back({0.0, EventKind::Diverged, -1});
        traj.diverged = true;
        return traj;
    }

    double h = std::min({cfg.max_step, scenario.t_end * 1e-3});
    bool last_rejected = false;

    while (t < scenario.t_end) {
        // next stop: first static stop after t, tightened by lockout expiries
        double next_stop = scenario.t_end;
        for (double s : stops)
            if (s > t + 1e-15) {
                next_stop = std::min(next_stop, s);
                break;
            }
        if (prot.enabled)
            for (Eigen::Index i = 0; i < n; ++i)
                if (!connected[static_cast<std::size_t>(i)]) {
                    const double arm = off_since[i] + prot.lockout;
                    if (arm > t + 1e-15) next_stop = std::min(next_stop, arm);
                }

        while (t < next_stop - 1e-15) {
            double h_try = std::min(h, next_stop - t);
            if (h_try < h_floor) {
                traj.events.push_back({t, EventKind::Diverged, -1});
                traj.diverged = true;
                return traj;
            }
            detail::RkStep step = detail::dopri5_step(active, variant, v, h_try, cfg);
            if (!std::isfinite(step.err) || step.err > 1.0) {
                const double factor = std::isfinite(step.err)
                                          ? std::max(0.2, 0.9 * std::pow(step.err, -0.2))
                                          : 0.2;
                h = h_try * std::min(factor, 1.0);
                last_rejected = true;
                continue;
            }

            // locate the earliest protection crossing inside the accepted step
            const bool crossing =
                any_trip(t + h_try, step.y5) || any_reconnect(t + h_try, step.y5);
            if (crossing) {
                double lo = 0.0, hi = h_try;
                while (hi - lo > event_resolution) {
                    const double mid = 0.5 * (lo + hi);
                    const Eigen::VectorXd probe =
                        detail::dopri5_step(active, variant, v, mid, cfg).y5;
                    if (any_trip(t + mid, probe) || any_reconnect(t + mid, probe))
                        hi = mid;
                    else
                        lo = mid;
                }
                v = detail::dopri5_step(active, variant, v, hi, cfg).y5;
                t += hi;
                apply_state_events(t, v);
                push_sample(t, v);
                if (diverged_state(v)) {
                    traj.events.push_back({t, EventKind::Diverged, -1});
                    traj.diverged = true;
                    return traj;
                }
                continue; // keep h unchanged
            }

            t += h_try;
            v = step.y5;
            push_sample(t, v);
            if (diverged_state(v)) {
                traj.events.push_back({t, EventKind::Diverged, -1});
                traj.diverged = true;
                return traj;
            }
            double factor = 0.9 * std::pow(std::max(step.err, 1e-10), -0.2);
            factor = std::clamp(factor, 0.2, 5.0);
            if (last_rejected) factor = std::min(factor, 1.0);
            last_rejected = false;
            h = std::min(h_try * factor, cfg.max_step);
        }
        t = next_stop;
        apply_schedules_at(t);
        apply_state_events(t, v);
    }
    return traj;
}

struct LyapunovReport {
    bool monotone = true;
    double max_increase = 0.0;
    int checked_pairs = 0;
};

/// Checks that the Lyapunov value is non-increasing between consecutive
/// samples on event-free stretches. Pairs touching an event time are skipped
/// (the active model, and with it W, changes there). Meaningful for the
/// gradient-consistent variant; advisory otherwise.
inline LyapunovReport lyapunov_monitor(const Trajectory& traj) {
    LyapunovReport report;
    if (traj.samples.size() < 2) return report;
    const double v0_scale = std::isfinite(traj.samples.front().lyap)
                                ? std::abs(traj.samples.front().lyap)
                                : std::abs(traj.samples.front().w);
    const double tol = 1e-8 * std::max(1.0, v0_scale);
    double max_increase = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < traj.samples.size(); ++i) {
        const double t0 = traj.samples[i].t;
        const double t1 = traj.samples[i + 1].t;
        bool skip = false;
        for (double tb : traj.break_times)
            if (tb >= t0 && tb <= t1) {
                skip = true;
                break;
            }
        if (skip) continue;
        const double increase = traj.samples[i + 1].w - traj.samples[i].w;
        if (!std::isfinite(increase)) continue;
        max_increase = std::max(max_increase, increase);
        ++report.checked_pairs;
        if (increase > tol) report.monotone = false;
    }
    report.max_increase = report.checked_pairs ? max_increase : 0.0;
    return report;
}

struct ProtectionOutcome {
    Trajectory unprotected;
    Trajectory protected_run;
    double recovery_error = std::numeric_limits<double>::quiet_NaN();
};

/// Runs the sag scenario twice, with protection disabled and enabled, from
/// the pre-sag equilibrium. Trip thresholds are the per-node v_min of the
/// attraction estimate (which is independent of v0, so it remains valid
/// throughout the sag). recovery_error is ||v(t_end) - v_eq||_inf of the
/// protected run.
inline ProtectionOutcome run_protection_scenario(const GridModel& model,
                                                 const EquilibriumResult& eq,
                                                 const RoaEstimate& roa, const SagSpec& sag,
                                                 double t_horizon,
                                                 DroopVariant variant = DroopVariant::GradientConsistent,
                                                 const IntegratorConfig& cfg = {},
                                                 double reconnect_v = 0.9, double lockout = 1e-3) {
    if (!(sag.t_start >= 0.0) || !(sag.t_end >= sag.t_start))
        throw ValidationError("sag: need 0 <= t_start <= t_end");
    if (!(t_horizon >= sag.t_end)) throw ValidationError("sag: horizon ends before the sag does");

    Scenario scenario;
    scenario.t_end = t_horizon;
    scenario.initial_v = eq.v_eq;
    scenario.v0_schedule = {{sag.t_start, sag.v0_low}, {sag.t_end, model.v0}};

    ProtectionOutcome outcome;
    outcome.unprotected = simulate(model, scenario, variant, cfg, eq.v_eq);

    scenario.protection.enabled = true;
    scenario.protection.v_min = roa.v_min;
    scenario.protection.reconnect_v = reconnect_v;
    scenario.protection.lockout = lockout;
    outcome.protected_run = simulate(model, scenario, variant, cfg, eq.v_eq);

    if (!outcome.protected_run.diverged && !outcome.protected_run.samples.empty())
        outcome.recovery_error =
            (outcome.protected_run.samples.back().v - eq.v_eq).lpNorm<Eigen::Infinity>();
    return outcome;
}

} // namespace dcgrad
