#pragma once

// Prescribed relaxation functions g(t) and their power spectra f^2(omega).
//
// Convention: f^2(omega) = \int g(t) cos(omega t) dt over the whole line, so that
// g(t) = (1 / 2 pi) \int f^2(omega) cos(omega t) d omega.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relaxlab/errors.hpp"

namespace relaxlab {

enum class TargetKind { Exponential, DampedOscillation, Linear, Gaussian, Recurrence, Tabulated };

inline std::string_view to_string(TargetKind k) {
    switch (k) {
        case TargetKind::Exponential: return "exponential";
        case TargetKind::DampedOscillation: return "damped_oscillation";
        case TargetKind::Linear: return "linear";
        case TargetKind::Gaussian: return "gaussian";
        case TargetKind::Recurrence: return "recurrence";
        case TargetKind::Tabulated: return "tabulated";
    }
    return "unknown";
}

inline TargetKind target_kind_from_string(std::string_view name) {
    if (name == "exponential" || name == "exp") return TargetKind::Exponential;
    if (name == "damped_oscillation" || name == "oscillation" || name == "osc") return TargetKind::DampedOscillation;
    if (name == "linear" || name == "lin") return TargetKind::Linear;
    if (name == "gaussian" || name == "gauss") return TargetKind::Gaussian;
    if (name == "recurrence") return TargetKind::Recurrence;
    if (name == "tabulated") return TargetKind::Tabulated;
    throw ValidationError("unknown target '" + std::string(name) + "'");
}

struct TargetDynamics {
    TargetKind kind = TargetKind::Exponential;
    double tau = 15.0;              // common half-decay scale
    double recurrence_time = 0.0;   // Recurrence only
    std::vector<std::pair<double, double>> table;  // Tabulated only, (t, g) with t ascending from 0

    static TargetDynamics exponential(double tau) { return {TargetKind::Exponential, tau, 0.0, {}}; }
    static TargetDynamics damped_oscillation(double tau) { return {TargetKind::DampedOscillation, tau, 0.0, {}}; }
    static TargetDynamics linear(double tau) { return {TargetKind::Linear, tau, 0.0, {}}; }
    static TargetDynamics gaussian(double tau) { return {TargetKind::Gaussian, tau, 0.0, {}}; }
    static TargetDynamics recurrence(double tau, double recurrence_time) {
        return {TargetKind::Recurrence, tau, recurrence_time, {}};
    }
    static TargetDynamics tabulated(std::vector<std::pair<double, double>> table) {
        return {TargetKind::Tabulated, 1.0, 0.0, std::move(table)};
    }

    bool is_closed_form() const {
        return kind == TargetKind::Exponential || kind == TargetKind::DampedOscillation ||
               kind == TargetKind::Linear || kind == TargetKind::Gaussian;
    }

    std::string name() const { return std::string(to_string(kind)); }

    void validate() const {
        if (kind == TargetKind::Tabulated) {
            if (table.size() < 2) throw ValidationError("tabulated target needs at least two samples");
            if (table.front().first != 0.0) throw ValidationError("tabulated target must start at t = 0");
            if (std::abs(table.front().second - 1.0) > 1e-12) throw ValidationError("tabulated target must satisfy g(0) = 1");
            for (std::size_t i = 1; i < table.size(); ++i) {
                if (!(table[i].first > table[i - 1].first)) throw ValidationError("tabulated times must increase strictly");
                if (!std::isfinite(table[i].second)) throw ValidationError("tabulated values must be finite");
            }
            return;
        }
        if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("target tau must be positive");
        if (kind == TargetKind::Recurrence && !(recurrence_time >= 3.0 * tau))
            throw ValidationError("recurrence target requires recurrence_time >= 3 tau");
    }
};

namespace detail {

inline double tabulated_value(const std::vector<std::pair<double, double>>& table, double t) {
    const double at = std::abs(t);
    if (at > table.back().first) throw RangeError("tabulated target evaluated outside its table range");
    auto hi = std::upper_bound(table.begin(), table.end(), at,
                               [](double x, const std::pair<double, double>& p) { return x < p.first; });
    if (hi == table.end()) return table.back().second;
    auto lo = hi - 1;
    const double w = (at - lo->first) / (hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
}

}  // namespace detail

/// g(t). All variants are even in t; Recurrence is the even extension of its t > 0 form.
inline double evaluate_target(const TargetDynamics& target, double t) {
    if (!std::isfinite(t)) throw DomainError("evaluate_target: non-finite time");
    const double tau = target.tau;
    const double at = std::abs(t);
    switch (target.kind) {
        case TargetKind::Exponential:
            return std::exp(-std::numbers::ln2 / tau * at);
        case TargetKind::DampedOscillation:
            return std::cos(2.0 * std::numbers::pi / tau * at) * std::exp(-at / (2.0 * tau));
        case TargetKind::Linear:
            return at <= 2.0 * tau ? 1.0 - at / (2.0 * tau) : 0.0;
        case TargetKind::Gaussian:
            return std::exp(-std::numbers::ln2 / (tau * tau) * at * at);
        case TargetKind::Recurrence:
            return std::exp(-at / tau) + 0.5 * std::exp(-std::abs(at - target.recurrence_time) / tau);
        case TargetKind::Tabulated:
            return detail::tabulated_value(target.table, t);
    }
    return 0.0;
}

/// f^2 sampled on a symmetric uniform grid over [-omega_max, omega_max].
struct SpectralEnvelope {
    double omega_max = 30.0;
    std::vector<double> omega_grid;
    std::vector<double> values;
    double clipped_mass = 0.0;       // integral of the removed negative part
    double total_mass = 0.0;         // integral of the clipped envelope
    std::optional<std::string> warning;

    double spacing() const { return 2.0 * omega_max / static_cast<double>(omega_grid.size() - 1); }

    /// Linear interpolation; zero outside the grid.
    double at(double omega) const {
        if (!(std::abs(omega) <= omega_max)) return 0.0;
        const double x = (omega + omega_max) / spacing();
        const auto i = static_cast<std::size_t>(x);
        if (i + 1 >= values.size()) return values.back();
        const double w = x - static_cast<double>(i);
        return values[i] + w * (values[i + 1] - values[i]);
    }

    double peak() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
};

namespace detail {

inline double closed_form_envelope(const TargetDynamics& target, double w) {
    const double tau = target.tau;
    switch (target.kind) {
        case TargetKind::Exponential: {
            const double lam = std::numbers::ln2 / tau;
            return 2.0 * lam / (lam * lam + w * w);
        }
        case TargetKind::DampedOscillation: {
            const double gam = 1.0 / (2.0 * tau);
            const double w0 = 2.0 * std::numbers::pi / tau;
            return gam / (gam * gam + (w - w0) * (w - w0)) + gam / (gam * gam + (w + w0) * (w + w0));
        }
        case TargetKind::Linear: {
            const double x = w * tau;
            const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
            return 2.0 * tau * sinc * sinc;
        }
        case TargetKind::Gaussian: {
            const double c = std::numbers::ln2 / (tau * tau);
            return std::sqrt(std::numbers::pi / c) * std::exp(-w * w / (4.0 * c));
        }
        default: return 0.0;
    }
}

/// \int_0^L g_lin(t) cos(omega t) dt for the piecewise-linear interpolant of samples
/// g_k = g(k h). Exact for the interpolant, so high frequencies do not alias.
inline double linear_cosine_integral(const std::vector<double>& g, double h, double omega) {
    using cplx = std::complex<double>;
    const double theta = omega * h;
    cplx c0, c1;  // \int_0^1 (1-u) e^{i theta u} du, \int_0^1 u e^{i theta u} du
    if (std::abs(theta) < 1e-2) {
        const cplx it(0.0, theta);
        cplx term(1.0, 0.0), s01(0.0, 0.0), s1(0.0, 0.0);
        double fact = 1.0;
        for (int k = 0; k < 8; ++k) {
            if (k > 0) { term *= it; fact *= k; }
            s01 += term / (fact * (k + 1));
            s1 += term / (fact * (k + 2));
        }
        c1 = s1;
        c0 = s01 - s1;
    } else {
        const cplx e = std::exp(cplx(0.0, theta));
        const cplx it(0.0, theta);
        const cplx s01 = (e - 1.0) / it;
        c1 = e / it + (e - 1.0) / (theta * theta);
        c0 = s01 - c1;
    }
    const cplx step = std::exp(cplx(0.0, theta));
    cplx phase(1.0, 0.0);
    cplx acc(0.0, 0.0);
    for (std::size_t k = 0; k + 1 < g.size(); ++k) {
        acc += phase * (g[k] * c0 + g[k + 1] * c1);
        phase *= step;
        if ((k & 255u) == 255u) phase /= std::abs(phase);
    }
    return h * acc.real();
}

}  // namespace detail

/// Power spectrum of the even extension of g. Closed forms for the four reference
/// shapes; recurrence and tabulated targets use an exact piecewise-linear cosine
/// transform with negative values clipped to zero.
inline SpectralEnvelope envelope_for(const TargetDynamics& target, double omega_max = 30.0,
                                     std::size_t n_bins = 8192) {
    target.validate();
    if (!(omega_max > 0.0)) throw ValidationError("envelope_for: omega_max must be positive");
    if (n_bins < 64) throw ValidationError("envelope_for: need at least 64 bins");

    SpectralEnvelope env;
    env.omega_max = omega_max;
    env.omega_grid.resize(n_bins);
    env.values.assign(n_bins, 0.0);
    const double dw = 2.0 * omega_max / static_cast<double>(n_bins - 1);
    for (std::size_t k = 0; k < n_bins; ++k) env.omega_grid[k] = -omega_max + dw * static_cast<double>(k);

    std::vector<double> samples;
    double h = 0.0;
    if (!target.is_closed_form()) {
        double t_end = 0.0;
        if (target.kind == TargetKind::Recurrence) {
            // T lands on a grid point so the cusp of the revival is resolved exactly.
            t_end = target.recurrence_time + 40.0 * target.tau;
            const double h_max = std::min(target.tau / 200.0, std::numbers::pi / (8.0 * omega_max));
            const double steps_to_t = std::ceil(target.recurrence_time / h_max);
            h = target.recurrence_time / steps_to_t;
        } else {
            t_end = target.table.back().first;
            const double h_max = std::numbers::pi / (8.0 * omega_max);
            std::vector<double> knots;
            for (auto& p : target.table) knots.push_back(p.first);
            double min_gap = t_end;
            for (std::size_t i = 1; i < knots.size(); ++i) min_gap = std::min(min_gap, knots[i] - knots[i - 1]);
            h = std::min(h_max, min_gap / 4.0);
        }
        const auto n = static_cast<std::size_t>(std::ceil(t_end / h)) + 1;
        samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = std::min(h * static_cast<double>(i), target.kind == TargetKind::Tabulated ? t_end : 1e300);
            samples[i] = evaluate_target(target, t);
        }
    }

    // Compute the non-negative half and mirror it so the grid is exactly even.
    double raw_min = 0.0;
    for (std::size_t k = n_bins / 2; k < n_bins; ++k) {
        const double w = std::abs(env.omega_grid[k]);
        const double v = target.is_closed_form() ? detail::closed_form_envelope(target, w)
                                                 : 2.0 * detail::linear_cosine_integral(samples, h, w);
        env.values[k] = v;
        env.values[n_bins - 1 - k] = v;
        raw_min = std::min(raw_min, v);
    }

    double neg = 0.0, pos = 0.0;
    for (double& v : env.values) {
        if (v < 0.0) {
            neg += -v;
            v = 0.0;
        }
        pos += v;
    }
    env.clipped_mass = neg * dw;
    env.total_mass = pos * dw;
    const double tol_clip = 1e-3 * env.peak();
    if (raw_min < -tol_clip) {
        env.warning = "negative spectral values down to " + std::to_string(raw_min) +
                      " clipped; target is not positive definite";
    }
    return env;
}

/// (1/2pi) \int f^2(omega) cos(omega t) d omega by the trapezoid rule on the envelope grid.
inline double inverse_cosine_transform(const SpectralEnvelope& env, double t) {
    const double dw = env.spacing();
    double acc = 0.0;
    const std::size_t n = env.values.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
        acc += w * env.values[k] * std::cos(env.omega_grid[k] * t);
    }
    return acc * dw / (2.0 * std::numbers::pi);
}

}  // namespace relaxlab
