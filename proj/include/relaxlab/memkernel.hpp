#pragma once

// Memory-kernel model of relaxation:
//
//   da/dt = -lambda0 a(t) - \int_0^t K(t - s) a(s) ds
//
// The local term is integrated exactly (exponential time differencing) and the
// history integral I(t) is interpolated linearly across a step. I itself uses the
// product midpoint rule: K is sampled at half-step lags (m + 1/2) dt and paired with
// the step averages of a. kernel_from_dynamics inverts exactly that recursion, so a
// round trip reproduces the input up to rounding. The midpoint pairing matters: with
// trapezoid weights the inverse has an undamped alternating mode that swamps K.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "relaxlab/errors.hpp"
#include "relaxlab/time_series.hpp"

namespace relaxlab {

struct MemoryKernel {
    double dt = 0.1;
    std::vector<double> values;      // K((m + 1/2) dt), 1/time^2
    double local_coefficient = 0.0;  // lambda0: adds -lambda0 a(t) to da/dt

    double tau(std::size_t m) const { return dt * (static_cast<double>(m) + 0.5); }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("MemoryKernel: dt must be positive");
        if (values.empty()) throw ValidationError("MemoryKernel: no kernel samples");
        for (double v : values)
            if (!std::isfinite(v)) throw NumericError("MemoryKernel: non-finite kernel value");
        if (!std::isfinite(local_coefficient)) throw NumericError("MemoryKernel: non-finite local coefficient");
    }
};

struct HeuristicParams {
    double alpha = 0.0;  // kernel damping rate
    double beta = 0.0;   // weight of the added local damping

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("HeuristicParams: alpha must be >= 0");
        if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("HeuristicParams: beta must lie in [0, 1]");
    }
};

namespace detail {

/// Step weights for one interval of length h with local rate L = -lambda0.
struct EtdWeights {
    double decay;   // e^{Lh}
    double w_old;   // weight of I_n
    double w_new;   // weight of I_{n+1}
};

inline EtdWeights etd_weights(double lambda0, double h) {
    const double z = -lambda0 * h;
    double phi1, phi2;
    if (std::abs(z) < 1e-3) {
        // series keep full precision where the closed forms cancel
        phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
        phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
    } else {
        const double em1 = std::expm1(z);
        phi1 = em1 / z;
        phi2 = (em1 - z) / (z * z);
    }
    return {std::exp(z), h * (phi1 - phi2), h * phi2};
}

}  // namespace detail

/// Solves the memory equation on `grid` with a(0) = a0. The kernel must share the step
/// and hold at least n_steps - 1 samples.
inline TimeSeries dynamics_from_kernel(const MemoryKernel& kernel, double a0, const TimeGrid& grid) {
    kernel.validate();
    grid.validate();
    if (std::abs(kernel.dt - grid.dt) > 1e-12 * grid.dt) throw DomainError("dynamics_from_kernel: kernel and output steps differ");
    if (kernel.values.size() + 1 < grid.n_steps) throw DomainError("dynamics_from_kernel: kernel is shorter than the output grid");

    const double h = grid.dt;
    const auto& k = kernel.values;
    const auto w = detail::etd_weights(kernel.local_coefficient, h);
    const double denom = 1.0 + w.w_new * 0.5 * h * k[0];
    if (!(std::abs(denom) > 1e-300)) throw NumericError("dynamics_from_kernel: singular implicit step");

    std::vector<double> a(grid.n_steps);
    a[0] = a0;
    double i_n = 0.0;
    for (std::size_t n = 0; n + 1 < grid.n_steps; ++n) {
        // I_{n+1} = h sum_{j<=n} K_{n-j} (a_j + a_{j+1}) / 2; the a_{n+1} part is implicit
        double s = 0.5 * k[0] * a[n];
        for (std::size_t j = 0; j < n; ++j) s += k[n - j] * 0.5 * (a[j] + a[j + 1]);
        const double hist = h * s;
        const double next = (w.decay * a[n] - w.w_old * i_n - w.w_new * hist) / denom;
        if (!std::isfinite(next) || std::abs(next) > 1e6)
            throw NumericError("dynamics_from_kernel: unstable at step " + std::to_string(n + 1) + " (t = " +
                               std::to_string(grid.t(n + 1)) + ")");
        a[n + 1] = next;
        i_n = hist + 0.5 * h * k[0] * next;
    }
    return TimeSeries(grid, std::move(a));
}

namespace detail {

/// lambda0 = -d/dt log(a / a0) at t = 0 from a one-sided difference; exact for pure
/// exponentials, whose kernel then vanishes identically. Falls back to a'(0) / a0
/// when a changes sign within the stencil.
inline double initial_rate(const std::vector<double>& a, double h) {
    const std::size_t m = std::min<std::size_t>(a.size(), 3);
    bool positive = true;
    for (std::size_t i = 0; i < m; ++i) positive = positive && a[i] / a[0] > 0.0;
    auto d1 = [&](auto&& f) { return m >= 3 ? (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h) : (f(1) - f(0)) / h; };
    if (positive) return -d1([&](std::size_t i) { return std::log(a[i] / a[0]); });
    return -d1([&](std::size_t i) { return a[i] / a[0]; });
}

}  // namespace detail

/// Kernel whose stepper output reproduces `a` on its grid (n_steps - 1 samples).
inline MemoryKernel kernel_from_dynamics(const TimeSeries& a) {
    a.grid.validate();
    const std::size_t n = a.size();
    const double h = a.grid.dt;
    if (a[0] == 0.0) throw DomainError("kernel_from_dynamics: a(0) = 0");
    const double lead = 0.5 * (a[0] + a[1]);
    if (!(std::abs(lead) * h >= 1e-12 * std::abs(a[0]) && std::abs(lead) * h >= 1e-12))
        throw NumericError("kernel_from_dynamics: first step average too small for the triangular solve");

    MemoryKernel ker;
    ker.dt = h;
    ker.local_coefficient = detail::initial_rate(a.values, h);
    ker.values.assign(n - 1, 0.0);
    const auto w = detail::etd_weights(ker.local_coefficient, h);
    auto& k = ker.values;

    double i_n = 0.0;
    for (std::size_t m = 0; m + 1 < n; ++m) {
        const double i_next = (w.decay * a[m] - w.w_old * i_n - a[m + 1]) / w.w_new;
        double s = 0.0;
        for (std::size_t j = 1; j <= m; ++j) s += k[m - j] * 0.5 * (a[j] + a[j + 1]);
        k[m] = (i_next / h - s) / lead;
        i_n = i_next;
    }
    ker.validate();
    return ker;
}

/// K(tau) e^{-alpha tau} with the local rate raised by beta alpha.
inline MemoryKernel perturb_kernel(const MemoryKernel& kernel, const HeuristicParams& params) {
    params.validate();
    MemoryKernel out = kernel;
    for (std::size_t m = 0; m < out.values.size(); ++m) out.values[m] *= std::exp(-params.alpha * kernel.tau(m));
    out.local_coefficient = kernel.local_coefficient + params.beta * params.alpha;
    return out;
}

inline void require_unit_start(const TimeSeries& a, const char* who) {
    if (!(std::abs(a[0] - 1.0) <= 1e-9)) throw DomainError(std::string(who) + ": dynamics must start at a(0) = 1");
}

/// Heuristic prediction of the perturbed dynamics.
inline TimeSeries predict_perturbed(const TimeSeries& a, const HeuristicParams& params) {
    params.validate();
    require_unit_start(a, "predict_perturbed");
    if (params.alpha == 0.0) return a;
    return dynamics_from_kernel(perturb_kernel(kernel_from_dynamics(a), params), a[0], a.grid);
}

/// Reuses one kernel extraction across many parameter choices.
class KernelPredictor {
public:
    explicit KernelPredictor(const TimeSeries& a) : a_(a), kernel_(kernel_from_dynamics(a)) {
        require_unit_start(a, "KernelPredictor");
    }

    TimeSeries operator()(const HeuristicParams& p) const {
        p.validate();
        if (p.alpha == 0.0) return a_;
        return dynamics_from_kernel(perturb_kernel(kernel_, p), a_[0], a_.grid);
    }

    const MemoryKernel& kernel() const { return kernel_; }
    const TimeSeries& source() const { return a_; }

private:
    TimeSeries a_;
    MemoryKernel kernel_;
};

/// \int_0^t x(s) y(t - s) e^{-alpha (t - s)} ds by the trapezoid rule at every grid point.
inline std::vector<double> damped_convolution(const TimeSeries& x, const TimeSeries& y, double alpha) {
    if (!same_grid(x.grid, y.grid)) throw DomainError("damped_convolution: grids differ");
    const std::size_t n = x.size();
    const double h = x.grid.dt;
    std::vector<double> yd(n);
    for (std::size_t m = 0; m < n; ++m) yd[m] = y[m] * std::exp(-alpha * x.grid.t(m));
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        double s = 0.5 * (x[0] * yd[i] + x[i] * yd[0]);
        for (std::size_t j = 1; j < i; ++j) s += x[j] * yd[i - j];
        c[i] = h * s;
    }
    return c;
}

/// Residual of the narrow-band fixed point a~ = a e^{-alpha t} + alpha (a~ * a e^{-alpha .})(t).
inline std::vector<double> dephasing_residual(const TimeSeries& a, const TimeSeries& a_tilde, double alpha) {
    const auto conv = damped_convolution(a_tilde, a, alpha);
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a_tilde[i] - a[i] * std::exp(-alpha * a.t(i)) - alpha * conv[i];
    return r;
}

struct RecurrenceReport {
    HeuristicParams params;
    double tau_prime = 0.0;
    double recurrence_time = 0.0;
    double max_convolution = 0.0;     // max_t |\int a~(s) a(t - s) e^{-alpha (t - s)} ds|
    double convolution_bound = 0.0;   // 3 tau'
    bool convolution_ok = false;
    double suppression_ratio = 0.0;   // peak of a~ near T over peak of a near T
    double expected_suppression = 0.0;  // e^{-alpha T}
    bool suppression_ok = false;      // within a factor 2
    double max_deviation = 0.0;       // max_t |a~ - a e^{-alpha t}|
    double deviation_budget = 0.0;    // 5 alpha tau'
    bool deviation_ok = false;
    TimeSeries prediction;
};

/// Checks the model's instability statement for a recurrence-type dynamics a_R.
inline RecurrenceReport recurrence_check(const TimeSeries& a_r, const HeuristicParams& params, double tau_prime, double T) {
    params.validate();
    if (params.beta != 0.0 && params.beta != 1.0) throw ValidationError("recurrence_check: beta must be 0 or 1");
    if (!(tau_prime > 0.0)) throw ValidationError("recurrence_check: tau' must be positive");
    if (!(T >= 3.0 * tau_prime)) throw DomainError("recurrence_check: recurrence time must be at least 3 tau'");
    if (a_r.grid.t_max() < T + tau_prime) throw DomainError("recurrence_check: grid ends before the recurrence window");

    RecurrenceReport rep;
    rep.params = params;
    rep.tau_prime = tau_prime;
    rep.recurrence_time = T;
    rep.prediction = predict_perturbed(a_r, params);
    const TimeSeries& at = rep.prediction;

    const auto conv = damped_convolution(at, a_r, params.alpha);
    for (double c : conv) rep.max_convolution = std::max(rep.max_convolution, std::abs(c));
    rep.convolution_bound = 3.0 * tau_prime;
    rep.convolution_ok = rep.max_convolution <= rep.convolution_bound;

    double peak_a = 0.0, peak_at = 0.0;
    for (std::size_t i = 0; i < a_r.size(); ++i) {
        const double t = a_r.t(i);
        if (t < T - tau_prime || t > T + tau_prime) continue;
        peak_a = std::max(peak_a, a_r[i]);
        peak_at = std::max(peak_at, at[i]);
    }
    if (!(peak_a > 0.0)) throw DomainError("recurrence_check: no recurrence peak near T");
    rep.suppression_ratio = peak_at / peak_a;
    rep.expected_suppression = std::exp(-params.alpha * T);
    rep.suppression_ok = rep.suppression_ratio <= 2.0 * rep.expected_suppression &&
                         rep.suppression_ratio >= 0.5 * rep.expected_suppression;

    for (std::size_t i = 0; i < a_r.size(); ++i)
        rep.max_deviation = std::max(rep.max_deviation, std::abs(at[i] - a_r[i] * std::exp(-params.alpha * a_r.t(i))));
    rep.deviation_budget = 5.0 * params.alpha * tau_prime;
    rep.deviation_ok = rep.max_deviation <= rep.deviation_budget + 1e-12;
    return rep;
}

}  // namespace relaxlab
