#pragma once

// Frequency-binned evaluation of S(t) = sum_k w_k exp(i omega_k t) for O(N^2) pairs.
//
// Each bin keeps the zeroth, first and second moments of its weights about the bin
// center c, so a bin contributes e^{ict}(W + i t M1 - t^2 M2 / 2) + O((width t)^3).
// With width <= pi / (10 t_max) the residual stays well below 1e-3 of the total weight.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "relaxlab/errors.hpp"
#include "relaxlab/time_series.hpp"

namespace relaxlab {

class FrequencyBins {
public:
    /// Bins cover [omega_lo, omega_hi]; the count is raised until the bin width
    /// is at most pi / (10 t_max).
    FrequencyBins(double omega_lo, double omega_hi, double t_max, std::size_t min_bins = std::size_t{1} << 16) {
        if (!(omega_hi >= omega_lo)) throw ValidationError("FrequencyBins: empty frequency range");
        lo_ = omega_lo;
        const double span = std::max(omega_hi - omega_lo, 1e-12);
        const double max_width = std::numbers::pi / (10.0 * std::max(t_max, 1e-12));
        n_ = std::max<std::size_t>(min_bins, static_cast<std::size_t>(std::ceil(span / max_width)));
        width_ = span / static_cast<double>(n_);
        // Small margin so omega_hi falls inside the last bin.
        width_ *= 1.0 + 1e-12;
        w_.assign(n_, 0.0);
        m1_.assign(n_, 0.0);
        m2_.assign(n_, 0.0);
    }

    double width() const { return width_; }
    std::size_t size() const { return n_; }

    void add(double omega, double weight) {
        const double x = (omega - lo_) / width_;
        auto b = static_cast<std::ptrdiff_t>(x);
        b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(n_) - 1);
        const auto i = static_cast<std::size_t>(b);
        // Offsets are taken from the bin center to keep the moments well conditioned.
        const double d = omega - center(i);
        w_[i] += weight;
        m1_[i] += weight * d;
        m2_[i] += weight * d * d;
    }

    struct Line {
        double omega;   // bin center
        double weight;  // sum w
        double m1;      // sum w (omega - center)
        double m2;      // sum w (omega - center)^2
    };

    std::vector<Line> lines() const {
        std::vector<Line> out;
        for (std::size_t i = 0; i < n_; ++i) {
            if (w_[i] == 0.0 && m1_[i] == 0.0 && m2_[i] == 0.0) continue;
            out.push_back({center(i), w_[i], m1_[i], m2_[i]});
        }
        return out;
    }

private:
    double center(std::size_t i) const { return lo_ + (static_cast<double>(i) + 0.5) * width_; }

    double lo_ = 0.0;
    double width_ = 1.0;
    std::size_t n_ = 0;
    std::vector<double> w_, m1_, m2_;
};

/// sum over lines of weight e^{i omega t} on every grid point, using
/// e^{i(c+d)t} ~ e^{ict}(1 + i d t - d^2 t^2 / 2) inside each bin.
inline std::vector<std::complex<double>> evaluate_lines(const std::vector<FrequencyBins::Line>& lines,
                                                        const TimeGrid& grid) {
    using cplx = std::complex<double>;
    std::vector<cplx> s0(grid.n_steps), s1(grid.n_steps), s2(grid.n_steps);
    for (const auto& ln : lines) {
        const cplx step = std::polar(1.0, ln.omega * grid.dt);
        cplx ph(1.0, 0.0);
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            if ((k & 127u) == 0u && k > 0) ph = std::polar(1.0, ln.omega * grid.t(k));
            s0[k] += ln.weight * ph;
            s1[k] += ln.m1 * ph;
            s2[k] += ln.m2 * ph;
            ph *= step;
        }
    }
    std::vector<cplx> out(grid.n_steps);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double t = grid.t(k);
        out[k] = s0[k] + cplx(0.0, t) * s1[k] - 0.5 * t * t * s2[k];
    }
    return out;
}

}  // namespace relaxlab
