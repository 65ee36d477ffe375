#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "relaxlab/errors.hpp"

namespace relaxlab {

/// Uniform grid t_i = i * dt, i = 0 .. n_steps - 1.
struct TimeGrid {
    double dt = 0.1;
    std::size_t n_steps = 901;

    double t(std::size_t i) const { return dt * static_cast<double>(i); }
    double t_max() const { return t(n_steps - 1); }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("TimeGrid: dt must be positive");
        if (n_steps < 2) throw ValidationError("TimeGrid: need at least two points");
    }

    /// Smallest grid with the given step that reaches t_max.
    static TimeGrid covering(double dt, double t_max) {
        if (!(dt > 0.0) || !(t_max > 0.0)) throw ValidationError("TimeGrid: dt and t_max must be positive");
        const auto n = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9)) + 1;
        TimeGrid g{dt, n};
        g.validate();
        return g;
    }

    /// Index of the last grid point with t <= t_hi.
    std::size_t index_at_or_below(double t_hi) const {
        if (t_hi < 0.0) return 0;
        const auto i = static_cast<std::size_t>(std::floor(t_hi / dt + 1e-9));
        return i < n_steps ? i : n_steps - 1;
    }

    bool operator==(const TimeGrid&) const = default;
};

struct TimeSeries {
    TimeGrid grid;
    std::vector<double> values;

    TimeSeries() = default;
    TimeSeries(TimeGrid g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.n_steps) throw ValidationError("TimeSeries: length does not match grid");
    }

    std::size_t size() const { return values.size(); }
    double t(std::size_t i) const { return grid.t(i); }
    double operator[](std::size_t i) const { return values[i]; }

    /// Leading part of the series on the first n points.
    TimeSeries head(std::size_t n) const {
        if (n > values.size() || n < 2) throw ValidationError("TimeSeries::head: bad length");
        return TimeSeries(TimeGrid{grid.dt, n}, std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n)));
    }
};

inline bool same_grid(const TimeGrid& a, const TimeGrid& b) {
    return a.n_steps == b.n_steps && std::abs(a.dt - b.dt) <= 1e-12 * std::abs(a.dt);
}

}  // namespace relaxlab
