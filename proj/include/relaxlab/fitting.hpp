#pragma once

// Estimation of (alpha, beta) by matching predicted to measured perturbed dynamics.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "relaxlab/errors.hpp"
#include "relaxlab/memkernel.hpp"
#include "relaxlab/time_series.hpp"

namespace relaxlab {

struct FitWindow {
    double t_lo = 0.0;
    double t_hi = 60.0;
};

struct FitResult {
    HeuristicParams params;
    double rms_residual = 0.0;
    FitWindow window;
    bool degenerate = false;          // a distant parameter choice fits about as well
    bool refinement_failed = false;   // simplex did not improve on the grid optimum
};

struct FitOptions {
    double alpha_max = 0.1;
    double alpha_step = 0.002;
    double beta_step = 0.02;
    // a grid point at least this far away with rms within the tolerance marks a flat landscape
    double far_alpha = 0.02;
    double far_beta = 0.2;
    double flat_rel = 0.05;
    double flat_abs = 1e-6;
};

namespace detail {

class RmsObjective {
public:
    RmsObjective(const TimeSeries& a, const TimeSeries& a_tilde, FitWindow w) {
        if (!same_grid(a.grid, a_tilde.grid)) throw DomainError("fit_params: series grids differ");
        if (!(w.t_hi > w.t_lo) || w.t_lo < 0.0) throw ValidationError("fit_params: bad fit window");
        hi_ = a.grid.index_at_or_below(w.t_hi);
        lo_ = 0;
        while (lo_ < hi_ && a.t(lo_) < w.t_lo - 1e-12) ++lo_;
        if (hi_ < 1) throw ValidationError("fit_params: fit window holds fewer than two points");
        predictor_.emplace(a.head(hi_ + 1));
        target_.assign(a_tilde.values.begin(), a_tilde.values.begin() + static_cast<std::ptrdiff_t>(hi_ + 1));
    }

    double operator()(const HeuristicParams& p) const {
        TimeSeries pred;
        try {
            pred = (*predictor_)(p);
        } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
        }
        double s = 0.0;
        for (std::size_t i = lo_; i <= hi_; ++i) {
            const double d = pred[i] - target_[i];
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(hi_ - lo_ + 1));
    }

private:
    std::size_t lo_ = 0, hi_ = 0;
    std::optional<KernelPredictor> predictor_;
    std::vector<double> target_;
};

struct SimplexState {
    const RmsObjective* f;
    std::optional<double> fixed_alpha;
    double alpha_max;
};

inline HeuristicParams clamp_params(const gsl_vector* x, const SimplexState& st, double* excess) {
    HeuristicParams p;
    double ex = 0.0;
    if (st.fixed_alpha) {
        p.alpha = *st.fixed_alpha;
        const double b = gsl_vector_get(x, 0);
        p.beta = std::clamp(b, 0.0, 1.0);
        ex += std::abs(b - p.beta);
    } else {
        const double a = gsl_vector_get(x, 0), b = gsl_vector_get(x, 1);
        p.alpha = std::clamp(a, 0.0, st.alpha_max);
        p.beta = std::clamp(b, 0.0, 1.0);
        ex += std::abs(a - p.alpha) + std::abs(b - p.beta);
    }
    *excess = ex;
    return p;
}

inline double simplex_value(const gsl_vector* x, void* data) {
    const auto& st = *static_cast<const SimplexState*>(data);
    double ex = 0.0;
    const HeuristicParams p = clamp_params(x, st, &ex);
    // linear penalty keeps the simplex inside the box
    return (*st.f)(p) + ex;
}

}  // namespace detail

/// Grid search over alpha in [0, alpha_max] and beta in [0, 1], then Nelder-Mead refinement.
/// With fix_alpha only beta is fitted.
inline FitResult fit_params(const TimeSeries& a, const TimeSeries& a_tilde, std::optional<double> fix_alpha = std::nullopt,
                            std::optional<FitWindow> window = std::nullopt, const FitOptions& opt = {}) {
    require_unit_start(a, "fit_params");
    require_unit_start(a_tilde, "fit_params");
    if (fix_alpha && !(*fix_alpha >= 0.0)) throw ValidationError("fit_params: fixed alpha must be >= 0");
    const FitWindow win = window.value_or(FitWindow{});
    const detail::RmsObjective f(a, a_tilde, win);

    std::vector<double> alphas;
    if (fix_alpha) {
        alphas.push_back(*fix_alpha);
    } else {
        const auto na = static_cast<std::size_t>(std::llround(opt.alpha_max / opt.alpha_step));
        for (std::size_t i = 0; i <= na; ++i) alphas.push_back(opt.alpha_step * static_cast<double>(i));
    }
    const auto nb = static_cast<std::size_t>(std::llround(1.0 / opt.beta_step));
    std::vector<double> betas;
    for (std::size_t i = 0; i <= nb; ++i) betas.push_back(opt.beta_step * static_cast<double>(i));

    struct Point {
        HeuristicParams p;
        double rms;
    };
    std::vector<Point> pts;
    pts.reserve(alphas.size() * betas.size());
    for (double al : alphas) {
        if (al == 0.0) {
            // beta has no effect without damping
            const double r = f({0.0, 0.0});
            for (double be : betas) pts.push_back({{0.0, be}, r});
            continue;
        }
        for (double be : betas) pts.push_back({{al, be}, f({al, be})});
    }
    // ties go to the smaller alpha, then the smaller beta
    const auto best_it = std::min_element(pts.begin(), pts.end(), [](const Point& x, const Point& y) { return x.rms < y.rms; });
    Point best = *best_it;
    if (!std::isfinite(best.rms)) throw NumericError("fit_params: every grid point failed");

    FitResult res;
    res.window = win;
    res.params = best.p;
    res.rms_residual = best.rms;

    const double tol = best.rms * (1.0 + opt.flat_rel) + opt.flat_abs;
    for (const auto& q : pts) {
        const bool far = std::abs(q.p.alpha - best.p.alpha) >= opt.far_alpha - 1e-12 ||
                         std::abs(q.p.beta - best.p.beta) >= opt.far_beta - 1e-12;
        if (far && q.rms <= tol) {
            res.degenerate = true;
            break;
        }
    }
    if (best.p.alpha == 0.0 && best.rms <= opt.flat_abs) {
        res.degenerate = true;  // unperturbed pair: beta is arbitrary
        return res;
    }

    detail::SimplexState st{&f, fix_alpha, opt.alpha_max};
    const std::size_t dim = fix_alpha ? 1 : 2;
    gsl_multimin_function fn{&detail::simplex_value, dim, &st};
    gsl_vector* x = gsl_vector_alloc(dim);
    gsl_vector* step = gsl_vector_alloc(dim);
    if (fix_alpha) {
        gsl_vector_set(x, 0, best.p.beta);
        gsl_vector_set(step, 0, opt.beta_step);
    } else {
        gsl_vector_set(x, 0, best.p.alpha);
        gsl_vector_set(x, 1, best.p.beta);
        gsl_vector_set(step, 0, opt.alpha_step);
        gsl_vector_set(step, 1, opt.beta_step);
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    int status = gsl_multimin_fminimizer_set(s, &fn, x, step);
    int iter = 0;
    while (status == GSL_SUCCESS && iter++ < 400) {
        status = gsl_multimin_fminimizer_iterate(s);
        if (status != GSL_SUCCESS) break;
        status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-7);
        if (status == GSL_SUCCESS) break;
        if (status == GSL_CONTINUE) status = GSL_SUCCESS;
    }
    const bool converged = status == GSL_SUCCESS && iter <= 400;
    double ex = 0.0;
    const HeuristicParams refined = detail::clamp_params(gsl_multimin_fminimizer_x(s), st, &ex);
    gsl_set_error_handler(old);
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);

    const double r = f(refined);
    if (converged && std::isfinite(r) && r <= best.rms) {
        res.params = refined;
        res.rms_residual = r;
    } else {
        res.refinement_failed = !converged || !std::isfinite(r);
    }
    return res;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ValidationError("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// One (unperturbed, perturbed) pair of measured series.
struct DynamicsPair {
    TimeSeries a;
    TimeSeries a_tilde;
};

struct BetaRow {
    double mu = 0.0;
    double beta = 0.0;  // median over samples
    double rms = 0.0;   // median over samples
    std::vector<double> per_sample_beta;
};

/// beta fitted with alpha frozen, per band width, summarized by the median over samples.
inline std::vector<BetaRow> beta_curve(std::span<const double> mu_grid, std::span<const std::vector<DynamicsPair>> samples,
                                       double alpha, std::optional<FitWindow> window = std::nullopt) {
    if (mu_grid.empty()) throw ValidationError("beta_curve: empty band-width grid");
    if (mu_grid.size() != samples.size()) throw ValidationError("beta_curve: one sample list per band width required");
    std::vector<BetaRow> rows;
    for (std::size_t i = 0; i < mu_grid.size(); ++i) {
        if (samples[i].empty()) throw ValidationError("beta_curve: no samples for a band width");
        BetaRow row;
        row.mu = mu_grid[i];
        std::vector<double> rms;
        for (const auto& s : samples[i]) {
            const FitResult r = fit_params(s.a, s.a_tilde, alpha, window);
            row.per_sample_beta.push_back(r.params.beta);
            rms.push_back(r.rms_residual);
        }
        row.beta = median(row.per_sample_beta);
        row.rms = median(rms);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace relaxlab
