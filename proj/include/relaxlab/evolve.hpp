#pragma once

// Exact spectral time evolution of the unperturbed and perturbed models.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "relaxlab/ensemble.hpp"
#include "relaxlab/errors.hpp"
#include "relaxlab/linalg.hpp"
#include "relaxlab/perturbation.hpp"
#include "relaxlab/rng.hpp"
#include "relaxlab/spectral_sum.hpp"
#include "relaxlab/time_series.hpp"

namespace relaxlab {

/// H = H0 + V diagonalized in the observable eigenbasis.
struct PerturbedSystem {
    std::shared_ptr<const TailoredModel> model;
    double mu = 0.0;
    double epsilon = 0.0;
    std::uint64_t perturbation_seed = 0;
    double trace_v = 0.0;
    Vector h_eigenvalues;   // E_m, ascending
    Matrix h_eigenvectors;  // P, in the A eigenbasis
    Matrix a_in_h_basis;    // P^T diag(a) P

    std::size_t dimension() const { return static_cast<std::size_t>(h_eigenvalues.size()); }
};

inline PerturbedSystem assemble(std::shared_ptr<const TailoredModel> model, const Perturbation& pert) {
    if (!model) throw ValidationError("assemble: null model");
    const auto n = static_cast<Eigen::Index>(model->dimension());
    if (pert.v_matrix.rows() != n || pert.v_matrix.cols() != n)
        throw ValidationError("assemble: perturbation dimension does not match the model");

    const Matrix& q = model->a_eigenvectors;
    const Eigen::Map<const Vector> eps(model->spectrum.eigenvalues.data(), n);

    Matrix h = q.transpose() * (eps.asDiagonal() * q);
    h += pert.v_matrix;
    SymmetricEigen eig = symmetric_eigen(std::move(h));

    PerturbedSystem sys;
    sys.model = model;
    sys.mu = pert.mu;
    sys.epsilon = pert.epsilon;
    sys.perturbation_seed = pert.seed;
    sys.trace_v = pert.v_matrix.trace();
    sys.h_eigenvalues = std::move(eig.values);
    sys.h_eigenvectors = std::move(eig.vectors);
    sys.a_in_h_basis = sys.h_eigenvectors.transpose() * (model->a_eigenvalues.asDiagonal() * sys.h_eigenvectors);
    return sys;
}

namespace detail {

/// sum_{jl} w_jl cos((E_l - E_j) t) for a symmetric weight matrix given entrywise.
template <class WeightFn>
FrequencyBins bin_symmetric_pairs(std::span<const double> energies, double t_max, WeightFn&& weight) {
    const std::size_t n = energies.size();
    const auto [lo, hi] = std::minmax_element(energies.begin(), energies.end());
    FrequencyBins bins(0.0, std::max(*hi - *lo, 1e-12), t_max);
    for (std::size_t l = 0; l < n; ++l) {
        bins.add(0.0, weight(l, l));
        for (std::size_t j = 0; j < l; ++j) bins.add(std::abs(energies[l] - energies[j]), 2.0 * weight(j, l));
    }
    return bins;
}

inline TimeSeries normalized_real_part(const std::vector<std::complex<double>>& s, const TimeGrid& grid) {
    const double s0 = s.front().real();
    if (!(std::abs(s0) > 0.0) || !std::isfinite(s0)) throw DomainError("dynamics cannot be normalized: zero initial value");
    std::vector<double> v(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) v[k] = s[k].real() / s0;
    v.front() = 1.0;
    return TimeSeries(grid, std::move(v));
}

}  // namespace detail

/// C(t) = sum_{jl} |m_jl|^2 cos((E_l - E_j) t) / C(0), frequency-binned.
inline TimeSeries autocorrelation_series(std::span<const double> eigenvalues, const Matrix& observable, const TimeGrid& grid) {
    grid.validate();
    const auto n = static_cast<Eigen::Index>(eigenvalues.size());
    if (observable.rows() != n || observable.cols() != n) throw ValidationError("autocorrelation_series: dimension mismatch");
    FrequencyBins bins = detail::bin_symmetric_pairs(eigenvalues, grid.t_max(), [&](std::size_t j, std::size_t l) {
        const double m = observable(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
        return m * m;
    });
    return detail::normalized_real_part(evaluate_lines(bins.lines(), grid), grid);
}

inline TimeSeries autocorrelation_series(const TailoredModel& model, const TimeGrid& grid) {
    return autocorrelation_series(model.spectrum.eigenvalues, model.a_matrix, grid);
}

inline TimeSeries autocorrelation_series(const PerturbedSystem& sys, const TimeGrid& grid) {
    return autocorrelation_series(std::span<const double>(sys.h_eigenvalues.data(), sys.dimension()), sys.a_in_h_basis, grid);
}

/// Binned C(t) at arbitrary (possibly negative) times, normalized by the t = 0 weight.
inline std::vector<double> autocorrelation_at(std::span<const double> eigenvalues, const Matrix& observable,
                                              std::span<const double> times) {
    double t_max = 1e-12;
    for (double t : times) t_max = std::max(t_max, std::abs(t));
    FrequencyBins bins = detail::bin_symmetric_pairs(eigenvalues, t_max, [&](std::size_t j, std::size_t l) {
        const double m = observable(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
        return m * m;
    });
    const auto lines = bins.lines();
    double total = 0.0;
    for (const auto& ln : lines) total += ln.weight;
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) {
        double s = 0.0;
        for (const auto& ln : lines) {
            const double c = std::cos(ln.omega * t), sn = std::sin(ln.omega * t);
            s += ln.weight * c - t * ln.m1 * sn - 0.5 * t * t * ln.m2 * c;
        }
        out.push_back(s / total);
    }
    return out;
}

namespace detail {

inline void check_response_strength(double delta, double a_abs_max) {
    if (delta == 0.0) throw DomainError("expectation_from_state: delta = 0 gives <A(0)> = 0");
    if (!std::isfinite(delta) || !(1.0 - std::abs(delta) * a_abs_max > 0.0))
        throw DomainError("expectation_from_state: 1 + delta a_i must stay positive");
}

inline TimeSeries response_dynamics(std::span<const double> energies, const Matrix& a, double delta, const TimeGrid& grid) {
    const double inv_n = 1.0 / static_cast<double>(energies.size());
    // rho = (1 + delta A) / N; sin terms cancel because rho_jl a_lj is symmetric.
    FrequencyBins bins = bin_symmetric_pairs(energies, grid.t_max(), [&](std::size_t j, std::size_t l) {
        const double m = a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
        const double rho = ((j == l ? 1.0 : 0.0) + delta * m) * inv_n;
        return rho * m;
    });
    return normalized_real_part(evaluate_lines(bins.lines(), grid), grid);
}

}  // namespace detail

/// <A(t)> / <A(0)> for rho(0) = (1 + delta A) / N evolved with H0.
inline TimeSeries expectation_from_state(const TailoredModel& model, double delta, const TimeGrid& grid) {
    grid.validate();
    detail::check_response_strength(delta, model.a_eigenvalues.cwiseAbs().maxCoeff());
    return detail::response_dynamics(model.spectrum.eigenvalues, model.a_matrix, delta, grid);
}

/// Same initial state evolved with H = H0 + V.
inline TimeSeries expectation_from_state(const PerturbedSystem& sys, double delta, const TimeGrid& grid) {
    grid.validate();
    detail::check_response_strength(delta, sys.model->a_eigenvalues.cwiseAbs().maxCoeff());
    return detail::response_dynamics(std::span<const double>(sys.h_eigenvalues.data(), sys.dimension()), sys.a_in_h_basis,
                                     delta, grid);
}

/// Random real pure state sqrt(1 + delta A)|phi> / norm with Gaussian phi, in the H0 eigenbasis.
inline Vector response_pure_state(const TailoredModel& model, double delta, std::uint64_t seed) {
    detail::check_response_strength(delta, model.a_eigenvalues.cwiseAbs().maxCoeff());
    Engine eng = make_engine(seed, "pure-state");
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto n = model.a_eigenvalues.size();
    Vector psi_a(n);
    for (Eigen::Index i = 0; i < n; ++i) psi_a(i) = std::sqrt(1.0 + delta * model.a_eigenvalues(i)) * gauss(eng);
    psi_a /= psi_a.norm();
    return model.a_eigenvectors * psi_a;
}

/// <psi| A(t) |psi> / <psi|A|psi> for a real state given in the eigenbasis of `eigenvalues`.
inline TimeSeries expectation_from_pure_state(std::span<const double> eigenvalues, const Matrix& observable,
                                              const Vector& psi, const TimeGrid& grid) {
    grid.validate();
    if (psi.size() != static_cast<Eigen::Index>(eigenvalues.size())) throw ValidationError("expectation_from_pure_state: dimension mismatch");
    FrequencyBins bins = detail::bin_symmetric_pairs(eigenvalues, grid.t_max(), [&](std::size_t j, std::size_t l) {
        const auto jj = static_cast<Eigen::Index>(j), ll = static_cast<Eigen::Index>(l);
        return psi(jj) * psi(ll) * observable(jj, ll);
    });
    return detail::normalized_real_part(evaluate_lines(bins.lines(), grid), grid);
}

/// F(t) = |Tr(rho e^{iHt} e^{-iH0 t})|^2 with rho = 1/N.
inline TimeSeries fidelity_series(const PerturbedSystem& sys, const TimeGrid& grid) {
    grid.validate();
    const TailoredModel& model = *sys.model;
    const std::size_t n = sys.dimension();
    // Overlaps <E_m|e_k> = (P^T Q^T)_{mk}.
    const Matrix w = sys.h_eigenvectors.transpose() * model.a_eigenvectors.transpose();
    const auto& eps = model.spectrum.eigenvalues;
    const double span = std::max(sys.h_eigenvalues.maxCoeff(), eps.back()) - std::min(sys.h_eigenvalues.minCoeff(), eps.front());
    FrequencyBins bins(-span, span, grid.t_max());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        for (std::size_t m = 0; m < n; ++m) {
            const double o = w(static_cast<Eigen::Index>(m), kk);
            bins.add(sys.h_eigenvalues(static_cast<Eigen::Index>(m)) - eps[k], o * o * inv_n);
        }
    }
    const auto s = evaluate_lines(bins.lines(), grid);
    std::vector<double> f(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) f[i] = std::norm(s[i]);
    const double f0 = f.front();
    for (double& x : f) x /= f0;
    f.front() = 1.0;
    return TimeSeries(grid, std::move(f));
}

/// Decay rate -slope of a least-squares line through log(values) on [t_lo, t_hi].
inline double fit_exponential_rate(const TimeSeries& series, double t_lo, double t_hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double t = series.t(i);
        if (t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
        const double v = series[i];
        if (!(v > 0.0)) throw DomainError("fit_exponential_rate: non-positive value inside the fit window");
        const double y = std::log(v);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++cnt;
    }
    if (cnt < 2) throw ValidationError("fit_exponential_rate: fewer than two points in the window");
    const double c = static_cast<double>(cnt);
    const double den = c * sxx - sx * sx;
    return -(c * sxy - sx * sy) / den;
}

}  // namespace relaxlab
