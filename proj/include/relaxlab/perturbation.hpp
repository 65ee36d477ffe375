#pragma once

// Banded random perturbations in the eigenbasis of the observable.
//
// v_ij = sigma * u_ij * [|a_i - a_j| <= mu], u uniform on [-1, 1], with sigma fixed
// by ||V||_HS = epsilon * ||H0||_HS.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "relaxlab/ensemble.hpp"
#include "relaxlab/errors.hpp"
#include "relaxlab/linalg.hpp"
#include "relaxlab/rng.hpp"

namespace relaxlab {

struct Perturbation {
    double mu = 2.0;
    double epsilon = 0.029;
    double sigma = 0.0;
    Matrix v_matrix;  // in the A eigenbasis
    std::uint64_t seed = 0;

    std::size_t dimension() const { return static_cast<std::size_t>(v_matrix.rows()); }
};

inline void validate_band(double mu) {
    if (!(mu > 0.0) || !(mu <= 2.0)) throw DomainError("perturbation band width mu must lie in (0, 2]");
}

/// `a_eigenvalues` must be ascending; the band of row i is then a contiguous index range.
inline Perturbation build_perturbation(std::span<const double> a_eigenvalues, double h0_hs_norm, double mu,
                                       double epsilon, std::uint64_t seed) {
    validate_band(mu);
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("perturbation strength epsilon must be positive");
    if (!(h0_hs_norm > 0.0)) throw DomainError("build_perturbation: ||H0|| must be positive");
    if (!std::is_sorted(a_eigenvalues.begin(), a_eigenvalues.end()))
        throw ValidationError("build_perturbation: observable eigenvalues must be ascending");

    const std::size_t n = a_eigenvalues.size();
    const auto ni = static_cast<Eigen::Index>(n);
    Perturbation p;
    p.mu = mu;
    p.epsilon = epsilon;
    p.seed = seed;
    p.v_matrix = Matrix::Zero(ni, ni);

    // Every upper-triangle entry consumes one draw, so a seed fixes u_ij for all mu.
    Engine eng = make_engine(seed, "perturbation");
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    double sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ai = a_eigenvalues[i];
        for (std::size_t j = i; j < n; ++j) {
            const double u = uni(eng);
            if (a_eigenvalues[j] - ai <= mu) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                p.v_matrix(ii, jj) = u;
                p.v_matrix(jj, ii) = u;
                sumsq += (i == j ? 1.0 : 2.0) * u * u;
            }
        }
    }
    if (!(sumsq > 0.0)) throw NumericError("build_perturbation: all perturbation elements vanished");

    p.sigma = epsilon * h0_hs_norm / std::sqrt(sumsq);
    p.v_matrix *= p.sigma;
    return p;
}

inline Perturbation build_perturbation(const TailoredModel& model, double mu, double epsilon, std::uint64_t seed) {
    return build_perturbation(std::span<const double>(model.a_eigenvalues.data(), model.dimension()),
                              model.h0_hs_norm(), mu, epsilon, seed);
}

/// ||[V, A]||_HS with A = diag(a) in its eigenbasis.
inline double commutator_norm(const Perturbation& p, std::span<const double> a_eigenvalues) {
    const std::size_t n = p.dimension();
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = a_eigenvalues[i] - a_eigenvalues[j];
            const double v = p.v_matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            s += v * v * d * d;
        }
    return std::sqrt(s);
}

namespace detail {

/// Fraction of semicircle-distributed pairs (a1, a2) with |a1 - a2| <= mu, by
/// composite Simpson in a = sin(theta) where the semicircle weight is smooth.
inline double semicircle_pair_fraction(double mu, std::size_t panels) {
    const double lo = -std::numbers::pi / 2.0, hi = std::numbers::pi / 2.0;
    const double h = (hi - lo) / static_cast<double>(panels);
    auto f = [mu](double th) {
        const double a = std::sin(th);
        const double c = std::cos(th);
        const double inner = semicircle_cdf(std::min(1.0, a + mu)) - semicircle_cdf(std::max(-1.0, a - mu));
        return 2.0 / std::numbers::pi * c * c * inner;
    };
    double s = f(lo) + f(hi);
    for (std::size_t k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(k));
    return s * h / 3.0;
}

}  // namespace detail

/// Band-pair integral I(mu) = \int\int [|a1-a2| <= mu] eta(a1) eta(a2), eta = (2n/pi) sqrt(1 - a^2).
inline double band_pair_integral(double mu, std::size_t n) {
    validate_band(mu);
    constexpr std::size_t panels = 20000;
    const double j1 = detail::semicircle_pair_fraction(mu, panels);
    const double j2 = detail::semicircle_pair_fraction(mu, 2 * panels);
    if (!(std::abs(j1 - j2) <= 1e-7 * std::max(1.0, std::abs(j2))))
        throw NumericError("band_pair_integral: quadrature did not converge");
    const double nn = static_cast<double>(n);
    return nn * nn * j2;
}

/// sigma from <||V||^2> = sigma^2 I(mu) / 3 and <||H0||^2> = 300 n, i.e. sigma = eps sqrt(900 n / I).
/// The factor 300 is the variance of U(-30, 30), so this assumes the default shell width.
inline double sigma_estimate(double epsilon, double mu, std::size_t n) {
    if (n < 2) throw ValidationError("sigma_estimate: n must be at least 2");
    if (!(epsilon > 0.0)) throw DomainError("sigma_estimate: epsilon must be positive");
    const double i_mu = band_pair_integral(mu, n);
    return epsilon * std::sqrt(900.0 * static_cast<double>(n) / i_mu);
}

/// The alternative closed form sigma = eps * 5 pi / (sqrt(n) sqrt(I)). It is not
/// consistent with sigma_estimate (at mu = 2 they differ by a factor 6n / pi); it is
/// reported next to the calibration table for comparison only.
inline double sigma_estimate_alternative_prefactor(double epsilon, double mu, std::size_t n) {
    const double i_mu = band_pair_integral(mu, n);
    return epsilon * 5.0 * std::numbers::pi / std::sqrt(static_cast<double>(n) * i_mu);
}

struct CalibrationRow {
    double mu = 0.0;
    double sigma_exact = 0.0;
    double sigma_estimate = 0.0;
    double ratio = 0.0;
};

inline std::vector<CalibrationRow> calibration_report(const TailoredModel& model, double epsilon,
                                                      std::span<const double> mu_grid, std::uint64_t seed) {
    std::vector<CalibrationRow> rows;
    rows.reserve(mu_grid.size());
    for (double mu : mu_grid) {
        const Perturbation p = build_perturbation(model, mu, epsilon, seed);
        CalibrationRow r;
        r.mu = mu;
        r.sigma_exact = p.sigma;
        r.sigma_estimate = sigma_estimate(epsilon, mu, model.dimension());
        r.ratio = r.sigma_exact / r.sigma_estimate;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace relaxlab
