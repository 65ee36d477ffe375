#pragma once

// Slow reference implementations used only by the tests.

#include <cmath>
#include <complex>
#include <vector>

#include "relaxlab/linalg.hpp"

namespace oracle {

using relaxlab::Matrix;

/// sum_{jl} m_jl^2 cos((E_l - E_j) t) / sum m_jl^2, one full double sum per time.
inline std::vector<double> autocorrelation(const std::vector<double>& e, const Matrix& m, const std::vector<double>& times) {
    const auto n = static_cast<Eigen::Index>(e.size());
    double norm = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index l = 0; l < n; ++l) norm += m(j, l) * m(j, l);
    std::vector<double> out;
    for (double t : times) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index l = 0; l < n; ++l) s += m(j, l) * m(j, l) * std::cos((e[l] - e[j]) * t);
        out.push_back(s / norm);
    }
    return out;
}

/// Tr(rho A(t)) / Tr(rho A) with an explicit density matrix, both in the energy basis.
inline std::vector<double> expectation(const std::vector<double>& e, const Matrix& a, const Matrix& rho, const std::vector<double>& times) {
    const auto n = static_cast<Eigen::Index>(e.size());
    std::vector<double> out;
    double s0 = 0.0;
    for (double t : times) {
        // Tr(rho e^{iHt} A e^{-iHt}) = sum_{jl} rho_lj a_jl cos((e_j - e_l) t) for real symmetric inputs
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index l = 0; l < n; ++l) s += rho(l, j) * a(j, l) * std::cos((e[j] - e[l]) * t);
        if (out.empty()) s0 = s;
        out.push_back(s / s0);
    }
    return out;
}

/// |(1/N) sum_k <e_k| e^{iHt} e^{-iH0 t} |e_k>|^2 by explicit propagation of each basis state.
inline std::vector<double> fidelity(const std::vector<double>& eps, const Matrix& h_full, const std::vector<double>& times) {
    const auto n = static_cast<Eigen::Index>(eps.size());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h_full);
    const Matrix& u = es.eigenvectors();
    const auto& ev = es.eigenvalues();
    std::vector<double> out;
    for (double t : times) {
        // Tr(e^{iHt} e^{-iH0 t}) = sum_k e^{-i eps_k t} (e^{iHt})_kk
        std::complex<double> tr = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            std::complex<double> ukk = 0.0;
            for (Eigen::Index m = 0; m < n; ++m) ukk += u(k, m) * u(k, m) * std::polar(1.0, ev(m) * t);
            tr += ukk * std::polar(1.0, -eps[static_cast<std::size_t>(k)] * t);
        }
        out.push_back(std::norm(tr / static_cast<double>(n)));
    }
    return out;
}

/// Semicircle quantiles on [-1, 1] by bisection of the closed-form CDF.
inline std::vector<double> semicircle_quantiles(std::size_t n) {
    auto cdf = [](double x) { return 0.5 + (x * std::sqrt(1.0 - x * x) + std::asin(x)) / 3.14159265358979323846; };
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        double lo = -1.0, hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cdf(mid) < p ? lo : hi) = mid;
        }
        q[i] = 0.5 * (lo + hi);
    }
    return q;
}

/// Exact output of a Crank-Nicolson type step for a' = -\int k a: cos(n * 2 atan(sqrt(k) h / 2)).
inline double trapezoid_cosine(double omega, double h, std::size_t n) {
    return std::cos(static_cast<double>(n) * 2.0 * std::atan(omega * h / 2.0));
}

/// \int_0^\infty f(t) e^{-s t} dt by composite Simpson on samples with step h (odd count).
inline double laplace(const std::vector<double>& f, double h, double s) {
    std::size_t n = f.size();
    if (n % 2 == 0) --n;
    double acc = f[0] + f[n - 1] * std::exp(-s * h * static_cast<double>(n - 1));
    for (std::size_t i = 1; i + 1 < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f[i] * std::exp(-s * h * static_cast<double>(i));
    return acc * h / 3.0;
}

}  // namespace oracle
