#pragma once

// Random Hamiltonian spectrum plus an observable whose autocorrelation follows g(t).
//
// The Hamiltonian H0 is diagonal with i.i.d. uniform eigenvalues. The observable is
// written in the H0 eigenbasis with elements a_jl = f(e_l - e_j) R_jl, R standard
// normal, so that Tr(A(t)A) = sum |a_jl|^2 cos((e_l - e_j) t) tracks g(t).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relaxlab/errors.hpp"
#include "relaxlab/linalg.hpp"
#include "relaxlab/rng.hpp"
#include "relaxlab/targets.hpp"

namespace relaxlab {

/// Variance of the diagonal elements a_jj relative to the off-diagonal ones.
/// None removes the diagonal fluctuations altogether.
enum class DiagonalMode { None, Equal, Doubled };

inline std::string_view to_string(DiagonalMode m) {
    switch (m) {
        case DiagonalMode::None: return "none";
        case DiagonalMode::Equal: return "equal";
        case DiagonalMode::Doubled: return "doubled";
    }
    return "none";
}

inline DiagonalMode diagonal_mode_from_string(std::string_view s) {
    if (s == "none") return DiagonalMode::None;
    if (s == "equal") return DiagonalMode::Equal;
    if (s == "doubled") return DiagonalMode::Doubled;
    throw ValidationError("unknown diagonal mode '" + std::string(s) + "'");
}

struct ModelSpec {
    std::size_t dimension = 4000;
    double half_width = 30.0;
    std::uint64_t seed = 0;
    TargetDynamics target = TargetDynamics::exponential(15.0);
    DiagonalMode diagonal = DiagonalMode::None;

    void validate() const {
        if (dimension < 2) throw ValidationError("ModelSpec: dimension must be at least 2");
        if (!(half_width > 0.0) || !std::isfinite(half_width)) throw ValidationError("ModelSpec: half_width must be positive");
        target.validate();
    }
};

struct Spectrum {
    std::vector<double> eigenvalues;  // ascending

    std::size_t size() const { return eigenvalues.size(); }
    double sum_of_squares() const {
        double s = 0.0;
        for (double e : eigenvalues) s += e * e;
        return s;
    }
};

/// Constant density of states of the modeled energy shell.
inline double density_of_states(const ModelSpec& spec) {
    return static_cast<double>(spec.dimension) / (2.0 * spec.half_width);
}

struct TailoredModel {
    ModelSpec spec;
    Spectrum spectrum;
    Matrix a_matrix;        // A in the H0 eigenbasis, symmetric, traceless
    Vector a_eigenvalues;   // ascending, max |a_i| = 1
    Matrix a_eigenvectors;  // Q: columns are eigenvectors of A in the H0 eigenbasis
    double scale = 1.0;     // factor applied to bring the spectrum into [-1, 1]

    std::size_t dimension() const { return spectrum.size(); }
    double h0_hs_norm() const { return std::sqrt(spectrum.sum_of_squares()); }
};

inline Spectrum sample_spectrum(const ModelSpec& spec) {
    spec.validate();
    Engine eng = make_engine(spec.seed, "spectrum");
    std::uniform_real_distribution<double> u(-spec.half_width, spec.half_width);
    Spectrum s;
    s.eigenvalues.resize(spec.dimension);
    for (double& e : s.eigenvalues) e = u(eng);
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end());
    return s;
}

/// Builds A on a given spectrum. The envelope must decay at its edges; frequencies
/// beyond the envelope grid get f = 0.
inline TailoredModel build_observable(const ModelSpec& spec, Spectrum spectrum, const SpectralEnvelope& envelope) {
    spec.validate();
    const std::size_t n = spectrum.size();
    if (n != spec.dimension) throw ValidationError("build_observable: spectrum size does not match dimension");
    if (envelope.values.empty()) throw ValidationError("build_observable: empty envelope");
    for (double v : envelope.values)
        if (v < 0.0) throw ValidationError("build_observable: envelope must be non-negative");
    const double peak = envelope.peak();
    if (!(peak > 0.0)) throw NumericError("build_observable: envelope vanishes everywhere");
    if (std::max(envelope.values.front(), envelope.values.back()) > 1e-3 * peak)
        throw DomainError("build_observable: envelope grid does not cover the target's frequency range");

    Engine eng = make_engine(spec.seed, "matrix-elements");
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double diag_scale = spec.diagonal == DiagonalMode::None    ? 0.0
                              : spec.diagonal == DiagonalMode::Equal ? 1.0
                                                                     : std::numbers::sqrt2;
    const double f0 = std::sqrt(envelope.at(0.0));
    const auto& e = spectrum.eigenvalues;

    Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double r = gauss(eng);
        a(jj, jj) = diag_scale * f0 * r;
        for (std::size_t l = j + 1; l < n; ++l) {
            const auto ll = static_cast<Eigen::Index>(l);
            const double v = std::sqrt(envelope.at(e[l] - e[j])) * gauss(eng);
            a(jj, ll) = v;
            a(ll, jj) = v;
        }
    }

    const double shift = a.trace() / static_cast<double>(n);
    a.diagonal().array() -= shift;

    SymmetricEigen eig = symmetric_eigen(a);
    const double amax = eig.values.cwiseAbs().maxCoeff();
    if (!(amax > 0.0) || !std::isfinite(amax)) throw NumericError("build_observable: observable vanished");

    TailoredModel model;
    model.spec = spec;
    model.spectrum = std::move(spectrum);
    model.scale = 1.0 / amax;
    a *= model.scale;
    model.a_matrix = std::move(a);
    model.a_eigenvalues = eig.values * model.scale;
    model.a_eigenvectors = std::move(eig.vectors);
    return model;
}

inline TailoredModel build_observable(const ModelSpec& spec, const SpectralEnvelope& envelope) {
    return build_observable(spec, sample_spectrum(spec), envelope);
}

/// Semicircle law on [-1, 1].
inline double semicircle_cdf(double x) {
    if (x <= -1.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return 0.5 + (x * std::sqrt(1.0 - x * x) + std::asin(x)) / std::numbers::pi;
}

inline double semicircle_density(double x) {
    return std::abs(x) >= 1.0 ? 0.0 : 2.0 / std::numbers::pi * std::sqrt(1.0 - x * x);
}

/// Kolmogorov distance between the empirical CDF of the values and the semicircle CDF.
inline double kolmogorov_distance_to_semicircle(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = semicircle_cdf(v[i]);
        d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
    }
    return d;
}

struct SpectralReport {
    double kolmogorov_distance = 0.0;
    std::vector<double> bin_edges;     // n_bins + 1 edges over [-1, 1]
    std::vector<std::size_t> counts;
    std::vector<double> semicircle;    // expected counts per bin
};

inline SpectralReport spectral_statistics(std::span<const double> a_eigenvalues, std::size_t n_bins = 50) {
    SpectralReport rep;
    rep.kolmogorov_distance = kolmogorov_distance_to_semicircle(a_eigenvalues);
    rep.bin_edges.resize(n_bins + 1);
    rep.counts.assign(n_bins, 0);
    rep.semicircle.resize(n_bins);
    const double w = 2.0 / static_cast<double>(n_bins);
    for (std::size_t b = 0; b <= n_bins; ++b) rep.bin_edges[b] = -1.0 + w * static_cast<double>(b);
    for (double x : a_eigenvalues) {
        auto b = static_cast<std::size_t>(std::clamp((x + 1.0) / w, 0.0, static_cast<double>(n_bins) - 0.5));
        ++rep.counts[b];
    }
    const double n = static_cast<double>(a_eigenvalues.size());
    for (std::size_t b = 0; b < n_bins; ++b)
        rep.semicircle[b] = n * (semicircle_cdf(rep.bin_edges[b + 1]) - semicircle_cdf(rep.bin_edges[b]));
    return rep;
}

inline SpectralReport spectral_statistics(const TailoredModel& model, std::size_t n_bins = 50) {
    return spectral_statistics(std::span<const double>(model.a_eigenvalues.data(), static_cast<std::size_t>(model.a_eigenvalues.size())), n_bins);
}

}  // namespace relaxlab
