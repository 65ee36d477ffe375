#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "relaxlab/ensemble.hpp"
#include "relaxlab/fitting.hpp"
#include "relaxlab/perturbation.hpp"

using namespace relaxlab;

namespace {

double h0_norm(std::size_t n, std::uint64_t seed) {
    ModelSpec s;
    s.dimension = n;
    s.seed = seed;
    return std::sqrt(sample_spectrum(s).sum_of_squares());
}

}  // namespace

TEST(Perturbation, FullBandMasksNothing) {
    const auto a = oracle::semicircle_quantiles(200);
    const auto p = build_perturbation(a, 100.0, 2.0, 0.029, 3);
    EXPECT_EQ((p.v_matrix.array() == 0.0).count(), 0);
}

TEST(Perturbation, ExactBandStructure) {
    const auto a = oracle::semicircle_quantiles(300);
    const auto p = build_perturbation(a, 100.0, 0.5, 0.029, 3);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j) {
            const double v = p.v_matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (std::abs(a[i] - a[j]) > 0.5) ASSERT_EQ(v, 0.0);
            else ASSERT_NE(v, 0.0);
        }
    EXPECT_EQ(p.v_matrix, p.v_matrix.transpose());
}

TEST(Perturbation, TinyBandKeepsAlmostNothing) {
    const std::size_t n = 4000;
    const auto a = oracle::semicircle_quantiles(n);
    const auto p = build_perturbation(a, h0_norm(n, 1), 1e-6, 0.029, 1);
    const double offdiag_nonzero = static_cast<double>((p.v_matrix.array() != 0.0).count() - static_cast<Eigen::Index>(n));
    EXPECT_LE(offdiag_nonzero / (static_cast<double>(n) * (n - 1)), 1e-3);
}

TEST(Perturbation, StrengthMatchesEpsilon) {
    const std::size_t n = 500;
    const double h0 = h0_norm(n, 2);
    const auto a = oracle::semicircle_quantiles(n);
    for (double mu : {0.1, 0.5, 1.0, 2.0}) {
        const auto p = build_perturbation(a, h0, mu, 0.029, 4);
        EXPECT_NEAR(p.v_matrix.norm() / h0, 0.029, 0.029 * 1e-12) << mu;
    }
}

TEST(Perturbation, DomainErrors) {
    const auto a = oracle::semicircle_quantiles(10);
    EXPECT_THROW(build_perturbation(a, 1.0, 0.0, 0.029, 1), DomainError);
    EXPECT_THROW(build_perturbation(a, 1.0, 2.5, 0.029, 1), DomainError);
    EXPECT_THROW(build_perturbation(a, 1.0, 1.0, 0.0, 1), DomainError);
    std::vector<double> unsorted(a.rbegin(), a.rend());
    EXPECT_THROW(build_perturbation(unsorted, 1.0, 1.0, 0.029, 1), ValidationError);
    EXPECT_THROW(band_pair_integral(0.0, 10), DomainError);
}

TEST(Perturbation, SameSeedNestsAcrossBands) {
    const auto a = oracle::semicircle_quantiles(200);
    const auto wide = build_perturbation(a, 50.0, 2.0, 0.029, 8);
    const auto narrow = build_perturbation(a, 50.0, 0.3, 0.029, 8);
    for (Eigen::Index i = 0; i < 200; ++i)
        for (Eigen::Index j = 0; j < 200; ++j)
            if (narrow.v_matrix(i, j) != 0.0) ASSERT_NEAR(narrow.v_matrix(i, j) / narrow.sigma, wide.v_matrix(i, j) / wide.sigma, 1e-14);
}

TEST(SigmaEstimate, ClosedFormAtFullBand) {
    const double est = sigma_estimate(0.029, 2.0, 4000);
    EXPECT_NEAR(est, 30.0 * 0.029 / std::sqrt(4000.0), 1e-9);
    EXPECT_NEAR(est, 0.01376, 1e-5);
    EXPECT_NEAR(est / (30.0 * 0.029 / std::sqrt(4000.0)), 1.0, 0.01);
}

TEST(SigmaEstimate, ScalingAndMonotonicity) {
    EXPECT_NEAR(sigma_estimate(0.029, 1.0, 1000) / sigma_estimate(0.029, 1.0, 4000), 2.0, 1e-9);
    double prev = 1e300;
    for (double mu : {0.05, 0.1, 0.3, 0.5, 1.0, 1.5, 2.0}) {
        const double s = sigma_estimate(0.029, mu, 4000);
        EXPECT_LT(s, prev) << mu;
        prev = s;
    }
}

TEST(SigmaEstimate, AlternativePrefactorDiffersBySixNOverPi) {
    const std::size_t n = 4000;
    EXPECT_NEAR(sigma_estimate(0.029, 2.0, n) / sigma_estimate_alternative_prefactor(0.029, 2.0, n),
                6.0 * n / std::numbers::pi, 1e-6 * n);
}

TEST(Calibration, RatioNearOneAndFlatAcrossBands) {
    const std::size_t n = 4000;
    const auto a = oracle::semicircle_quantiles(n);
    const double h0 = h0_norm(n, 1);
    std::vector<double> ratios;
    for (double mu : {0.1, 0.5, 1.0, 2.0}) {
        const auto p = build_perturbation(a, h0, mu, 0.029, 17);
        ratios.push_back(p.sigma / sigma_estimate(0.029, mu, n));
    }
    EXPECT_GE(ratios.back(), 0.9);
    EXPECT_LE(ratios.back(), 1.1);
    double mean = 0.0, var = 0.0;
    for (double r : ratios) mean += r / 4.0;
    for (double r : ratios) var += (r - mean) * (r - mean) / 3.0;
    EXPECT_LE(std::sqrt(var) / mean, 0.1);
}

TEST(Calibration, ReportHasOneRowPerBand) {
    ModelSpec s;
    s.dimension = 120;
    s.seed = 2;
    const auto m = build_observable(s, envelope_for(TargetDynamics::exponential(15.0)));
    const std::vector<double> mus{1.0};
    const auto rows = calibration_report(m, 0.029, mus, 5);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rows[0].mu, 1.0);
    EXPECT_DOUBLE_EQ(rows[0].ratio, rows[0].sigma_exact / rows[0].sigma_estimate);
}

TEST(Commutator, GrowsWithBandWidth) {
    const std::size_t n = 300;
    const auto a = oracle::semicircle_quantiles(n);
    const double h0 = h0_norm(n, 1);
    double prev = -1.0;
    for (double mu : {0.1, 0.5, 1.0, 2.0}) {
        std::vector<double> norms;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) norms.push_back(commutator_norm(build_perturbation(a, h0, mu, 0.029, seed), a));
        const double med = median(norms);
        EXPECT_GE(med, prev) << mu;
        prev = med;
    }
}

TEST(Commutator, DiagonalPerturbationCommutes) {
    const auto a = oracle::semicircle_quantiles(500);
    const auto p = build_perturbation(a, 10.0, 1e-9, 0.029, 1);
    EXPECT_NEAR(commutator_norm(p, a), 0.0, 1e-12);
}
