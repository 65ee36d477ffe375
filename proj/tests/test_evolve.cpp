#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "oracles.hpp"
#include "relaxlab/ensemble.hpp"
#include "relaxlab/evolve.hpp"
#include "relaxlab/perturbation.hpp"

using namespace relaxlab;

namespace {

std::shared_ptr<const TailoredModel> small_model(std::size_t n, std::uint64_t seed, TargetDynamics t = TargetDynamics::exponential(15.0)) {
    ModelSpec s;
    s.dimension = n;
    s.seed = seed;
    s.target = t;
    return std::make_shared<const TailoredModel>(build_observable(s, envelope_for(t)));
}

std::vector<double> sample_times(const TimeGrid& g, std::size_t stride) {
    std::vector<double> out;
    for (std::size_t i = 0; i < g.n_steps; i += stride) out.push_back(g.t(i));
    return out;
}

Perturbation zero_perturbation(std::size_t n) {
    Perturbation p;
    p.epsilon = 0.0;
    p.v_matrix = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    return p;
}

}  // namespace

TEST(Autocorrelation, TwoLevelCosine) {
    const std::vector<double> e{-1.0, 1.0};
    Matrix a(2, 2);
    a << 0.0, 1.0, 1.0, 0.0;
    const auto c = autocorrelation_series(e, a, TimeGrid::covering(0.1, 20.0));
    for (std::size_t i = 0; i < c.size(); ++i) ASSERT_NEAR(c[i], std::cos(2.0 * c.t(i)), 1e-9) << c.t(i);
}

TEST(Autocorrelation, BinnedMatchesDirectSum) {
    for (std::size_t n : {64u, 256u, 512u}) {
        const auto m = small_model(n, n, TargetDynamics::damped_oscillation(15.0));
        const TimeGrid g = TimeGrid::covering(0.1, 90.0);
        const auto c = autocorrelation_series(*m, g);
        const auto times = sample_times(g, 37);
        const auto ref = oracle::autocorrelation(m->spectrum.eigenvalues, m->a_matrix, times);
        for (std::size_t k = 0; k < times.size(); ++k) ASSERT_NEAR(c[k * 37], ref[k], 1e-3) << "n=" << n << " t=" << times[k];
    }
}

TEST(Autocorrelation, UnitStartBoundedAndEven) {
    const auto m = small_model(300, 5);
    const auto c = autocorrelation_series(*m, TimeGrid::covering(0.1, 90.0));
    EXPECT_DOUBLE_EQ(c[0], 1.0);
    for (double v : c.values) EXPECT_LE(std::abs(v), 1.0 + 1e-9);
    const std::vector<double> ts{-31.7, -3.0, 3.0, 31.7};
    const auto at = autocorrelation_at(m->spectrum.eigenvalues, m->a_matrix, ts);
    EXPECT_NEAR(at[0], at[3], 1e-12);
    EXPECT_NEAR(at[1], at[2], 1e-12);
    EXPECT_NEAR(at[2], c[30], 1e-6);
}

TEST(Assemble, ZeroPerturbationLeavesDynamicsAlone) {
    const auto m = small_model(200, 3);
    const auto sys = assemble(m, zero_perturbation(200));
    for (Eigen::Index i = 0; i < 200; ++i) ASSERT_NEAR(sys.h_eigenvalues(i), m->spectrum.eigenvalues[static_cast<std::size_t>(i)], 1e-11);
    const TimeGrid g = TimeGrid::covering(0.1, 60.0);
    const auto c = autocorrelation_series(*m, g);
    const auto ct = autocorrelation_series(sys, g);
    for (std::size_t i = 0; i < c.size(); ++i) ASSERT_NEAR(c[i], ct[i], 1e-9);
    const auto f = fidelity_series(sys, g);
    // every weight sits up to half a bin from its center; |1 + ix - x^2/2|^2 = 1 + x^4/4
    const double x = 0.5 * FrequencyBins(-120.0, 120.0, 60.0).width() * 60.0;
    for (double v : f.values) ASSERT_NEAR(v, 1.0, 0.25 * std::pow(x, 4));
}

TEST(Assemble, TraceIdentityAndWeakShift) {
    const auto m = small_model(400, 6);
    const auto p = build_perturbation(*m, 1.0, 0.029, 9);
    const auto sys = assemble(m, p);
    double sum_e = 0.0;
    for (double e : m->spectrum.eigenvalues) sum_e += e;
    EXPECT_NEAR(sys.h_eigenvalues.sum(), sum_e + p.v_matrix.trace(), 1e-9);
    EXPECT_DOUBLE_EQ(sys.trace_v, p.v_matrix.trace());
    // Weyl: sorted eigenvalues move by at most the operator norm of V
    const double shift = (sys.h_eigenvalues - Eigen::Map<const Vector>(m->spectrum.eigenvalues.data(), 400)).cwiseAbs().maxCoeff();
    EXPECT_LE(shift, p.v_matrix.norm());
    EXPECT_LT(shift, 0.05 * 60.0);
}

TEST(Expectation, IdenticalToAutocorrelation) {
    const auto m = small_model(300, 2);
    const TimeGrid g = TimeGrid::covering(0.1, 90.0);
    const auto c = autocorrelation_series(*m, g);
    for (double delta : {0.3, -0.7, 0.99}) {
        const auto x = expectation_from_state(*m, delta, g);
        for (std::size_t i = 0; i < c.size(); ++i) ASSERT_NEAR(x[i], c[i], 1e-12) << delta;
    }
    const auto sys = assemble(m, build_perturbation(*m, 0.5, 0.029, 3));
    const auto ct = autocorrelation_series(sys, g);
    const auto xt = expectation_from_state(sys, 0.2, g);
    for (std::size_t i = 0; i < ct.size(); ++i) ASSERT_NEAR(xt[i], ct[i], 1e-12);
}

TEST(Expectation, MatchesExplicitDensityMatrix) {
    const auto m = small_model(60, 8);
    const double delta = 0.4;
    const auto n = static_cast<Eigen::Index>(60);
    const Matrix rho = (Matrix::Identity(n, n) + delta * m->a_matrix) / 60.0;
    const TimeGrid g = TimeGrid::covering(0.5, 40.0);
    const auto x = expectation_from_state(*m, delta, g);
    const auto times = sample_times(g, 7);
    const auto ref = oracle::expectation(m->spectrum.eigenvalues, m->a_matrix, rho, times);
    for (std::size_t k = 0; k < times.size(); ++k) EXPECT_NEAR(x[k * 7], ref[k], 1e-6);
}

TEST(Expectation, InvalidResponseStrength) {
    const auto m = small_model(40, 1);
    const TimeGrid g = TimeGrid::covering(0.1, 5.0);
    EXPECT_THROW(expectation_from_state(*m, 0.0, g), DomainError);
    EXPECT_THROW(expectation_from_state(*m, 1.5, g), DomainError);
    EXPECT_THROW(response_pure_state(*m, -1.0, 1), DomainError);
}

TEST(Expectation, TypicalPureStateFollowsAutocorrelation) {
    const std::size_t n = 1500;
    const auto m = small_model(n, 4);
    const TimeGrid g = TimeGrid::covering(0.5, 45.0);
    const auto c = autocorrelation_series(*m, g);
    const double delta = 0.9;
    // relative fluctuation of <psi|A(t)|psi> against delta Tr(A^2)/N is of order 1/(delta sqrt(N))
    const double tol = 6.0 / (delta * std::sqrt(static_cast<double>(n)));
    for (std::uint64_t seed : {1u, 2u}) {
        const Vector psi = response_pure_state(*m, delta, seed);
        EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
        const auto x = expectation_from_pure_state(m->spectrum.eigenvalues, m->a_matrix, psi, g);
        double worst = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(x[i] - c[i]));
        EXPECT_LE(worst, tol) << seed;
    }
}

TEST(Fidelity, MatchesPropagationOracle) {
    const auto m = small_model(120, 12);
    const auto p = build_perturbation(*m, 2.0, 0.05, 4);
    const auto sys = assemble(m, p);
    const TimeGrid g = TimeGrid::covering(0.1, 60.0);
    const auto f = fidelity_series(sys, g);
    const Matrix& q = m->a_eigenvectors;
    const auto n = static_cast<Eigen::Index>(120);
    const Eigen::Map<const Vector> eps(m->spectrum.eigenvalues.data(), n);
    const Matrix h = Matrix(eps.asDiagonal()) + q * p.v_matrix * q.transpose();
    const auto times = sample_times(g, 29);
    const auto ref = oracle::fidelity(m->spectrum.eigenvalues, h, times);
    for (std::size_t k = 0; k < times.size(); ++k) ASSERT_NEAR(f[k * 29], ref[k], 1e-3) << times[k];
    for (double v : f.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-9);
    }
}

TEST(RateFit, ExactExponential) {
    const TimeGrid g = TimeGrid::covering(0.1, 60.0);
    std::vector<double> v(g.n_steps);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(-0.5 * g.t(i));
    EXPECT_NEAR(fit_exponential_rate(TimeSeries(g, v), 0.0, 60.0), 0.5, 1e-12);
    std::fill(v.begin(), v.end(), 0.7);
    EXPECT_NEAR(fit_exponential_rate(TimeSeries(g, v), 0.0, 60.0), 0.0, 1e-14);
}

TEST(RateFit, NoisyExponential) {
    const TimeGrid g = TimeGrid::covering(0.1, 60.0);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<double> v(g.n_steps);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(-0.029 * g.t(i)) * (1.0 + noise(rng));
    EXPECT_NEAR(fit_exponential_rate(TimeSeries(g, v), 0.0, 60.0), 0.029, 0.003);
}

TEST(RateFit, Errors) {
    const TimeGrid g = TimeGrid::covering(1.0, 10.0);
    std::vector<double> v(g.n_steps, 1.0);
    v[4] = 0.0;
    EXPECT_THROW(fit_exponential_rate(TimeSeries(g, v), 0.0, 10.0), DomainError);
    EXPECT_THROW(fit_exponential_rate(TimeSeries(g, v), 0.2, 0.8), ValidationError);
}
