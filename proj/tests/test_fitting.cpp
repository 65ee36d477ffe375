#include <gtest/gtest.h>

#include <cmath>

#include "relaxlab/fitting.hpp"
#include "relaxlab/targets.hpp"

using namespace relaxlab;

namespace {

TimeSeries target_series(const TargetDynamics& t, const TimeGrid& g) {
    std::vector<double> v(g.n_steps);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = evaluate_target(t, g.t(i));
    return TimeSeries(g, std::move(v));
}

const TimeGrid kGrid = TimeGrid::covering(0.1, 90.0);
const FitWindow kWindow{0.0, 60.0};

}  // namespace

TEST(Fit, IdenticalPairIsDegenerate) {
    const auto a = target_series(TargetDynamics::gaussian(15.0), kGrid);
    const auto r = fit_params(a, a, std::nullopt, kWindow);
    EXPECT_EQ(r.params.alpha, 0.0);
    EXPECT_LE(r.rms_residual, 1e-12);
    EXPECT_TRUE(r.degenerate);
}

TEST(Fit, PlainDampingGivesFullWeight) {
    const auto a = target_series(TargetDynamics::gaussian(15.0), kGrid);
    std::vector<double> v(a.values);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::exp(-0.027 * a.t(i));
    const auto r = fit_params(a, TimeSeries(kGrid, v), std::nullopt, kWindow);
    EXPECT_NEAR(r.params.alpha, 0.027, 0.002);
    EXPECT_NEAR(r.params.beta, 1.0, 0.02);
    EXPECT_LE(r.rms_residual, 1e-3);
}

TEST(Fit, RecoversSyntheticParameters) {
    for (auto t : {TargetDynamics::gaussian(15.0), TargetDynamics::linear(15.0), TargetDynamics::damped_oscillation(15.0)}) {
        const auto a = target_series(t, kGrid);
        const auto at = predict_perturbed(a, {0.05, 0.3});
        const auto r = fit_params(a, at, std::nullopt, kWindow);
        EXPECT_NEAR(r.params.alpha, 0.05, 0.004) << t.name();
        EXPECT_NEAR(r.params.beta, 0.3, 0.05) << t.name();
        EXPECT_FALSE(r.degenerate) << t.name();
    }
}

TEST(Fit, ExponentialCannotIdentifyNarrowBandParameters) {
    // under beta = 0 the exponential does not move, so alpha is unidentifiable
    const auto a = target_series(TargetDynamics::exponential(15.0), kGrid);
    const auto at = predict_perturbed(a, {0.05, 0.0});
    EXPECT_TRUE(fit_params(a, at, std::nullopt, kWindow).degenerate);
}

TEST(Fit, FixedAlphaFitsBetaOnly) {
    const auto a = target_series(TargetDynamics::linear(15.0), kGrid);
    const auto at = predict_perturbed(a, {0.027, 0.6});
    const auto r = fit_params(a, at, 0.027, kWindow);
    EXPECT_EQ(r.params.alpha, 0.027);
    EXPECT_NEAR(r.params.beta, 0.6, 0.01);
    EXPECT_THROW(fit_params(a, at, -0.1, kWindow), ValidationError);
}

TEST(Fit, Errors) {
    const auto a = target_series(TargetDynamics::linear(15.0), kGrid);
    const auto b = target_series(TargetDynamics::linear(15.0), TimeGrid::covering(0.1, 60.0));
    EXPECT_THROW(fit_params(a, b), DomainError);
    EXPECT_THROW(fit_params(a, a, std::nullopt, FitWindow{10.0, 5.0}), ValidationError);
}

TEST(Fit, MedianHelper) {
    EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
    EXPECT_THROW(median({}), ValidationError);
}

TEST(BetaCurve, OneRowPerBand) {
    const auto a = target_series(TargetDynamics::gaussian(15.0), kGrid);
    std::vector<std::vector<DynamicsPair>> samples{{{a, predict_perturbed(a, {0.027, 0.2})}, {a, predict_perturbed(a, {0.027, 0.4})}},
                                                   {{a, predict_perturbed(a, {0.027, 1.0})}}};
    const std::vector<double> mus{0.5, 2.0};
    const auto rows = beta_curve(mus, samples, 0.027, kWindow);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(rows[0].beta, 0.3, 0.01);
    EXPECT_EQ(rows[0].per_sample_beta.size(), 2u);
    EXPECT_NEAR(rows[1].beta, 1.0, 0.01);
    const std::vector<double> one{1.0};
    EXPECT_THROW(beta_curve(one, samples, 0.027), ValidationError);
}
