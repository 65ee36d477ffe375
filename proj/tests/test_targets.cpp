#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "relaxlab/targets.hpp"

using namespace relaxlab;

TEST(Targets, FrozenValues) {
    EXPECT_NEAR(evaluate_target(TargetDynamics::exponential(15.0), 15.0), 0.5, 1e-15);
    EXPECT_EQ(evaluate_target(TargetDynamics::linear(15.0), 40.0), 0.0);
    EXPECT_NEAR(evaluate_target(TargetDynamics::recurrence(2.0, 20.0), 20.0), 0.5 + std::exp(-10.0), 1e-15);
}

TEST(Targets, AllStartAtOneAndAreEven) {
    for (auto t : {TargetDynamics::exponential(15.0), TargetDynamics::damped_oscillation(15.0), TargetDynamics::linear(15.0),
                   TargetDynamics::gaussian(15.0)}) {
        EXPECT_DOUBLE_EQ(evaluate_target(t, 0.0), 1.0) << t.name();
        for (double x : {0.3, 7.0, 15.0, 44.4}) EXPECT_DOUBLE_EQ(evaluate_target(t, x), evaluate_target(t, -x)) << t.name();
    }
    const auto r = TargetDynamics::recurrence(2.0, 20.0);
    EXPECT_DOUBLE_EQ(evaluate_target(r, 19.0), evaluate_target(r, -19.0));
}

TEST(Targets, HalfDecayAtTau) {
    // every reference shape except the oscillation passes 1/2 at t = tau
    EXPECT_NEAR(evaluate_target(TargetDynamics::linear(15.0), 15.0), 0.5, 1e-15);
    EXPECT_NEAR(evaluate_target(TargetDynamics::gaussian(15.0), 15.0), 0.5, 1e-15);
}

TEST(Targets, InvalidInputsThrow) {
    EXPECT_THROW(TargetDynamics::exponential(0.0).validate(), ValidationError);
    EXPECT_THROW(TargetDynamics::recurrence(2.0, 5.0).validate(), ValidationError);
    EXPECT_THROW(TargetDynamics::tabulated({{0.0, 0.9}, {1.0, 0.5}}).validate(), ValidationError);
    EXPECT_THROW(TargetDynamics::tabulated({{0.0, 1.0}, {0.0, 0.5}}).validate(), ValidationError);
    EXPECT_THROW(evaluate_target(TargetDynamics::exponential(15.0), std::nan("")), DomainError);
    EXPECT_THROW(evaluate_target(TargetDynamics::tabulated({{0.0, 1.0}, {2.0, 0.0}}), 3.0), RangeError);
    EXPECT_THROW(target_kind_from_string("sawtooth"), ValidationError);
}

TEST(Targets, TabulatedInterpolates) {
    const auto t = TargetDynamics::tabulated({{0.0, 1.0}, {2.0, 0.0}});
    EXPECT_DOUBLE_EQ(evaluate_target(t, 0.5), 0.75);
    EXPECT_DOUBLE_EQ(evaluate_target(t, -1.5), 0.25);
}

TEST(Envelope, LorentzianRatio) {
    const auto env = envelope_for(TargetDynamics::exponential(15.0));
    const double lam = std::numbers::ln2 / 15.0;
    EXPECT_NEAR(detail::closed_form_envelope(TargetDynamics::exponential(15.0), 0.0) /
                    detail::closed_form_envelope(TargetDynamics::exponential(15.0), lam),
                2.0, 1e-12);
    EXPECT_NEAR(env.at(0.0) / env.at(lam), 2.0, 0.02);  // linear interpolation across a sharp peak
}

TEST(Envelope, TriangleZero) {
    const auto lin = TargetDynamics::linear(15.0);
    EXPECT_NEAR(detail::closed_form_envelope(lin, std::numbers::pi / 15.0), 0.0, 1e-12);
}

TEST(Envelope, EvenGridAndNonNegative) {
    for (auto t : {TargetDynamics::exponential(15.0), TargetDynamics::damped_oscillation(15.0), TargetDynamics::linear(15.0),
                   TargetDynamics::gaussian(15.0), TargetDynamics::recurrence(2.0, 20.0)}) {
        const auto env = envelope_for(t, 30.0, 2048);
        ASSERT_EQ(env.values.size(), 2048u);
        for (std::size_t k = 0; k < env.values.size(); ++k) {
            EXPECT_GE(env.values[k], 0.0);
            EXPECT_EQ(env.values[k], env.values[env.values.size() - 1 - k]);
        }
    }
}

TEST(Envelope, InverseTransformRecoversTarget) {
    for (auto t : {TargetDynamics::exponential(15.0), TargetDynamics::damped_oscillation(15.0), TargetDynamics::linear(15.0),
                   TargetDynamics::gaussian(15.0)}) {
        const auto env = envelope_for(t);
        double worst = 0.0;
        for (double x = 0.0; x <= 60.0; x += 0.5) worst = std::max(worst, std::abs(inverse_cosine_transform(env, x) - evaluate_target(t, x)));
        // the Lorentzian tail beyond the cutoff costs about 2 lambda / (pi omega_max)
        EXPECT_LE(worst, 0.01) << t.name();
    }
}

TEST(Envelope, RecurrenceTransformIsPositiveDefiniteEnough) {
    const auto t = TargetDynamics::recurrence(2.0, 20.0);
    const auto env = envelope_for(t, 70.0, 16384);
    EXPECT_LE(env.clipped_mass, 1e-3 * env.total_mass);
    for (double x : {0.0, 1.0, 10.0, 20.0, 22.0}) EXPECT_NEAR(inverse_cosine_transform(env, x), evaluate_target(t, x), 0.02) << x;
}

TEST(Envelope, TabulatedMatchesClosedForm) {
    // a finely tabulated Gaussian goes through the numeric transform path
    const auto g = TargetDynamics::gaussian(15.0);
    std::vector<std::pair<double, double>> table;
    for (int i = 0; i <= 1200; ++i) table.emplace_back(0.1 * i, evaluate_target(g, 0.1 * i));
    const auto num = envelope_for(TargetDynamics::tabulated(table), 2.0, 257);
    const auto ref = envelope_for(g, 2.0, 257);
    for (std::size_t k = 0; k < num.values.size(); ++k) EXPECT_NEAR(num.values[k], ref.values[k], 1e-3 * ref.peak());
}

TEST(Envelope, BadArguments) {
    EXPECT_THROW(envelope_for(TargetDynamics::exponential(15.0), 0.0), ValidationError);
    EXPECT_THROW(envelope_for(TargetDynamics::exponential(15.0), 30.0, 10), ValidationError);
}
