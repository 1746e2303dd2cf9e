#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kolearn/bounds.hpp"

using namespace kolearn;
using bounds::Box;
using bounds::ErrorBudget;
using bounds::FunctionPair;
using bounds::LipschitzSpec;
using bounds::OuterLayerSpec;

// ---------------------------------------------------------------------------
// The sigmoid inequality residual

TEST(InequalityResidual, ZeroPerturbationIsExactlyZero) {
    for (double g : {0.5, -0.5, 1.0, -3.0})
        for (double x : {-7.0, -1.0, 0.0, 2.5, 9.0})
            EXPECT_EQ(bounds::sigmoid_inequality_residual(g, x, 0.0), 0.0);
}

TEST(InequalityResidual, KnownValueFromHighPrecisionOracle) {
    // g = 1, x = 0, e = 4: s(4) - 0.5 - 1.0, oracle in long double.
    const long double s4 = 1.0L / (1.0L + std::exp(-4.0L));
    const double expect = static_cast<double>(s4 - 0.5L - 1.0L);
    EXPECT_NEAR(bounds::sigmoid_inequality_residual(1.0, 0.0, 4.0), expect, 1e-15);
    EXPECT_NEAR(bounds::sigmoid_inequality_residual(1.0, 0.0, 4.0), -0.5180, 5e-5);
}

TEST(InequalityResidual, SignFlipMirrorSymmetry) {
    // Normalized by |g|, the negative-weight surface is the positive-weight
    // surface mirrored through (x, e) -> (-x, -e).
    for (double g : {0.5, 1.0, 3.0})
        for (double x : {-2.0, -0.3, 0.0, 1.7})
            for (double e : {-3.0, -0.1, 0.2, 4.0}) {
                const double neg =
                    bounds::sigmoid_inequality_residual(-g, x, e) / g;
                const double mirrored =
                    bounds::sigmoid_inequality_residual(g, -x, -e) / g;
                EXPECT_NEAR(neg, mirrored, 1e-15);
            }
}

TEST(InequalityResidual, NonPositiveOnRandomPoints) {
    Rng rng(404);
    for (int i = 0; i < 10000; ++i) {
        const double g = rng.uniform(-5.0, 5.0);
        const double x = rng.uniform(-15.0, 15.0);
        const double e = rng.uniform(-15.0, 15.0);
        EXPECT_LE(bounds::sigmoid_inequality_residual(g, x, e), 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Composed bounds

TEST(ComposedBoundSigmoid, ExactInnerModelLeavesOuterBudget) {
    const OuterLayerSpec outer{{1.0, 2.0}, 0.0};
    const double eps = 0.125;
    EXPECT_EQ(bounds::composed_bound_sigmoid(outer, {{0.0, 0.0}, eps}), eps);
}

TEST(ComposedBoundSigmoid, HandWorkedExample) {
    const OuterLayerSpec outer{{1.0, -2.0}, 0.0};
    const ErrorBudget budget{{0.1, 0.2}, 0.05};
    // 1*0.25*0.1 + 2*0.25*0.2 + 0.05
    EXPECT_NEAR(bounds::composed_bound_sigmoid(outer, budget), 0.175, 1e-15);
}

TEST(ComposedBoundSigmoid, HomogeneousInOuterWeights) {
    const ErrorBudget budget{{0.3, 0.7, 0.1}, 0.2};
    const OuterLayerSpec outer{{1.0, -0.5, 2.0}, 0.4};
    const double base = bounds::composed_bound_sigmoid(outer, budget) - budget.eps_g;
    for (double c : {-3.0, 0.5, 7.0}) {
        OuterLayerSpec scaled = outer;
        for (double& g : scaled.g_weights) g *= c;
        const double got = bounds::composed_bound_sigmoid(scaled, budget) - budget.eps_g;
        EXPECT_NEAR(got, std::abs(c) * base, 1e-12);
    }
}

TEST(ComposedBoundSigmoid, MonotoneInEveryBudgetEntry) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + rng.next_below(4);
        OuterLayerSpec outer;
        for (std::size_t j = 0; j < m; ++j)
            outer.g_weights.push_back(rng.uniform(-2.0, 2.0));
        ErrorBudget budget;
        for (std::size_t j = 0; j < m; ++j)
            budget.eps_u.push_back(rng.uniform(0.0, 1.0));
        budget.eps_g = rng.uniform(0.0, 1.0);
        const double base = bounds::composed_bound_sigmoid(outer, budget);

        ErrorBudget larger = budget;
        const std::size_t which = rng.next_below(m + 1);
        if (which == m)
            larger.eps_g += rng.uniform(0.0, 0.5);
        else
            larger.eps_u[which] += rng.uniform(0.0, 0.5);
        EXPECT_GE(bounds::composed_bound_sigmoid(outer, larger), base);
    }
}

TEST(ComposedBoundSigmoid, OuterBudgetIsExactlyAdditive) {
    const OuterLayerSpec outer{{0.7, -1.3, 2.1}, 0.0};
    const ErrorBudget budget{{0.11, 0.07, 0.29}, 0.0};
    ErrorBudget with_outer = budget;
    with_outer.eps_g = 0.4375;
    EXPECT_EQ(bounds::composed_bound_sigmoid(outer, with_outer),
              bounds::composed_bound_sigmoid(outer, budget) + 0.4375);
}

TEST(ComposedBoundSigmoid, RejectsMismatchedSizes) {
    EXPECT_THROW(
        bounds::composed_bound_sigmoid(OuterLayerSpec{{1.0}, 0.0}, {{0.1, 0.2}, 0.0}),
        DimensionMismatch);
}

TEST(ComposedBoundLipschitz, ConstantOuterLeavesOuterBudget) {
    EXPECT_EQ(bounds::composed_bound_lipschitz({0.0}, {{0.3, 0.4}, 0.07}), 0.07);
}

TEST(ComposedBoundLipschitz, HandWorkedExample) {
    EXPECT_EQ(bounds::composed_bound_lipschitz({2.0}, {{0.5, 0.5}, 0.0}), 2.0);
}

TEST(ComposedBoundLipschitz, PerTermFormMatchesSigmoidForm) {
    // With l_g set per term to |g_j| * l_s and the terms summed, both bounds
    // agree.
    const OuterLayerSpec outer{{1.4, -0.6, 3.0}, 0.0};
    const ErrorBudget budget{{0.2, 0.05, 0.4}, 0.3};
    double per_term_sum = 0.0;
    for (std::size_t j = 0; j < outer.g_weights.size(); ++j) {
        const LipschitzSpec spec{std::abs(outer.g_weights[j]) * nn::kSigmoidSlopeBound};
        per_term_sum +=
            bounds::composed_bound_lipschitz(spec, {{budget.eps_u[j]}, 0.0});
    }
    EXPECT_NEAR(per_term_sum + budget.eps_g,
                bounds::composed_bound_sigmoid(outer, budget), 1e-15);
}

// ---------------------------------------------------------------------------
// Grid sweep

TEST(GridSweep, InequalityHoldsForBothSigns) {
    const auto result = bounds::sweep_inequality_grid({1.0, -1.0}, -10.0, 10.0, -10.0,
                                                      10.0, 0.05);
    EXPECT_LE(result.max_residual, 1e-12);
    EXPECT_EQ(result.per_g_max.size(), 2u);
}

TEST(GridSweep, ZeroPerturbationLineIsExactOnGrid) {
    // The snapped grid contains e = 0 exactly; the residual there is zero.
    const auto result =
        bounds::sweep_inequality_grid({2.0}, -1.0, 1.0, -1.0, 1.0, 0.05);
    EXPECT_LE(result.max_residual, 0.0);
    EXPECT_GE(result.max_residual, 0.0);  // the e = 0 line attains exactly 0
}

TEST(GridSweep, CsvDumpHasHeaderAndZeroLine) {
    const auto dir = std::filesystem::temp_directory_path() / "kolearn_sweep_test";
    std::filesystem::remove_all(dir);
    bounds::sweep_inequality_grid({1.0}, -0.2, 0.2, -0.2, 0.2, 0.1, dir);
    std::ifstream csv(dir / "inequality_g+1.csv");
    ASSERT_TRUE(csv.good());
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "x,e,normalized_residual");
    bool saw_zero_line = false;
    for (std::string line; std::getline(csv, line);) {
        if (line == "0,0,0") saw_zero_line = true;
    }
    EXPECT_TRUE(saw_zero_line);
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Empirical verification

namespace {

FunctionPair exact_pair() {
    OuterLayerSpec outer{{1.0, -0.5}, 0.2};
    nn::MlpModel inner = nn::MlpModel::make({2, 4, 2}, 5);
    FunctionPair fp;
    fp.input_dim = 2;
    fp.inner_dim = 2;
    fp.approx_inner = [inner](const Vec& x) { return inner.forward(x); };
    fp.true_inner = fp.approx_inner;
    fp.approx_outer = outer;
    fp.true_outer = [outer](const Vec& y) { return outer(y); };
    return fp;
}

}  // namespace

TEST(VerifyBound, ExactApproximationsGiveZeroDeviation) {
    const FunctionPair fp = exact_pair();
    const Box domain{{-2.0, -2.0}, {2.0, 2.0}};
    const auto report = bounds::verify_bound_empirically(fp, domain, 5000, 3);
    EXPECT_EQ(report.empirical_max_dev, 0.0);
    EXPECT_GE(report.theoretical_bound, 0.0);
    EXPECT_FALSE(report.falsified);
    EXPECT_EQ(report.eps_g, 0.0);
}

TEST(VerifyBound, KnownOuterPerturbedInnerRespectsSumBound) {
    // The outer stage is known exactly (a sigmoid layer); only the inner
    // stage is approximated. Deviation must stay below the sum-term bound.
    auto sp = bounds::random_function_pair(2025);
    sp.pair.true_outer = [outer = sp.pair.approx_outer](const Vec& y) {
        return outer(y);
    };
    const auto report =
        bounds::verify_bound_empirically(sp.pair, sp.domain, 100000, 17);
    EXPECT_EQ(report.eps_g, 0.0);
    double sum_bound = 0.0;
    for (std::size_t j = 0; j < report.eps_u.size(); ++j)
        sum_bound += std::abs(sp.pair.approx_outer.g_weights[j]) *
                     nn::kSigmoidSlopeBound * report.eps_u[j];
    EXPECT_LE(report.empirical_max_dev, sum_bound);
    EXPECT_NEAR(report.theoretical_bound, sum_bound, 1e-15);
}

TEST(VerifyBound, FiftySeededPairsNeverFalsify) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto sp = bounds::random_function_pair(seed);
        const auto report =
            bounds::verify_bound_empirically(sp.pair, sp.domain, 20000, seed);
        EXPECT_GE(report.margin, 0.0) << "seed " << seed;
        EXPECT_FALSE(report.falsified);
    }
}

TEST(VerifyConfigurations, PartialBoundsNeverExceedFullBound) {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const auto sp = bounds::random_function_pair(seed);
        const auto reports =
            bounds::verify_configurations(sp.pair, sp.domain, 20000, seed);
        // Dropping a nonnegative term can only shrink the bound.
        EXPECT_LE(reports.known_outer.theoretical_bound,
                  reports.full.theoretical_bound);
        EXPECT_LE(reports.known_inner.theoretical_bound,
                  reports.full.theoretical_bound);
        // Additive structure: the partial bounds sum to the full bound.
        EXPECT_NEAR(reports.known_outer.theoretical_bound +
                        reports.known_inner.theoretical_bound,
                    reports.full.theoretical_bound, 1e-12);
        // Measured dominance: partial-chain deviations stay below the full
        // bound.
        EXPECT_LE(reports.known_outer.empirical_max_dev,
                  reports.full.theoretical_bound);
        EXPECT_LE(reports.known_inner.empirical_max_dev,
                  reports.full.theoretical_bound);
        EXPECT_FALSE(reports.full.falsified);
    }
}

TEST(VerifyBound, WrongSlopeConstantIsCaught) {
    // Negative control: an understated slope bound must trigger falsification.
    auto sp = bounds::random_function_pair(99);
    sp.pair.true_outer = [outer = sp.pair.approx_outer](const Vec& y) {
        return outer(y);
    };
    sp.pair.approx_outer.slope_bound = 1e-4;
    EXPECT_THROW(bounds::verify_bound_empirically(sp.pair, sp.domain, 20000, 1),
                 FalsificationError);
}

TEST(VerifyBound, ReportSerializesToJson) {
    const FunctionPair fp = exact_pair();
    const Box domain{{-1.0, -1.0}, {1.0, 1.0}};
    const auto report = bounds::verify_bound_empirically(fp, domain, 1000, 8);
    const auto j = report.to_json();
    EXPECT_TRUE(j.contains("theoretical_bound"));
    EXPECT_TRUE(j.contains("empirical_max_dev"));
    EXPECT_TRUE(j.contains("margin"));
    EXPECT_EQ(j.at("n_samples").get<std::size_t>(), 1000u);
    EXPECT_FALSE(j.at("falsified").get<bool>());
}

TEST(RandomFunctionPair, DeterministicPerSeed) {
    const auto a = bounds::random_function_pair(31415);
    const auto b = bounds::random_function_pair(31415);
    ASSERT_EQ(a.pair.input_dim, b.pair.input_dim);
    const Vec x(a.pair.input_dim, 0.37);
    EXPECT_EQ(a.pair.true_inner(x), b.pair.true_inner(x));
    EXPECT_EQ(a.pair.true_outer(a.pair.true_inner(x)),
              b.pair.true_outer(b.pair.true_inner(x)));
}
