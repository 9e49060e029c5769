#include "epiopt/optimizers.hpp"

#include "epiopt/ode.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace epiopt;

namespace
{

double dot(std::span<const double> a, std::span<const double> b)
{
    double v = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        v += a[i] * b[i];
    }
    return v;
}

void expect_in_unit_box(const RunLog& log)
{
    for (const auto& r : log.records) {
        for (double v : r.iterate) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    for (double v : log.solution) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

double bowl(std::span<const double> u) { return (u[0] - 0.3) * (u[0] - 0.3) + (u[1] - 0.6) * (u[1] - 0.6); }

GradientOracle exact_gradient(const SmoothObjective& objective)
{
    return [objective](std::span<const double> u, std::uint64_t) {
        AdaptiveGradient g;
        g.estimate.vector = objective.gradient(u);
        g.estimate.n      = 1;
        return g;
    };
}

} // namespace

TEST(Projection, DirectionExamples)
{
    const std::vector<double> x{-1.0, 2.0};
    EXPECT_EQ(project_direction(x, std::vector<double>{0.0, 1.0}), (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(project_direction(x, std::vector<double>{0.4, 0.7}), x);
    EXPECT_EQ(project_direction(x, std::vector<double>{1.0, 0.0}), x);
}

TEST(Projection, ClampAndFeasibleStep)
{
    const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
    EXPECT_EQ(clamp_to_box(std::vector<double>{1.2, -0.1}, lo, hi), (std::vector<double>{1.0, 0.0}));
    EXPECT_DOUBLE_EQ(max_feasible_step(std::vector<double>{0.5, 0.2}, std::vector<double>{1.0, -1.0}, lo, hi), 0.2);
    EXPECT_DOUBLE_EQ(max_feasible_step(std::vector<double>{0.5, 0.2}, std::vector<double>{-0.25, 0.0}, lo, hi), 2.0);
}

TEST(Projection, AdmissibleBoxStaysBelowBarrier)
{
    const auto box = admissible_box(default_abm_params(), 3);
    ASSERT_EQ(box.upper.size(), 6u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(box.upper[school_index(i)], 1.0);
        EXPECT_LT(box.upper[work_index(i)], 0.81);
        EXPECT_GT(box.upper[work_index(i)], 0.81 - 1e-5);
    }
}

TEST(SteepestDescent, ArmijoHalvingOnQuadratic)
{
    const SmoothObjective square{[](std::span<const double> u) { return u[0] * u[0]; },
                                 [](std::span<const double> u) { return std::vector<double>{2.0 * u[0]}; }};
    DescentSettings settings;
    settings.max_iterations = 1;
    const auto r = projected_gradient_descent(square, {1.0}, {{-10.0}, {10.0}}, settings);
    ASSERT_FALSE(r.log.records.empty());
    const auto& first = r.log.records.front();
    EXPECT_EQ(first.direction, (std::vector<double>{-2.0}));
    EXPECT_EQ(first.trials, 2u);
    EXPECT_DOUBLE_EQ(first.step_size, 0.5);
    EXPECT_TRUE(first.accepted);
    EXPECT_DOUBLE_EQ(r.solution[0], 0.0);
}

TEST(SteepestDescent, StationaryStartTerminatesImmediately)
{
    const SmoothObjective q{[](std::span<const double> u) { return bowl(u); },
                            [](std::span<const double> u) {
                                return std::vector<double>{2.0 * (u[0] - 0.3), 2.0 * (u[1] - 0.6)};
                            }};
    const auto r = projected_gradient_descent(q, {0.3, 0.6}, {{0.0, 0.0}, {1.0, 1.0}}, {});
    EXPECT_EQ(r.log.status, RunStatus::Converged);
    EXPECT_EQ(r.solution, (std::vector<double>{0.3, 0.6}));
    for (const auto& rec : r.log.records) {
        EXPECT_FALSE(rec.accepted);
    }
}

TEST(SteepestDescent, OdeProblemDecreasesMonotonically)
{
    OptimizerConfig config;
    config.max_iterations = 200;
    const auto r = steepest_descent_ode(default_ode_params(), PolicySchedule::uniform(1176.0, 1), config);
    EXPECT_EQ(r.log.status, RunStatus::Converged);
    EXPECT_EQ(r.log.total_simulations, 0u);
    for (std::size_t k = 1; k < r.log.records.size(); ++k) {
        EXPECT_LE(r.log.records[k].objective, r.log.records[k - 1].objective);
    }
    expect_in_unit_box(r.log);
    EXPECT_NEAR(r.solution[0], 0.4745, 1e-3);
    EXPECT_NEAR(r.solution[1], 0.0, 1e-9);
}

TEST(InexactGradient, DescentConeInequality)
{
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 20000; ++rep) {
        const std::size_t d = 1 + rep % 14;
        const double eps    = 0.49 * unit(gen);
        Eigen::VectorXd s(d), r(d);
        for (std::size_t i = 0; i < d; ++i) {
            s[static_cast<Eigen::Index>(i)] = n01(gen);
            r[static_cast<Eigen::Index>(i)] = n01(gen);
        }
        r *= eps * s.norm() * unit(gen) / r.norm();
        const Eigen::VectorXd g = -s + r; // ||s + g|| <= eps ||s||
        ASSERT_LE(g.dot(s), -(1.0 - 2.0 * eps) * g.norm() * s.norm() + 1e-12);
    }
}

TEST(InexactGradient, NoiseFreeStepsAreArmijoAcceptable)
{
    const FunctionObjective fine(2, [](std::span<const double> u, SimSeed) { return bowl(u); });
    OptimizerConfig config;
    config.max_iterations = 20;
    const auto r = inexact_gradient_descent(fine, {0.9, 0.0}, config);
    std::size_t accepted = 0;
    for (const auto& rec : r.log.records) {
        if (!rec.accepted) {
            continue;
        }
        ++accepted;
        const double norm2 = dot(rec.direction, rec.direction);
        EXPECT_LE(rec.trial_objective - rec.objective, -config.c1 * rec.step_size * norm2);
        std::vector<double> next(2);
        for (std::size_t i = 0; i < 2; ++i) {
            next[i] = rec.iterate[i] + rec.step[i];
        }
        EXPECT_NEAR(rec.trial_objective, bowl(next), 1e-12);
    }
    EXPECT_GT(accepted, 0u);
    expect_in_unit_box(r.log);
    EXPECT_LT(bowl(r.solution), 1e-3);
}

TEST(Multilevel, CoarseEqualsFineMatchesSteepestDescent)
{
    const auto params   = default_ode_params();
    const auto schedule = PolicySchedule::uniform(1176.0, 1);
    const auto coarse   = ode_objective(params, schedule.grid(), 1.0);
    const FunctionObjective fine(2, [&](std::span<const double> u, SimSeed) { return coarse.value(u); },
                                 admissible_box(params, 1).upper);
    OptimizerConfig config;
    config.max_iterations  = 100;
    config.initial_samples = 2;
    config.sample_cap      = 4;
    const auto mlo = multilevel_optimize(fine, coarse, schedule.flatten(), config, exact_gradient(coarse));
    const auto gd  = steepest_descent_ode(params, schedule, config);
    EXPECT_NEAR(mlo.solution[0], gd.solution[0], 1e-4);
    EXPECT_NEAR(mlo.solution[1], gd.solution[1], 1e-4);
    expect_in_unit_box(mlo.log);
    for (const auto& rec : mlo.log.records) {
        if (rec.accepted) {
            EXPECT_GT(dot(rec.step, rec.direction), 0.0);
        }
    }

    // one step each: the first trial radius is accepted and beats one Armijo step
    config.max_iterations = 1;
    const auto mlo1       = multilevel_optimize(fine, coarse, schedule.flatten(), config, exact_gradient(coarse));
    const auto gd1        = steepest_descent_ode(params, schedule, config);
    ASSERT_FALSE(mlo1.log.records.empty());
    EXPECT_TRUE(mlo1.log.records.front().accepted);
    EXPECT_EQ(mlo1.log.records.front().trials, 1u);
    EXPECT_DOUBLE_EQ(mlo1.log.records.front().step_size, config.rho0);
    EXPECT_LE(coarse.value(mlo1.solution), coarse.value(gd1.solution) + 1e-9);
}

TEST(Multilevel, CorrectionGivesFirstOrderConsistency)
{
    // a coarse model with the wrong gradient still yields steps along -s once corrected
    const FunctionObjective fine(2, [](std::span<const double> u, SimSeed) { return bowl(u); });
    const SmoothObjective wrong{[](std::span<const double> u) { return 3.0 * (u[0] * u[0] + u[1] * u[1]); },
                                [](std::span<const double> u) {
                                    return std::vector<double>{6.0 * u[0], 6.0 * u[1]};
                                }};
    const SmoothObjective exact{[](std::span<const double> u) { return bowl(u); },
                                [](std::span<const double> u) {
                                    return std::vector<double>{2.0 * (u[0] - 0.3), 2.0 * (u[1] - 0.6)};
                                }};
    OptimizerConfig config;
    config.max_iterations  = 30;
    config.initial_samples = 2;
    config.sample_cap      = 4;
    const auto r = multilevel_optimize(fine, wrong, {0.9, 0.1}, config, exact_gradient(exact));
    EXPECT_LT(bowl(r.solution), 1e-4);
    for (const auto& rec : r.log.records) {
        if (rec.accepted) {
            EXPECT_GT(dot(rec.step, rec.direction), 0.0);
        }
    }
}

TEST(KieferWolfowitz, NoiseFreeQuadratic)
{
    const FunctionObjective q(1, [](std::span<const double> u, SimSeed) { return (u[0] - 0.3) * (u[0] - 0.3); });
    OptimizerConfig config;
    config.max_iterations = 200;
    KieferWolfowitzSettings kw;
    kw.gain  = 0.5;
    kw.batch = 1;
    const auto r = kiefer_wolfowitz(q, {0.9}, config, kw);
    EXPECT_NEAR(r.solution[0], 0.3, 0.05);
    expect_in_unit_box(r.log);
}

TEST(KieferWolfowitz, ZeroIterationsReturnsStart)
{
    const FunctionObjective q(1, [](std::span<const double> u, SimSeed) { return u[0]; });
    OptimizerConfig config;
    config.max_iterations = 0;
    const auto r = kiefer_wolfowitz(q, {0.4}, config, {});
    EXPECT_EQ(r.solution, (std::vector<double>{0.4}));
    EXPECT_EQ(r.log.total_simulations, 0u);
}

TEST(Budget, LogCountsEverySimulation)
{
    const AbmObjective abm(default_abm_params(), {0.0, 1176.0});
    OptimizerConfig config;
    config.max_iterations = 3;
    KieferWolfowitzSettings kw;
    kw.batch      = 4;
    const auto before = ssa_invocations();
    const auto r      = kiefer_wolfowitz(abm, {0.2, 0.2}, config, kw);
    EXPECT_EQ(r.log.total_simulations, ssa_invocations() - before);
    EXPECT_EQ(r.log.records.back().cumulative_simulations, r.log.total_simulations);
    std::size_t sum = 0;
    for (const auto& rec : r.log.records) {
        sum += rec.simulations;
    }
    EXPECT_EQ(sum, r.log.total_simulations);
}

TEST(Config, Validation)
{
    OptimizerConfig config;
    EXPECT_NO_THROW(config.validate());
    config.epsilon = 0.5;
    EXPECT_ANY_THROW(config.validate());
    config         = {};
    config.c1      = 1.0;
    EXPECT_ANY_THROW(config.validate());
    EXPECT_EQ(to_string(RunStatus::BudgetExhausted), "budget_exhausted");
}
