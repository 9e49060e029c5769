#include "epiopt/calibration.hpp"

#include "epiopt/ode.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace epiopt;

namespace
{

FitProblem ode_targets(const EpidemicParams& truth, const PolicySchedule& schedule, double wobble = 0.0)
{
    const auto traj = integrate_ode(truth, schedule, 1.0);
    FitProblem p;
    p.schedule      = schedule;
    p.initial_guess = truth;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double bump = 1.0 + wobble * std::sin(0.05 * static_cast<double>(k));
        p.times.push_back(static_cast<double>(k));
        p.mean_adults.push_back(traj.states[k].i_a * bump);
        p.mean_children.push_back(traj.states[k].i_c * bump);
        p.var_adults.push_back(1.0);
        p.var_children.push_back(1.0);
    }
    return p;
}

std::vector<AbmState> flat_path(std::int64_t infected_adults, std::size_t nodes)
{
    return std::vector<AbmState>(nodes, AbmState{80 - infected_adults, 20, infected_adults, 0, 0, 0});
}

} // namespace

TEST(FitProblem, HandComputedStatistics)
{
    auto params       = default_abm_params();
    params.population = 100;
    params.i_max      = 0.5;
    const auto schedule = PolicySchedule::uniform(10.0, 1);
    const std::vector<std::vector<AbmState>> paths{flat_path(10, 11), flat_path(20, 11)};
    const auto p = build_fit_problem(paths, params, schedule);
    ASSERT_EQ(p.times.size(), 11u);
    for (std::size_t k = 0; k < p.times.size(); ++k) {
        EXPECT_DOUBLE_EQ(p.times[k], static_cast<double>(k));
        EXPECT_NEAR(p.mean_adults[k], 0.15, 1e-15);
        EXPECT_NEAR(p.var_adults[k], 0.005, 1e-15);
        EXPECT_EQ(p.mean_children[k], 0.0);
        EXPECT_EQ(p.var_children[k], kVarianceFloor);
    }
}

TEST(FitProblem, VarianceFloorOnIdenticalPaths)
{
    auto params       = default_abm_params();
    params.population = 100;
    params.i_max      = 0.5;
    const std::vector<std::vector<AbmState>> paths{flat_path(10, 6), flat_path(10, 6), flat_path(10, 6)};
    const auto p = build_fit_problem(paths, params, PolicySchedule::uniform(5.0, 1));
    for (double v : p.var_adults) {
        EXPECT_EQ(v, kVarianceFloor);
    }
}

TEST(FitProblem, GridCoversTheHorizon)
{
    auto params    = default_abm_params();
    params.mu      = 0.0;
    const auto sch = PolicySchedule::uniform(1176.0, 1);
    std::vector<AbmTrajectory> runs;
    for (std::uint64_t k = 0; k < 3; ++k) {
        runs.push_back(simulate_ssa(params, sch, {6, k}));
    }
    const auto p = build_fit_problem(runs, params, sch);
    EXPECT_EQ(p.times.size(), 1177u);
    EXPECT_NO_THROW(p.validate());
}

TEST(FitProblem, NeedsTwoSamples)
{
    const auto params = default_abm_params();
    const auto sch    = PolicySchedule::uniform(1176.0, 1);
    const std::vector<AbmTrajectory> one{simulate_ssa(params, sch, {1, 0})};
    EXPECT_THROW((void)build_fit_problem(one, params, sch), DomainError);
    auto bad = ode_targets(default_ode_params(), sch);
    bad.var_adults[3] = 0.0;
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Fit, RecoversParametersFromExactTargets)
{
    const auto truth = default_ode_params();
    auto problem     = ode_targets(truth, PolicySchedule::uniform(1176.0, 1));
    problem.initial_guess = perturbed_guess(truth, 1.3);
    EXPECT_GT(fit_residual(problem, problem.initial_guess), 1e-6);
    const auto r = fit_ode_parameters(problem);
    EXPECT_LE(r.residual, 1e-8);
    EXPECT_EQ(r.params.scale, truth.scale);
    EXPECT_NEAR(r.params.r_ac / truth.r_ac, 1.0, 1e-4);
    EXPECT_NEAR(r.params.r_a / truth.r_a, 1.0, 1e-4);
    EXPECT_NEAR(r.params.r_c / truth.r_c, 1.0, 1e-4);
    for (std::size_t k = 1; k < r.residual_history.size(); ++k) {
        EXPECT_LE(r.residual_history[k], r.residual_history[k - 1]);
    }
    const auto report = fit_report(problem, r);
    EXPECT_EQ(report.at("nodes"), 1177);
    EXPECT_EQ(report.at("residual"), r.residual);
}

TEST(Fit, InvariantUnderVarianceScaling)
{
    const auto truth = default_ode_params();
    auto problem     = ode_targets(truth, PolicySchedule::uniform(1176.0, 1), 0.05);
    problem.initial_guess = perturbed_guess(truth, 1.1);
    auto scaled = problem;
    for (auto* v : {&scaled.var_adults, &scaled.var_children}) {
        for (double& x : *v) {
            x *= 4.0;
        }
    }
    EXPECT_NEAR(fit_residual(scaled, truth), fit_residual(problem, truth) / 4.0, 1e-15);
    const auto a = fit_ode_parameters(problem);
    const auto b = fit_ode_parameters(scaled);
    EXPECT_NEAR(b.params.r_ac / a.params.r_ac, 1.0, 1e-5);
    EXPECT_NEAR(b.params.r_a / a.params.r_a, 1.0, 1e-5);
    EXPECT_NEAR(b.params.r_c / a.params.r_c, 1.0, 1e-5);
    EXPECT_NEAR(b.residual * 4.0 / a.residual, 1.0, 1e-5);
}

TEST(Fit, CoarserQuadratureAgrees)
{
    const auto truth = default_ode_params();
    auto problem     = ode_targets(truth, PolicySchedule::uniform(1176.0, 1), 0.05);
    const double fine   = fit_residual(problem, truth, 1);
    const double coarse = fit_residual(problem, truth, 2);
    EXPECT_NEAR(coarse / fine, 1.0, 0.01);
}

TEST(Fit, PerturbedGuessScalesEveryRate)
{
    const auto base = default_ode_params();
    const auto g    = perturbed_guess(base, 2.0);
    EXPECT_DOUBLE_EQ(g.r_ac, 2.0 * base.r_ac);
    EXPECT_DOUBLE_EQ(g.r_a, 2.0 * base.r_a);
    EXPECT_DOUBLE_EQ(g.mu, base.mu);
}
