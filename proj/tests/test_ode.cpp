#include "epiopt/ode.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace epiopt;

namespace
{

EpidemicParams disease_free()
{
    auto p            = default_ode_params();
    p.infected_adults = 0;
    return p;
}

double max_state_gap(const OdeTrajectory& coarse, const OdeTrajectory& fine, std::size_t ratio)
{
    double gap = 0.0;
    for (std::size_t k = 0; k < coarse.states.size(); ++k) {
        const auto& a = coarse.states[k];
        const auto& b = fine.states[k * ratio];
        gap = std::max({gap, std::abs(a.s_a - b.s_a), std::abs(a.s_c - b.s_c), std::abs(a.i_a - b.i_a),
                        std::abs(a.i_c - b.i_c)});
    }
    return gap;
}

PolicySchedule random_interior(std::mt19937_64& gen, std::size_t m, double work_max)
{
    std::uniform_real_distribution<double> school(0.05, 0.95);
    std::uniform_real_distribution<double> work(0.05, work_max - 0.05);
    std::vector<Controls> v(m);
    for (auto& c : v) {
        c = {school(gen), work(gen)};
    }
    return PolicySchedule(PolicySchedule::uniform(1176.0, m).grid(), v);
}

} // namespace

TEST(OdeRhs, DiseaseFreeStateIsAnEquilibrium)
{
    const auto rates = policy_to_rates(default_ode_params(), 0.0, 0.0);
    const auto d     = ode_rhs({0.7, 0.3, 0.0, 0.0}, rates);
    EXPECT_EQ(d, (OdeState{0.0, 0.0, 0.0, 0.0}));
}

TEST(OdeRhs, ConservationRearrangement)
{
    const auto rates = policy_to_rates(default_ode_params(), 0.2, 0.4);
    const OdeState y{0.5, 0.2, 0.1, 0.05};
    const auto d = ode_rhs(y, rates);
    EXPECT_NEAR(d.s_a + d.i_a + rates.recovery_adult * y.i_a, 0.0, 1e-18);
    EXPECT_NEAR(d.s_c + d.i_c + rates.recovery_child * y.i_c, 0.0, 1e-18);
}

TEST(OdeRhs, HandEvaluatedCrossInfection)
{
    // per-contact rate r_ac = 4.8804e-4, S_a = 0.7, I_c = 0.1, I_a = 0
    const auto rates = policy_to_rates(default_ode_params(), 0.0, 0.0);
    const auto d     = ode_rhs({0.7, 0.0, 0.0, 0.1}, rates);
    EXPECT_NEAR(d.i_a, 0.7 * 4.8804e-4 * 0.1, 1e-15);
    EXPECT_NEAR(d.i_a, 3.4163e-5, 1e-9);
}

TEST(IntegrateOde, HourlyGridAndConservation)
{
    const auto traj = integrate_ode(default_ode_params(), PolicySchedule::uniform(1176.0, 7), 1.0);
    ASSERT_EQ(traj.times.size(), 1177u);
    EXPECT_DOUBLE_EQ(traj.times.back(), 1176.0);
    EXPECT_NEAR(traj.adults + traj.children, 1.0, 1e-15);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const auto& y = traj.states[k];
        EXPECT_NEAR(y.s_a + y.i_a + traj.recovered_adults(k), traj.adults, 1e-10);
        EXPECT_GE(traj.recovered_adults(k), -1e-10);
        EXPECT_GE(traj.recovered_children(k), -1e-10);
        EXPECT_GE(y.i_a, 0.0);
        EXPECT_LE(y.s_a + y.i_a, traj.adults + 1e-10);
    }
}

TEST(IntegrateOde, NoInfectionGivesConstantTrajectory)
{
    const auto traj = integrate_ode(disease_free(), PolicySchedule::uniform(1176.0, 7, {0.3, 0.3}), 1.0);
    for (const auto& y : traj.states) {
        EXPECT_EQ(y, traj.states.front());
    }
}

TEST(IntegrateOde, StepMustDivideIntervals)
{
    EXPECT_THROW((void)integrate_ode(default_ode_params(), PolicySchedule::uniform(1176.0, 7), 5.0), ConfigError);
    EXPECT_THROW((void)integrate_ode(default_ode_params(), PolicySchedule::uniform(1176.0, 7), -1.0), ConfigError);
}

TEST(IntegrateOde, FourthOrderSelfConvergence)
{
    const auto params   = default_ode_params();
    const auto schedule = PolicySchedule::uniform(1176.0, 7, {0.2, 0.1});
    const auto ref      = integrate_ode(params, schedule, 0.05);
    const auto h1       = integrate_ode(params, schedule, 1.0);
    const auto h05      = integrate_ode(params, schedule, 0.5);
    const double e1     = max_state_gap(h1, ref, 20);
    const double e05    = max_state_gap(h05, ref, 10);
    EXPECT_GT(e1 / e05, 12.0);
    EXPECT_LT(e1 / e05, 20.0);
    EXPECT_LE(e05, 1e-6);
}

TEST(ObjectiveOde, ZeroInfectionClosedForm)
{
    const auto params   = disease_free();
    const auto schedule = PolicySchedule::uniform(1176.0, 1);
    const auto j        = objective_ode(integrate_ode(params, schedule, 1.0), schedule, params);
    EXPECT_NEAR(j.health, 1176.0 * std::exp(-0.05), 1e-9);
    EXPECT_NEAR(j.work, -1176.0 * std::log(0.81), 1e-9);
    EXPECT_DOUBLE_EQ(j.school, 0.0);
    EXPECT_NEAR(j.total, 1366.46, 1e-2);
}

TEST(ObjectiveOde, ComponentsAddUp)
{
    auto params         = default_ode_params();
    params.a_s          = 2.5;
    params.a_w          = 0.5;
    const auto schedule = PolicySchedule::uniform(1176.0, 7, {0.4, 0.3});
    const auto j        = objective_ode(integrate_ode(params, schedule, 1.0), schedule, params);
    EXPECT_DOUBLE_EQ(j.total, j.health + params.a_s * j.school + params.a_w * j.work);
    EXPECT_THROW((void)objective_ode(integrate_ode(params, schedule, 1.0), PolicySchedule::uniform(100.0, 1), params),
                 DomainError);
}

TEST(Adjoint, TerminalValueIsZero)
{
    const auto r = adjoint_gradient(default_ode_params(), PolicySchedule::uniform(1176.0, 7, {0.3, 0.2}), 1.0);
    EXPECT_EQ(r.adjoint.back(), (OdeState{}));
    EXPECT_EQ(r.gradient.size(), 14u);
}

TEST(Adjoint, DirectTermsOnlyWithoutInfection)
{
    auto params         = disease_free();
    params.a_s          = 1.7;
    params.a_w          = 0.6;
    const auto schedule = PolicySchedule::uniform(1176.0, 7, {0.25, 0.5});
    const auto r        = adjoint_gradient(params, schedule, 1.0);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_NEAR(r.gradient[school_index(i)], 2.0 * 0.25 * params.a_s * 168.0, 1e-9);
        EXPECT_NEAR(r.gradient[work_index(i)], params.a_w * 168.0 / (0.81 - 0.5), 1e-9);
    }
}

TEST(Adjoint, MatchesCentralDifferences)
{
    const auto params = default_ode_params();
    std::mt19937_64 gen(11);
    const auto schedule = random_interior(gen, 7, params.u_w_max);
    const auto r        = adjoint_gradient(params, schedule, 1.0);
    const auto u        = schedule.flatten();
    const double h      = 1e-5;
    for (std::size_t k = 0; k < u.size(); ++k) {
        auto up = u, down = u;
        up[k] += h;
        down[k] -= h;
        const auto sp = schedule.with_flat(up), sm = schedule.with_flat(down);
        const double fd = (objective_ode(integrate_ode(params, sp, 1.0), sp, params).total -
                           objective_ode(integrate_ode(params, sm, 1.0), sm, params).total) /
                          (2.0 * h);
        EXPECT_NEAR(r.gradient[k], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "component " << k;
    }
}

TEST(OdeProperties, DiseaseFreeInvariance)
{
    std::mt19937_64 gen(3);
    const auto params = disease_free();
    for (int rep = 0; rep < 5; ++rep) {
        const auto traj = integrate_ode(params, random_interior(gen, 7, params.u_w_max), 1.0);
        for (const auto& y : traj.states) {
            EXPECT_EQ(y.i_a + y.i_c, 0.0);
        }
    }
}

TEST(OdeProperties, MonotoneContainment)
{
    std::mt19937_64 gen(5);
    const auto params = default_ode_params();
    std::uniform_int_distribution<std::size_t> pick(0, 13);
    for (int rep = 0; rep < 20; ++rep) {
        const auto base = random_interior(gen, 7, params.u_w_max);
        auto u          = base.flatten();
        const auto k    = pick(gen);
        const auto t0   = integrate_ode(params, base, 1.0);
        u[k]            = std::min(u[k] + 0.05, 1.0);
        const auto t1   = integrate_ode(params, base.with_flat(u), 1.0);
        const auto s0 = t0.states.back().s_a + t0.states.back().s_c;
        const auto s1 = t1.states.back().s_a + t1.states.back().s_c;
        EXPECT_GE(s1, s0 - 1e-12) << "control " << k;
    }
}

TEST(OdeCsv, HeaderAndRows)
{
    std::ostringstream out;
    write_csv(out, integrate_ode(default_ode_params(), PolicySchedule::uniform(1176.0, 1), 1.0));
    const auto text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,S_a,S_c,I_a,I_c,R_a,R_c");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1178);
}
