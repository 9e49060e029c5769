#include "epiopt/ode.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace epiopt
{

namespace
{

std::vector<std::size_t> steps_per_interval(const PolicySchedule& schedule, double step)
{
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw ConfigError("ODE step must be positive");
    }
    std::vector<std::size_t> counts(schedule.intervals());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double len = schedule.interval_length(i);
        const double n   = std::round(len / step);
        if (n < 1.0 || std::abs(n * step - len) > 1e-9 * len) {
            std::ostringstream msg;
            msg << "ODE step " << step << " does not divide control interval " << i << " of length " << len;
            throw ConfigError(msg.str());
        }
        counts[i] = static_cast<std::size_t>(n);
    }
    return counts;
}

OdeState rk4_step(const OdeState& y, const EffectiveRates& rates, double h)
{
    const OdeState k1 = ode_rhs(y, rates);
    const OdeState k2 = ode_rhs(y + (0.5 * h) * k1, rates);
    const OdeState k3 = ode_rhs(y + (0.5 * h) * k2, rates);
    const OdeState k4 = ode_rhs(y + h * k3, rates);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// f_y(y)^T w
OdeState rhs_state_vjp(const OdeState& y, const EffectiveRates& r, const OdeState& w)
{
    const double force_a = r.adult_to_adult * y.i_a + r.cross * y.i_c;
    const double force_c = r.child_to_child * y.i_c + r.cross * y.i_a;
    const double da      = w.i_a - w.s_a;
    const double dc      = w.i_c - w.s_c;
    return {force_a * da,
            force_c * dc,
            y.s_a * r.adult_to_adult * da + y.s_c * r.cross * dc - r.recovery_adult * w.i_a,
            y.s_a * r.cross * da + y.s_c * r.child_to_child * dc - r.recovery_child * w.i_c};
}

struct ControlCotangent
{
    double school = 0.0;
    double work   = 0.0;
};

// f_u(y)^T w, through the effective rates
ControlCotangent rhs_control_vjp(const OdeState& y, const RateSensitivity& dr, const OdeState& w)
{
    const double da       = w.i_a - w.s_a;
    const double dc       = w.i_c - w.s_c;
    const double d_aa     = y.s_a * y.i_a * da;
    const double d_cc     = y.s_c * y.i_c * dc;
    const double d_cross  = y.s_a * y.i_c * da + y.s_c * y.i_a * dc;
    return {dr.child_to_child_ds * d_cc + dr.cross_ds * d_cross,
            dr.adult_to_adult_dw * d_aa + dr.cross_dw * d_cross};
}

// Reverse of one RK4 step: given the cotangent of the step output, returns the
// cotangent of the step input and accumulates the control cotangent.
OdeState rk4_step_vjp(const OdeState& y, const EffectiveRates& r, const RateSensitivity& dr, double h,
                      const OdeState& out_bar, ControlCotangent& u_bar)
{
    const OdeState k1 = ode_rhs(y, r);
    const OdeState y2 = y + (0.5 * h) * k1;
    const OdeState k2 = ode_rhs(y2, r);
    const OdeState y3 = y + (0.5 * h) * k2;
    const OdeState k3 = ode_rhs(y3, r);
    const OdeState y4 = y + h * k3;

    OdeState y_bar  = out_bar;
    OdeState k1_bar = (h / 6.0) * out_bar;
    OdeState k2_bar = (h / 3.0) * out_bar;
    OdeState k3_bar = (h / 3.0) * out_bar;
    const OdeState k4_bar = (h / 6.0) * out_bar;

    auto accumulate = [&](const ControlCotangent& c) {
        u_bar.school += c.school;
        u_bar.work += c.work;
    };

    const OdeState y4_bar = rhs_state_vjp(y4, r, k4_bar);
    accumulate(rhs_control_vjp(y4, dr, k4_bar));
    y_bar += y4_bar;
    k3_bar += h * y4_bar;

    const OdeState y3_bar = rhs_state_vjp(y3, r, k3_bar);
    accumulate(rhs_control_vjp(y3, dr, k3_bar));
    y_bar += y3_bar;
    k2_bar += (0.5 * h) * y3_bar;

    const OdeState y2_bar = rhs_state_vjp(y2, r, k2_bar);
    accumulate(rhs_control_vjp(y2, dr, k2_bar));
    y_bar += y2_bar;
    k1_bar += (0.5 * h) * y2_bar;

    y_bar += rhs_state_vjp(y, r, k1_bar);
    accumulate(rhs_control_vjp(y, dr, k1_bar));
    return y_bar;
}

OdeState health_gradient(const OdeState& y, double i_max_fraction)
{
    const double infected = y.i_a + y.i_c;
    const double d        = 1.0 + 10.0 * std::exp(10.0 * (infected - i_max_fraction));
    return {0.0, 0.0, d, d};
}

double health_value(const OdeState& y, double i_max_fraction)
{
    return health_integrand(y.i_a + y.i_c, i_max_fraction);
}

} // namespace

OdeState ode_rhs(const OdeState& y, const EffectiveRates& r)
{
    const double infect_a = y.s_a * (r.adult_to_adult * y.i_a + r.cross * y.i_c);
    const double infect_c = y.s_c * (r.child_to_child * y.i_c + r.cross * y.i_a);
    return {-infect_a, -infect_c, infect_a - r.recovery_adult * y.i_a, infect_c - r.recovery_child * y.i_c};
}

OdeState initial_ode_state(const EpidemicParams& params)
{
    const auto ic  = initial_condition(params);
    const double n = static_cast<double>(params.population);
    return {static_cast<double>(ic.susceptible_adults) / n, static_cast<double>(ic.susceptible_children) / n,
            static_cast<double>(ic.infected_adults) / n, static_cast<double>(ic.infected_children) / n};
}

OdeTrajectory integrate_ode(const EpidemicParams& params, const PolicySchedule& schedule, double step)
{
    params.validate();
    const auto counts = steps_per_interval(schedule, step);
    const auto scaled = params.to_scale(RateScale::PopulationIndependent);

    OdeTrajectory traj;
    OdeState y    = initial_ode_state(params);
    traj.adults   = y.s_a + y.i_a;
    traj.children = y.s_c + y.i_c;

    std::size_t total = 1;
    for (auto c : counts) {
        total += c;
    }
    traj.times.reserve(total);
    traj.states.reserve(total);
    traj.times.push_back(0.0);
    traj.states.push_back(y);

    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& u      = schedule.values()[i];
        const auto rates   = policy_to_rates(scaled, u.school, u.work);
        const double t0    = schedule.grid()[i];
        const double h     = schedule.interval_length(i) / static_cast<double>(counts[i]);
        for (std::size_t j = 0; j < counts[i]; ++j) {
            y = rk4_step(y, rates, h);
            traj.times.push_back(j + 1 == counts[i] ? schedule.grid()[i + 1] : t0 + static_cast<double>(j + 1) * h);
            traj.states.push_back(y);
        }
    }
    return traj;
}

ObjectiveBreakdown objective_ode(const OdeTrajectory& trajectory, const PolicySchedule& schedule,
                                 const EpidemicParams& params)
{
    if (trajectory.times.empty() || trajectory.times.front() != 0.0 ||
        std::abs(trajectory.times.back() - schedule.horizon()) > 1e-9 * schedule.horizon()) {
        throw DomainError("trajectory and policy must cover the same horizon");
    }
    ObjectiveBreakdown out = control_costs(schedule, params);
    const double i_max     = params.i_max_fraction();
    for (std::size_t k = 0; k + 1 < trajectory.times.size(); ++k) {
        const double h = trajectory.times[k + 1] - trajectory.times[k];
        out.health += 0.5 * h * (health_value(trajectory.states[k], i_max) + health_value(trajectory.states[k + 1], i_max));
    }
    out.total += out.health;
    return out;
}

AdjointResult adjoint_gradient(const EpidemicParams& params, const PolicySchedule& schedule, double step)
{
    const auto traj   = integrate_ode(params, schedule, step);
    const auto counts = steps_per_interval(schedule, step);
    const auto scaled = params.to_scale(RateScale::PopulationIndependent);
    const double i_max = params.i_max_fraction();

    AdjointResult result;
    result.objective = objective_ode(traj, schedule, params);
    result.gradient.assign(schedule.dimension(), 0.0);
    result.adjoint.assign(traj.states.size(), OdeState{});

    // lambda_k is the gradient of the cost-to-go from node k; lambda_N = 0.
    std::size_t node = traj.states.size() - 1;
    OdeState lambda{};
    for (std::size_t i = counts.size(); i-- > 0;) {
        const auto& u   = schedule.values()[i];
        const auto r    = policy_to_rates(scaled, u.school, u.work);
        const auto dr   = rate_sensitivity(scaled, u.school, u.work);
        const double h  = schedule.interval_length(i) / static_cast<double>(counts[i]);
        ControlCotangent u_bar;
        for (std::size_t j = 0; j < counts[i]; ++j) {
            const OdeState out_bar = lambda + (0.5 * h) * health_gradient(traj.states[node], i_max);
            --node;
            lambda = rk4_step_vjp(traj.states[node], r, dr, h, out_bar, u_bar);
            lambda += (0.5 * h) * health_gradient(traj.states[node], i_max);
            result.adjoint[node] = lambda;
        }
        const double len = schedule.interval_length(i);
        result.gradient[school_index(i)] = u_bar.school + 2.0 * params.a_s * u.school * len;
        result.gradient[work_index(i)]   = u_bar.work + params.a_w * len / (params.u_w_max - u.work);
    }
    return result;
}

void write_csv(std::ostream& out, const OdeTrajectory& trajectory)
{
    out << "t,S_a,S_c,I_a,I_c,R_a,R_c\n";
    out << std::setprecision(17);
    for (std::size_t k = 0; k < trajectory.times.size(); ++k) {
        const auto& y = trajectory.states[k];
        out << trajectory.times[k] << ',' << y.s_a << ',' << y.s_c << ',' << y.i_a << ',' << y.i_c << ','
            << trajectory.recovered_adults(k) << ',' << trajectory.recovered_children(k) << '\n';
    }
}

} // namespace epiopt
