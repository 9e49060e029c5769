#include "epiopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace epiopt
{

namespace
{

void check_unit_interval(double value, const char* what)
{
    if (!(value >= 0.0 && value <= 1.0)) {
        std::ostringstream msg;
        msg << what << " = " << value << " outside [0,1]";
        throw DomainError(msg.str());
    }
}

} // namespace

PolicySchedule::PolicySchedule(std::vector<double> grid, std::vector<Controls> values)
    : grid_(std::move(grid))
    , values_(std::move(values))
{
    if (grid_.size() < 2) {
        throw DomainError("policy grid needs at least two points");
    }
    if (grid_.front() != 0.0) {
        throw DomainError("policy grid must start at t = 0");
    }
    for (std::size_t i = 1; i < grid_.size(); ++i) {
        if (!(grid_[i] > grid_[i - 1])) {
            throw DomainError("policy grid must be strictly increasing");
        }
    }
    if (values_.size() + 1 != grid_.size()) {
        throw DomainError("policy needs one control pair per grid interval");
    }
    for (const auto& v : values_) {
        check_unit_interval(v.school, "u_s");
        check_unit_interval(v.work, "u_w");
    }
}

PolicySchedule PolicySchedule::uniform(double horizon, std::size_t intervals, Controls value)
{
    if (intervals == 0 || !(horizon > 0.0)) {
        throw DomainError("uniform policy needs a positive horizon and at least one interval");
    }
    std::vector<double> grid(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) {
        grid[i] = horizon * static_cast<double>(i) / static_cast<double>(intervals);
    }
    grid.back() = horizon;
    return PolicySchedule(std::move(grid), std::vector<Controls>(intervals, value));
}

PolicySchedule PolicySchedule::from_flat(std::vector<double> grid, std::span<const double> flat)
{
    if (grid.size() < 2 || flat.size() != 2 * (grid.size() - 1)) {
        throw DomainError("flat control vector must hold 2 values per interval");
    }
    std::vector<Controls> values(grid.size() - 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = {flat[school_index(i)], flat[work_index(i)]};
    }
    return PolicySchedule(std::move(grid), std::move(values));
}

PolicySchedule PolicySchedule::with_flat(std::span<const double> flat) const
{
    return from_flat(grid_, flat);
}

std::vector<double> PolicySchedule::flatten() const
{
    std::vector<double> flat(dimension());
    for (std::size_t i = 0; i < values_.size(); ++i) {
        flat[school_index(i)] = values_[i].school;
        flat[work_index(i)]   = values_[i].work;
    }
    return flat;
}

std::size_t PolicySchedule::interval_of(double t) const
{
    if (!(t >= 0.0 && t <= horizon())) {
        std::ostringstream msg;
        msg << "time " << t << " outside policy horizon [0, " << horizon() << "]";
        throw DomainError(msg.str());
    }
    // first grid point strictly greater than t closes the interval
    auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    auto idx = static_cast<std::size_t>(it - grid_.begin());
    return std::min(idx == 0 ? 0 : idx - 1, values_.size() - 1);
}

Controls PolicySchedule::at(double t) const
{
    return values_[interval_of(t)];
}

void EpidemicParams::validate() const
{
    auto fail = [](const std::string& msg) { throw ConfigError("epidemic parameters: " + msg); };
    for (double r : {r_aa, r_ac, r_cc, r_a, r_c}) {
        if (!(r >= 0.0) || !std::isfinite(r)) {
            fail("rates must be finite and non-negative");
        }
    }
    if (!(mu >= 0.0 && mu < 1.0)) {
        fail("mu must lie in [0,1)");
    }
    if (population <= 0) {
        fail("population must be positive");
    }
    if (!(frac_adults > 0.0 && frac_adults < 1.0)) {
        fail("frac_adults must lie in (0,1)");
    }
    if (infected_adults < 0 || infected_children < 0 || infected_adults + infected_children > population) {
        fail("initial infected counts must be non-negative and at most the population");
    }
    if (!(u_w_max > 0.0 && u_w_max < 1.0)) {
        fail("u_w_max must lie in (0,1)");
    }
    if (!(a_s >= 0.0) || !(a_w >= 0.0)) {
        fail("objective weights must be non-negative");
    }
    if (!(i_max >= 0.0)) {
        fail("i_max must be non-negative");
    }
}

EpidemicParams EpidemicParams::to_scale(RateScale target) const
{
    EpidemicParams out = *this;
    if (target == scale) {
        return out;
    }
    const double factor = target == RateScale::PopulationIndependent ? kReferencePopulation
                                                                     : 1.0 / kReferencePopulation;
    out.r_aa *= factor;
    out.r_ac *= factor;
    out.r_cc *= factor;
    out.scale = target;
    return out;
}

EpidemicParams default_abm_params()
{
    return EpidemicParams{};
}

EpidemicParams default_ode_params()
{
    EpidemicParams p;
    p.scale = RateScale::PerContact;
    p.r_aa  = 1.0252e-12;
    p.r_ac  = 4.8804e-4;
    p.r_cc  = 6.1482e-13;
    p.mu    = 0.0;
    return p;
}

std::string to_string(RateScale scale)
{
    return scale == RateScale::PerContact ? "ode" : "abm";
}

RateScale rate_scale_from_string(const std::string& name)
{
    if (name == "ode") {
        return RateScale::PerContact;
    }
    if (name == "abm") {
        return RateScale::PopulationIndependent;
    }
    throw ConfigError("unknown rate scale '" + name + "' (expected ode or abm)");
}

InitialCondition initial_condition(const EpidemicParams& params)
{
    const std::int64_t susceptible = params.population - params.infected_adults - params.infected_children;
    if (susceptible < 0) {
        throw ConfigError("more initially infected agents than population");
    }
    const auto adults = static_cast<std::int64_t>(std::llround(params.frac_adults * static_cast<double>(susceptible)));
    return {adults, susceptible - adults, params.infected_adults, params.infected_children};
}

EffectiveRates policy_to_rates(const EpidemicParams& params, double u_s, double u_w)
{
    check_unit_interval(u_s, "u_s");
    check_unit_interval(u_w, "u_w");
    const double open_work   = 1.0 - u_w;
    const double open_school = 1.0 - u_s;
    return {params.r_aa * open_work * open_work,
            params.r_cc * open_school * open_school,
            params.r_ac * (1.0 - 0.5 * u_w) * (1.0 - 0.5 * u_s),
            params.r_a,
            params.r_c};
}

RateSensitivity rate_sensitivity(const EpidemicParams& params, double u_s, double u_w)
{
    return {-2.0 * params.r_aa * (1.0 - u_w),
            -2.0 * params.r_cc * (1.0 - u_s),
            -0.5 * params.r_ac * (1.0 - 0.5 * u_w),
            -0.5 * params.r_ac * (1.0 - 0.5 * u_s)};
}

double health_integrand(double infected_fraction, double i_max_fraction)
{
    return infected_fraction + std::exp(10.0 * (infected_fraction - i_max_fraction));
}

bool is_feasible(const PolicySchedule& schedule, const EpidemicParams& params)
{
    return std::all_of(schedule.values().begin(), schedule.values().end(),
                       [&](const Controls& c) { return c.work < params.u_w_max; });
}

ObjectiveBreakdown control_costs(const PolicySchedule& schedule, const EpidemicParams& params)
{
    ObjectiveBreakdown out;
    for (std::size_t i = 0; i < schedule.intervals(); ++i) {
        const auto& c    = schedule.values()[i];
        const double len = schedule.interval_length(i);
        if (!(c.work < params.u_w_max)) {
            std::ostringstream msg;
            msg << "u_w = " << c.work << " on interval " << i << " reaches u_w_max = " << params.u_w_max;
            throw InfeasiblePolicy(msg.str());
        }
        out.school += len * c.school * c.school;
        out.work -= len * std::log(params.u_w_max - c.work);
    }
    out.total = params.a_s * out.school + params.a_w * out.work;
    return out;
}

} // namespace epiopt
