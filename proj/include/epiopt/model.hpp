#pragma once

// Shared domain types for both model levels: piecewise-constant policies,
// epidemic parameters, and the control-to-rate maps.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace epiopt
{

/// Input outside the mathematical domain of an operation.
class DomainError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

/// Inconsistent or invalid configuration (bad step size, unknown key, ...).
class ConfigError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// The home-office control reached the barrier u_w >= u_w_max.
class InfeasiblePolicy : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

/// Fraction of schools closed and fraction of work done from home.
struct Controls
{
    double school = 0.0;
    double work   = 0.0;

    friend bool operator==(const Controls&, const Controls&) = default;
};

/**
 * Piecewise-constant school/work controls on a time grid 0 = t_0 < ... < t_m = T.
 *
 * The flat representation interleaves the two controls per interval:
 * index 2i holds u_s on interval i, index 2i+1 holds u_w.
 * Controls are right-continuous: the value at t_i belongs to interval i,
 * and t = T maps to the last interval.
 */
class PolicySchedule
{
public:
    PolicySchedule(std::vector<double> grid, std::vector<Controls> values);

    /// m equal intervals over [0, horizon], all set to `value`.
    static PolicySchedule uniform(double horizon, std::size_t intervals, Controls value = {});

    static PolicySchedule from_flat(std::vector<double> grid, std::span<const double> flat);

    /// Same grid, new values.
    PolicySchedule with_flat(std::span<const double> flat) const;

    std::vector<double> flatten() const;

    Controls at(double t) const;
    std::size_t interval_of(double t) const;

    std::size_t intervals() const { return values_.size(); }
    std::size_t dimension() const { return 2 * values_.size(); }
    double horizon() const { return grid_.back(); }
    double interval_length(std::size_t i) const { return grid_[i + 1] - grid_[i]; }

    const std::vector<double>& grid() const { return grid_; }
    const std::vector<Controls>& values() const { return values_; }

    friend bool operator==(const PolicySchedule&, const PolicySchedule&) = default;

private:
    std::vector<double> grid_;
    std::vector<Controls> values_;
};

constexpr std::size_t school_index(std::size_t interval) { return 2 * interval; }
constexpr std::size_t work_index(std::size_t interval) { return 2 * interval + 1; }

/// Scale in which the three infection rates are stored.
enum class RateScale
{
    PerContact,            ///< r, the ODE column of the parameter table
    PopulationIndependent, ///< r~ = r * N_0, the H/ABM column
};

/// Population size N_0 at which the two rate scales were matched.
inline constexpr double kReferencePopulation = 1091.0;

struct EpidemicParams
{
    RateScale scale = RateScale::PopulationIndependent;

    double r_aa = 1.1185e-9;
    double r_ac = 5.3246e-1;
    double r_cc = 6.7077e-10;
    double r_a  = 4.2148e-2;
    double r_c  = 4.3427e-2;

    /// Immunity loss R -> S happens with rate mu * r_a (adults) and mu * r_c (children).
    double mu = 0.2;

    std::int64_t population = 1091;
    /// Adult share of the population. Not a published value; 0.8 is a placeholder default.
    double frac_adults = 0.8;
    std::int64_t infected_adults   = 5;
    std::int64_t infected_children = 0;

    /// Health-care capacity threshold in agents (0.005 N by default).
    double i_max   = 0.005 * 1091;
    double u_w_max = 0.81;
    double a_s     = 1.0;
    double a_w     = 1.0;

    void validate() const;

    /// Copy with infection rates expressed in `target` scale (r~ = r * N_0).
    EpidemicParams to_scale(RateScale target) const;

    double i_max_fraction() const { return i_max / static_cast<double>(population); }
};

/// Default H/ABM parameters (population-independent rates).
EpidemicParams default_abm_params();
/// Default ODE parameters (per-contact rates); describes the same system as default_abm_params().
EpidemicParams default_ode_params();

std::string to_string(RateScale scale);
RateScale rate_scale_from_string(const std::string& name);

/// Initial agent counts: the infected from the parameters, remaining susceptibles split by frac_adults.
struct InitialCondition
{
    std::int64_t susceptible_adults;
    std::int64_t susceptible_children;
    std::int64_t infected_adults;
    std::int64_t infected_children;
};

InitialCondition initial_condition(const EpidemicParams& params);

struct EffectiveRates
{
    double adult_to_adult;
    double child_to_child;
    double cross; ///< r_{c->a} = r_{a->c}
    double recovery_adult;
    double recovery_child;
};

/// Control-modulated infection rates in the scale the parameters are stored in.
EffectiveRates policy_to_rates(const EpidemicParams& params, double u_s, double u_w);

/// Partial derivatives of the effective infection rates with respect to the controls.
struct RateSensitivity
{
    double adult_to_adult_dw;
    double child_to_child_ds;
    double cross_ds;
    double cross_dw;
};

RateSensitivity rate_sensitivity(const EpidemicParams& params, double u_s, double u_w);

/// Terms of J = c_h + a_s c_s + a_w c_w. `school` and `work` are unweighted.
struct ObjectiveBreakdown
{
    double health = 0.0;
    double school = 0.0;
    double work   = 0.0;
    double total  = 0.0;
};

/// Integrand of c_h for an infected fraction.
double health_integrand(double infected_fraction, double i_max_fraction);

bool is_feasible(const PolicySchedule& schedule, const EpidemicParams& params);

/// Exact integrals of u_s^2 and -log(u_w_max - u_w) over the horizon; total = a_s c_s + a_w c_w.
/// Throws InfeasiblePolicy when u_w >= u_w_max on some interval.
ObjectiveBreakdown control_costs(const PolicySchedule& schedule, const EpidemicParams& params);

} // namespace epiopt
