#pragma once

// Deterministic two-age-group SIR model on population fractions, its objective,
// and the exact gradient of the discretized objective via the adjoint.

#include "epiopt/model.hpp"

#include <iosfwd>
#include <vector>

namespace epiopt
{

/// Population fractions; recovered compartments follow from conservation.
struct OdeState
{
    double s_a = 0.0;
    double s_c = 0.0;
    double i_a = 0.0;
    double i_c = 0.0;

    OdeState& operator+=(const OdeState& o)
    {
        s_a += o.s_a;
        s_c += o.s_c;
        i_a += o.i_a;
        i_c += o.i_c;
        return *this;
    }
    friend OdeState operator+(OdeState a, const OdeState& b) { return a += b; }
    friend OdeState operator*(double f, OdeState a)
    {
        a.s_a *= f;
        a.s_c *= f;
        a.i_a *= f;
        a.i_c *= f;
        return a;
    }
    friend bool operator==(const OdeState&, const OdeState&) = default;
};

/// Right-hand side of the SIR system for the S and I compartments.
OdeState ode_rhs(const OdeState& y, const EffectiveRates& rates);

struct OdeTrajectory
{
    std::vector<double> times;
    std::vector<OdeState> states;
    /// Age-group shares N_a, N_c of the population (sum to 1).
    double adults   = 0.0;
    double children = 0.0;

    double recovered_adults(std::size_t k) const { return adults - states[k].s_a - states[k].i_a; }
    double recovered_children(std::size_t k) const { return children - states[k].s_c - states[k].i_c; }
};

/// Initial fractions derived from the initial agent counts.
OdeState initial_ode_state(const EpidemicParams& params);

/**
 * Classical fourth-order Runge-Kutta integration over the policy horizon.
 *
 * Infection rates are used in population-independent scale (the mean-field
 * limit of the agent model). `step` must divide every control interval; the
 * controls of the interval containing a step's left endpoint apply to the
 * whole step. Throws ConfigError otherwise.
 */
OdeTrajectory integrate_ode(const EpidemicParams& params, const PolicySchedule& schedule, double step);

/// Trapezoidal quadrature of J on the trajectory grid; I and I_max enter as fractions.
ObjectiveBreakdown objective_ode(const OdeTrajectory& trajectory, const PolicySchedule& schedule,
                                 const EpidemicParams& params);

struct AdjointResult
{
    ObjectiveBreakdown objective;
    /// dJ/du in flat layout (see PolicySchedule).
    std::vector<double> gradient;
    /// Adjoint state at every trajectory node; the last entry is the terminal value 0.
    std::vector<OdeState> adjoint;
};

/**
 * Gradient of objective_ode(integrate_ode(...)) with respect to the flat controls.
 *
 * The backward sweep is the Runge-Kutta step run in reverse on the stored
 * forward trajectory, which makes the result the exact derivative of the
 * discrete objective. Direct control costs (c_s, c_w) are included.
 */
AdjointResult adjoint_gradient(const EpidemicParams& params, const PolicySchedule& schedule, double step);

/// CSV with header t,S_a,S_c,I_a,I_c,R_a,R_c.
void write_csv(std::ostream& out, const OdeTrajectory& trajectory);

} // namespace epiopt
