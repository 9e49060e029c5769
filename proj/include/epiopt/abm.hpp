#pragma once

// Homogeneous agent-based SIRS model as a continuous-time Markov jump process,
// sampled exactly with Gillespie's direct method under piecewise-constant controls.

#include "epiopt/model.hpp"
#include "epiopt/random.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace epiopt
{

struct AbmState
{
    std::int64_t s_a = 0;
    std::int64_t s_c = 0;
    std::int64_t i_a = 0;
    std::int64_t i_c = 0;
    std::int64_t r_a = 0;
    std::int64_t r_c = 0;

    std::int64_t infected() const { return i_a + i_c; }
    std::int64_t adults() const { return s_a + i_a + r_a; }
    std::int64_t children() const { return s_c + i_c + r_c; }

    friend bool operator==(const AbmState&, const AbmState&) = default;
};

enum class Channel : std::uint8_t
{
    InfectAdultByAdult,
    InfectAdultByChild,
    InfectChildByChild,
    InfectChildByAdult,
    RecoverAdult,
    RecoverChild,
    ImmunityLossAdult,
    ImmunityLossChild,
};

inline constexpr std::size_t kChannelCount = 8;
using Propensities = std::array<double, kChannelCount>;

/// Channel rates in the order of `Channel`. Infection rates enter in population-independent scale divided by N.
Propensities propensities(const AbmState& state, const EpidemicParams& params, double u_s, double u_w);

/// Applies one reaction's stoichiometry.
void apply(Channel channel, AbmState& state);

AbmState initial_abm_state(const EpidemicParams& params);

struct AbmEvent
{
    double time;
    Channel channel;
    AbmState state; ///< state right after the event
};

struct AbmTrajectory
{
    AbmState initial;
    std::vector<AbmEvent> events;
    double horizon = 0.0;

    /// State just after the last event at or before t.
    AbmState state_at(double t) const;
    /// Right-continuous view on the hourly grid 0, 1, ..., floor(horizon).
    std::vector<AbmState> hourly() const;
};

/**
 * Exact sample path on [0, T].
 *
 * When a waiting time crosses a control switch, the clock moves to the switch
 * and a fresh waiting time is drawn under the new controls. A path with zero
 * total propensity is absorbed and its state is held until T.
 */
AbmTrajectory simulate_ssa(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed);
AbmTrajectory simulate_ssa(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed,
                           const AbmState& initial);

/// J for one path; c_h is integrated exactly over the piecewise-constant I(t).
ObjectiveBreakdown objective_sample(const AbmTrajectory& trajectory, const PolicySchedule& schedule,
                                    const EpidemicParams& params);

/// Same value as objective_sample(simulate_ssa(...)) without storing the path.
ObjectiveBreakdown sample_objective(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed);
ObjectiveBreakdown sample_objective(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed,
                                    const AbmState& initial);

/// Process-wide count of SSA runs started.
std::uint64_t ssa_invocations();

/// Event CSV: t,channel,S_a,S_c,I_a,I_c,R_a,R_c (channel -1 marks the initial row).
void write_event_csv(std::ostream& out, const AbmTrajectory& trajectory);
/// Hourly CSV with the ODE column layout, in agent counts.
void write_hourly_csv(std::ostream& out, const AbmTrajectory& trajectory);

} // namespace epiopt
