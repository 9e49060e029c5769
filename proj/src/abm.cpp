#include "epiopt/abm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace epiopt
{

namespace
{

std::atomic<std::uint64_t> g_ssa_runs{0};

/// Per-interval propensity coefficients: rate = coefficient * (product of counts).
struct Coefficients
{
    double adult_adult;
    double cross;
    double child_child;
    double recovery_adult;
    double recovery_child;
    double loss_adult;
    double loss_child;
};

Coefficients coefficients(const EpidemicParams& scaled, double u_s, double u_w)
{
    const auto r   = policy_to_rates(scaled, u_s, u_w);
    const double n = static_cast<double>(scaled.population);
    return {r.adult_to_adult / n, r.cross / n,           r.child_to_child / n, r.recovery_adult,
            r.recovery_child,     scaled.mu * scaled.r_a, scaled.mu * scaled.r_c};
}

Propensities evaluate(const AbmState& x, const Coefficients& c)
{
    const auto d = [](std::int64_t v) { return static_cast<double>(v); };
    return {c.adult_adult * d(x.s_a) * d(x.i_a), c.cross * d(x.s_a) * d(x.i_c),
            c.child_child * d(x.s_c) * d(x.i_c), c.cross * d(x.s_c) * d(x.i_a),
            c.recovery_adult * d(x.i_a),         c.recovery_child * d(x.i_c),
            c.loss_adult * d(x.r_a),             c.loss_child * d(x.r_c)};
}

void check_state(const AbmState& s)
{
    if (s.s_a < 0 || s.s_c < 0 || s.i_a < 0 || s.i_c < 0 || s.r_a < 0 || s.r_c < 0) {
        throw DomainError("agent counts must be non-negative");
    }
}

/// Direct-method SSA; `on_event(time, channel, state)` sees every reaction.
template <class OnEvent>
void run_ssa(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed, AbmState state,
             OnEvent&& on_event)
{
    g_ssa_runs.fetch_add(1, std::memory_order_relaxed);
    const auto scaled = params.to_scale(RateScale::PopulationIndependent);
    StreamRng rng(seed);

    const auto& grid          = schedule.grid();
    const std::size_t m       = schedule.intervals();
    std::size_t interval      = 0;
    Coefficients coeff        = coefficients(scaled, schedule.values()[0].school, schedule.values()[0].work);
    double t                  = 0.0;

    while (true) {
        const Propensities a = evaluate(state, coeff);
        double total         = 0.0;
        for (double v : a) {
            total += v;
        }
        if (!(total > 0.0)) {
            return; // absorbed
        }
        const double tau      = rng.exponential(total);
        const double boundary = grid[interval + 1];
        if (t + tau >= boundary) {
            if (interval + 1 == m) {
                return;
            }
            // memorylessness: restart the clock under the next controls
            t = boundary;
            ++interval;
            coeff = coefficients(scaled, schedule.values()[interval].school, schedule.values()[interval].work);
            continue;
        }
        t += tau;

        const double target = rng.uniform() * total;
        double cumulative   = 0.0;
        std::size_t chosen  = kChannelCount;
        for (std::size_t k = 0; k < kChannelCount; ++k) {
            cumulative += a[k];
            if (target < cumulative) {
                chosen = k;
                break;
            }
        }
        if (chosen == kChannelCount) {
            // rounding at the top end: take the last channel with positive rate
            chosen = kChannelCount - 1;
            while (a[chosen] <= 0.0) {
                --chosen;
            }
        }
        const auto channel = static_cast<Channel>(chosen);
        apply(channel, state);
        on_event(t, channel, state);
    }
}

/// Accumulates the exact integral of the c_h integrand over a piecewise-constant I(t).
class HealthIntegral
{
public:
    HealthIntegral(const EpidemicParams& params, std::int64_t infected)
        : n_(static_cast<double>(params.population))
        , i_max_(params.i_max_fraction())
        , infected_(infected)
    {
    }

    void advance(double t, std::int64_t infected_after)
    {
        value_ += (t - last_) * health_integrand(static_cast<double>(infected_) / n_, i_max_);
        last_     = t;
        infected_ = infected_after;
    }

    double finish(double horizon)
    {
        advance(horizon, infected_);
        return value_;
    }

private:
    double n_;
    double i_max_;
    std::int64_t infected_;
    double last_  = 0.0;
    double value_ = 0.0;
};

} // namespace

Propensities propensities(const AbmState& state, const EpidemicParams& params, double u_s, double u_w)
{
    check_state(state);
    return evaluate(state, coefficients(params.to_scale(RateScale::PopulationIndependent), u_s, u_w));
}

void apply(Channel channel, AbmState& s)
{
    switch (channel) {
    case Channel::InfectAdultByAdult:
    case Channel::InfectAdultByChild:
        --s.s_a;
        ++s.i_a;
        break;
    case Channel::InfectChildByChild:
    case Channel::InfectChildByAdult:
        --s.s_c;
        ++s.i_c;
        break;
    case Channel::RecoverAdult:
        --s.i_a;
        ++s.r_a;
        break;
    case Channel::RecoverChild:
        --s.i_c;
        ++s.r_c;
        break;
    case Channel::ImmunityLossAdult:
        --s.r_a;
        ++s.s_a;
        break;
    case Channel::ImmunityLossChild:
        --s.r_c;
        ++s.s_c;
        break;
    }
}

AbmState initial_abm_state(const EpidemicParams& params)
{
    const auto ic = initial_condition(params);
    return {ic.susceptible_adults, ic.susceptible_children, ic.infected_adults, ic.infected_children, 0, 0};
}

AbmState AbmTrajectory::state_at(double t) const
{
    auto it = std::upper_bound(events.begin(), events.end(), t,
                               [](double value, const AbmEvent& e) { return value < e.time; });
    return it == events.begin() ? initial : std::prev(it)->state;
}

std::vector<AbmState> AbmTrajectory::hourly() const
{
    const auto hours = static_cast<std::size_t>(std::floor(horizon));
    std::vector<AbmState> grid(hours + 1);
    std::size_t next = 0;
    AbmState current = initial;
    for (std::size_t k = 0; k <= hours; ++k) {
        const double t = static_cast<double>(k);
        while (next < events.size() && events[next].time <= t) {
            current = events[next].state;
            ++next;
        }
        grid[k] = current;
    }
    return grid;
}

AbmTrajectory simulate_ssa(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed)
{
    return simulate_ssa(params, schedule, seed, initial_abm_state(params));
}

AbmTrajectory simulate_ssa(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed,
                           const AbmState& initial)
{
    params.validate();
    check_state(initial);
    AbmTrajectory traj;
    traj.initial = initial;
    traj.horizon = schedule.horizon();
    run_ssa(params, schedule, seed, initial,
            [&](double t, Channel ch, const AbmState& s) { traj.events.push_back({t, ch, s}); });
    return traj;
}

ObjectiveBreakdown objective_sample(const AbmTrajectory& trajectory, const PolicySchedule& schedule,
                                    const EpidemicParams& params)
{
    if (trajectory.horizon != schedule.horizon()) {
        throw DomainError("trajectory and policy must cover the same horizon");
    }
    ObjectiveBreakdown out = control_costs(schedule, params);
    HealthIntegral health(params, trajectory.initial.infected());
    for (const auto& e : trajectory.events) {
        health.advance(e.time, e.state.infected());
    }
    out.health = health.finish(trajectory.horizon);
    out.total += out.health;
    return out;
}

ObjectiveBreakdown sample_objective(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed)
{
    return sample_objective(params, schedule, seed, initial_abm_state(params));
}

ObjectiveBreakdown sample_objective(const EpidemicParams& params, const PolicySchedule& schedule, SimSeed seed,
                                    const AbmState& initial)
{
    params.validate();
    check_state(initial);
    ObjectiveBreakdown out = control_costs(schedule, params);
    HealthIntegral health(params, initial.infected());
    run_ssa(params, schedule, seed, initial,
            [&](double t, Channel, const AbmState& s) { health.advance(t, s.infected()); });
    out.health = health.finish(schedule.horizon());
    out.total += out.health;
    return out;
}

std::uint64_t ssa_invocations()
{
    return g_ssa_runs.load(std::memory_order_relaxed);
}

void write_event_csv(std::ostream& out, const AbmTrajectory& trajectory)
{
    out << "t,channel,S_a,S_c,I_a,I_c,R_a,R_c\n" << std::setprecision(17);
    auto row = [&](double t, int channel, const AbmState& s) {
        out << t << ',' << channel << ',' << s.s_a << ',' << s.s_c << ',' << s.i_a << ',' << s.i_c << ',' << s.r_a
            << ',' << s.r_c << '\n';
    };
    row(0.0, -1, trajectory.initial);
    for (const auto& e : trajectory.events) {
        row(e.time, static_cast<int>(e.channel), e.state);
    }
}

void write_hourly_csv(std::ostream& out, const AbmTrajectory& trajectory)
{
    out << "t,S_a,S_c,I_a,I_c,R_a,R_c\n";
    const auto grid = trajectory.hourly();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto& s = grid[k];
        out << k << ',' << s.s_a << ',' << s.s_c << ',' << s.i_a << ',' << s.i_c << ',' << s.r_a << ',' << s.r_c
            << '\n';
    }
}

} // namespace epiopt
