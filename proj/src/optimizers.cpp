#include "epiopt/optimizers.hpp"

#include "epiopt/ode.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <utility>

namespace epiopt
{

namespace
{

constexpr double kInf  = std::numeric_limits<double>::infinity();
constexpr double kSnap = 1e-12;

double dot(std::span<const double> a, std::span<const double> b)
{
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a)
{
    return std::sqrt(dot(a, a));
}

void require_same_size(std::size_t a, std::size_t b, const char* what)
{
    if (a != b) {
        throw DomainError(std::string(what) + ": dimension mismatch");
    }
}

void check_box(std::span<const double> u, const Box& box)
{
    require_same_size(u.size(), box.lower.size(), "box");
    require_same_size(u.size(), box.upper.size(), "box");
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(box.lower[i] <= box.upper[i])) {
            throw DomainError("box lower bound exceeds upper bound");
        }
        if (u[i] < box.lower[i] || u[i] > box.upper[i]) {
            throw DomainError("starting point lies outside the admissible box");
        }
    }
}

/// Fresh seed bases for every new sample pool of a run.
class SeedSequence
{
public:
    explicit SeedSequence(std::uint64_t seed) : base_(mix_seed(seed)) {}

    std::uint64_t next() { return mix_seed(base_ + 0x632be59bd9b4e019ULL * ++counter_); }

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

SamplingOptions sampling(const OptimizerConfig& config)
{
    return {config.workers, config.initial_samples, config.sample_cap};
}

Box sampler_box(const ObjectiveSampler& sampler)
{
    Box box;
    box.lower.assign(sampler.dimension(), 0.0);
    box.upper = sampler.upper_bounds();
    require_same_size(box.upper.size(), sampler.dimension(), "sampler bounds");
    return box;
}

void finish(RunLog& log, RunStatus status, std::vector<double> solution)
{
    log.status   = status;
    log.solution = std::move(solution);
    spdlog::info("{} finished: {} after {} iterations, {} simulations", log.algorithm, to_string(status),
                 log.records.size(), log.total_simulations);
}

void push_record(RunLog& log, IterationRecord rec)
{
    log.total_simulations += rec.simulations;
    rec.cumulative_simulations = log.total_simulations;
    log.records.push_back(std::move(rec));
}

/// Latest estimate at the current point, for records that end before a decrease test.
void fill_objective(IterationRecord& rec, const ObjectivePool& current)
{
    if (current.size() > 0) {
        const auto est        = current.estimate();
        rec.objective         = est.mean;
        rec.objective_sigma   = est.std_of_mean;
        rec.objective_samples = est.n;
    }
}

/// u + alpha s inside the box; components that reach a bound are set to it exactly.
std::vector<double> step_in_box(std::span<const double> u, std::span<const double> s, double alpha, const Box& box)
{
    std::vector<double> x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        x[i] = u[i] + alpha * s[i];
        if (s[i] > 0.0 && x[i] >= box.upper[i] - kSnap) {
            x[i] = box.upper[i];
        } else if (s[i] < 0.0 && x[i] <= box.lower[i] + kSnap) {
            x[i] = box.lower[i];
        }
    }
    return clamp_to_box(x, box.lower, box.upper);
}

void set_step(IterationRecord& rec, std::span<const double> u, std::span<const double> next)
{
    rec.step.assign(u.size(), 0.0);
    if (!next.empty()) {
        for (std::size_t i = 0; i < u.size(); ++i) {
            rec.step[i] = next[i] - u[i];
        }
    }
}

AdaptiveGradient sampled_gradient(const ObjectiveSampler& sampler, std::span<const double> u,
                                  const OptimizerConfig& config, std::uint64_t seed_base,
                                  const GradientOracle& override_gradient)
{
    if (override_gradient) {
        return override_gradient(u, seed_base);
    }
    return adaptive_gradient(sampler, u, config.epsilon, config.h_max, seed_base, sampling(config), config.crn);
}

enum class TestOutcome
{
    Accepted,
    Rejected,
    BudgetExhausted,
};

/**
 * Sampled sufficient-decrease test between the current point and a trial point.
 *
 * Both estimates are refined to standard error epsilon * c1 * predicted, then
 * the difference must fall below -(1 + 3 epsilon) * c1 * predicted.
 */
struct DecreaseTest
{
    const ObjectiveSampler& sampler;
    const OptimizerConfig& config;
    SeedSequence& seeds;

    TestOutcome run(ObjectivePool& current, std::optional<ObjectivePool>& trial, std::span<const double> x,
                    double predicted, IterationRecord& rec) const
    {
        const double tolerance = config.epsilon * config.c1 * predicted;
        const auto options     = sampling(config);
        auto r0                = current.refine_to_error(tolerance, options);
        trial.emplace(sampler, std::vector<double>(x.begin(), x.end()), seeds.next());
        auto r1 = trial->refine_to_error(tolerance, options);
        rec.simulations += r0.new_samples + r1.new_samples;

        const auto at_u = current.estimate();
        const auto at_x = trial->estimate();
        rec.objective          = at_u.mean;
        rec.objective_sigma    = at_u.std_of_mean;
        rec.objective_samples  = at_u.n;
        rec.trial_objective    = at_x.mean;
        rec.trial_sigma        = at_x.std_of_mean;
        rec.predicted_decrease = predicted;
        if (!r0.reached || !r1.reached) {
            return TestOutcome::BudgetExhausted;
        }
        const double diff = at_x.mean - at_u.mean;
        return diff <= -(1.0 + 3.0 * config.epsilon) * config.c1 * predicted ? TestOutcome::Accepted
                                                                               : TestOutcome::Rejected;
    }
};

struct StepResult
{
    TestOutcome outcome = TestOutcome::Rejected;
    std::vector<double> next;
};

/// Backtracking along s with halving; gives up below alpha_min.
StepResult inexact_line_search(const DecreaseTest& test, const Box& box, std::span<const double> u,
                               std::span<const double> s, ObjectivePool& current,
                               std::optional<ObjectivePool>& trial, IterationRecord& rec)
{
    const double ss = dot(s, s);
    double alpha    = std::min(test.config.alpha0, max_feasible_step(u, s, box.lower, box.upper));
    while (alpha >= test.config.stochastic_alpha_min) {
        auto x = step_in_box(u, s, alpha, box);
        ++rec.trials;
        rec.step_size = alpha;
        const auto outcome = test.run(current, trial, x, alpha * ss, rec);
        if (outcome != TestOutcome::Rejected) {
            return {outcome, std::move(x)};
        }
        alpha *= 0.5;
    }
    return {TestOutcome::Rejected, {}};
}

} // namespace

void OptimizerConfig::validate() const
{
    if (!(c1 > 0.0 && c1 < 1.0)) {
        throw ConfigError("c1 must lie in (0, 1)");
    }
    if (!(epsilon > 0.0 && epsilon < 0.5)) {
        throw ConfigError("epsilon must lie in (0, 1/2)");
    }
    if (!(alpha0 > 0.0) || !(rho0 > 0.0) || !(h_max > 0.0)) {
        throw ConfigError("alpha0, rho0 and h_max must be positive");
    }
    if (initial_samples < 2 || sample_cap < initial_samples) {
        throw ConfigError("need 2 <= initial_samples <= sample_cap");
    }
    if (!(alpha_min > 0.0) || !(stochastic_alpha_min > 0.0) || !(rho_min > 0.0)) {
        throw ConfigError("step floors must be positive");
    }
    if (!(step_tolerance >= 0.0) || !(inner_tolerance >= 0.0)) {
        throw ConfigError("tolerances must be non-negative");
    }
    if (!(ode_step > 0.0)) {
        throw ConfigError("ode_step must be positive");
    }
}

std::string to_string(RunStatus status)
{
    switch (status) {
    case RunStatus::Converged:
        return "converged";
    case RunStatus::MaxIterations:
        return "max_iterations";
    case RunStatus::BudgetExhausted:
        return "budget_exhausted";
    case RunStatus::Stagnation:
        return "stagnation";
    }
    return "unknown";
}

std::vector<double> project_direction(std::span<const double> x, std::span<const double> y)
{
    const std::vector<double> lower(y.size(), 0.0);
    const std::vector<double> upper(y.size(), 1.0);
    return project_direction(x, y, lower, upper);
}

std::vector<double> project_direction(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> lower, std::span<const double> upper)
{
    require_same_size(x.size(), y.size(), "project_direction");
    require_same_size(y.size(), lower.size(), "project_direction");
    require_same_size(y.size(), upper.size(), "project_direction");
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if ((y[i] <= lower[i] && x[i] < 0.0) || (y[i] >= upper[i] && x[i] > 0.0)) {
            out[i] = 0.0;
        }
    }
    return out;
}

std::vector<double> clamp_to_box(std::span<const double> u, std::span<const double> lower,
                                 std::span<const double> upper)
{
    require_same_size(u.size(), lower.size(), "clamp_to_box");
    require_same_size(u.size(), upper.size(), "clamp_to_box");
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = std::clamp(u[i], lower[i], upper[i]);
    }
    return out;
}

double max_feasible_step(std::span<const double> u, std::span<const double> s, std::span<const double> lower,
                         std::span<const double> upper)
{
    require_same_size(u.size(), s.size(), "max_feasible_step");
    double alpha = kInf;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (s[i] > 0.0) {
            alpha = std::min(alpha, (upper[i] - u[i]) / s[i]);
        } else if (s[i] < 0.0) {
            alpha = std::min(alpha, (lower[i] - u[i]) / s[i]);
        }
    }
    return std::max(alpha, 0.0);
}

OptimizationResult projected_gradient_descent(const SmoothObjective& objective, std::vector<double> u0,
                                              const Box& box, const DescentSettings& settings)
{
    check_box(u0, box);
    RunLog log;
    log.algorithm = "projected_gradient_descent";

    std::vector<double> u = std::move(u0);
    double value          = objective.value(u);
    if (!std::isfinite(value)) {
        throw DomainError("objective is not finite at the starting point");
    }
    for (std::size_t k = 0; k < settings.max_iterations; ++k) {
        IterationRecord rec;
        rec.iteration = k;
        rec.iterate   = u;
        rec.objective = value;

        const auto g = objective.gradient(u);
        std::vector<double> neg(g.size());
        std::transform(g.begin(), g.end(), neg.begin(), [](double v) { return -v; });
        const auto s      = project_direction(neg, u, box.lower, box.upper);
        const double ss   = dot(s, s);
        rec.direction     = s;
        rec.gradient_norm = norm(g);
        if (std::sqrt(ss) <= settings.tolerance) {
            set_step(rec, u, {});
            rec.note = "stationary";
            push_record(log, std::move(rec));
            finish(log, RunStatus::Converged, u);
            return {u, std::move(log)};
        }

        double alpha = std::min(settings.alpha0, max_feasible_step(u, s, box.lower, box.upper));
        std::vector<double> x;
        while (true) {
            x = step_in_box(u, s, alpha, box);
            ++rec.trials;
            const double trial = objective.value(x);
            rec.step_size      = alpha;
            rec.trial_objective    = trial;
            rec.predicted_decrease = alpha * ss;
            if (std::isfinite(trial) && trial - value <= -settings.c1 * alpha * ss) {
                rec.accepted = true;
                break;
            }
            alpha *= 0.5;
            if (alpha < settings.alpha_min) {
                break;
            }
        }
        if (!rec.accepted) {
            set_step(rec, u, {});
            rec.note = "line search failed";
            push_record(log, std::move(rec));
            finish(log, RunStatus::Stagnation, u);
            return {u, std::move(log)};
        }
        set_step(rec, u, x);
        push_record(log, std::move(rec));
        u     = x;
        value = log.records.back().trial_objective;
    }
    finish(log, RunStatus::MaxIterations, u);
    return {u, std::move(log)};
}

SmoothObjective ode_objective(const EpidemicParams& params, std::vector<double> grid, double step)
{
    params.validate();
    auto shared = std::make_shared<const std::pair<EpidemicParams, std::vector<double>>>(params, std::move(grid));
    SmoothObjective out;
    out.value = [shared, step](std::span<const double> u) {
        const auto& [p, g] = *shared;
        for (double v : u) {
            if (!(v >= 0.0 && v <= 1.0)) {
                return kInf;
            }
        }
        const auto schedule = PolicySchedule::from_flat(g, u);
        if (!is_feasible(schedule, p)) {
            return kInf;
        }
        return objective_ode(integrate_ode(p, schedule, step), schedule, p).total;
    };
    out.gradient = [shared, step](std::span<const double> u) {
        const auto& [p, g] = *shared;
        return adjoint_gradient(p, PolicySchedule::from_flat(g, u), step).gradient;
    };
    return out;
}

Box admissible_box(const EpidemicParams& params, std::size_t intervals)
{
    Box box;
    box.lower.assign(2 * intervals, 0.0);
    box.upper.assign(2 * intervals, 1.0);
    const double work_cap = std::max(0.0, std::min(1.0, params.u_w_max - kBarrierMargin));
    for (std::size_t i = 0; i < intervals; ++i) {
        box.upper[work_index(i)] = work_cap;
    }
    return box;
}

OptimizationResult steepest_descent_ode(const EpidemicParams& params, const PolicySchedule& u0,
                                        const OptimizerConfig& config)
{
    config.validate();
    const auto objective = ode_objective(params, u0.grid(), config.ode_step);
    const auto box       = admissible_box(params, u0.intervals());
    DescentSettings settings{config.c1, config.alpha0, config.max_iterations, config.step_tolerance,
                             config.alpha_min};
    auto result          = projected_gradient_descent(objective, u0.flatten(), box, settings);
    result.log.algorithm = "steepest_descent_ode";
    return result;
}

OptimizationResult inexact_gradient_descent(const ObjectiveSampler& fine, std::vector<double> u0,
                                            const OptimizerConfig& config, const GradientOracle& gradient)
{
    config.validate();
    const Box box = sampler_box(fine);
    check_box(u0, box);

    RunLog log;
    log.algorithm = "inexact_gradient_descent";
    SeedSequence seeds(config.seed);
    const DecreaseTest test{fine, config, seeds};

    std::vector<double> u = std::move(u0);
    ObjectivePool current(fine, u, seeds.next());
    std::optional<ObjectivePool> trial;

    for (std::size_t k = 0; k < config.max_iterations; ++k) {
        IterationRecord rec;
        rec.iteration = k;
        rec.iterate   = u;

        const auto g = sampled_gradient(fine, u, config, seeds.next(), gradient);
        rec.simulations += g.estimate.simulations;
        rec.gradient_norm    = g.estimate.norm();
        rec.gradient_sigma   = g.estimate.sigma;
        rec.gradient_samples = g.estimate.n;
        std::vector<double> neg(g.estimate.vector.size());
        std::transform(g.estimate.vector.begin(), g.estimate.vector.end(), neg.begin(), [](double v) { return -v; });
        const auto s  = project_direction(neg, u, box.lower, box.upper);
        rec.direction = s;

        if (g.budget_exhausted) {
            set_step(rec, u, {});
            fill_objective(rec, current);
            rec.note = "gradient sample cap reached";
            push_record(log, std::move(rec));
            finish(log, RunStatus::BudgetExhausted, u);
            return {u, std::move(log)};
        }
        if (norm(s) <= config.step_tolerance) {
            set_step(rec, u, {});
            fill_objective(rec, current);
            rec.note = "stationary";
            push_record(log, std::move(rec));
            finish(log, RunStatus::Converged, u);
            return {u, std::move(log)};
        }

        auto step = inexact_line_search(test, box, u, s, current, trial, rec);
        if (step.outcome != TestOutcome::Accepted) {
            set_step(rec, u, {});
            fill_objective(rec, current);
            const bool budget = step.outcome == TestOutcome::BudgetExhausted;
            rec.note          = budget ? "objective sample cap reached" : "step size below floor";
            push_record(log, std::move(rec));
            finish(log, budget ? RunStatus::BudgetExhausted : RunStatus::Stagnation, u);
            return {u, std::move(log)};
        }
        rec.accepted = true;
        set_step(rec, u, step.next);
        push_record(log, std::move(rec));
        u       = std::move(step.next);
        current = std::move(*trial);
        trial.reset();
    }
    finish(log, RunStatus::MaxIterations, u);
    return {u, std::move(log)};
}

OptimizationResult multilevel_optimize(const ObjectiveSampler& fine, const SmoothObjective& coarse,
                                       std::vector<double> u0, const OptimizerConfig& config,
                                       const GradientOracle& gradient)
{
    config.validate();
    const Box box = sampler_box(fine);
    check_box(u0, box);

    RunLog log;
    log.algorithm = "multilevel_optimize";
    SeedSequence seeds(config.seed);
    const DecreaseTest test{fine, config, seeds};

    std::vector<double> u = std::move(u0);
    ObjectivePool current(fine, u, seeds.next());
    std::optional<ObjectivePool> trial;
    const std::size_t d = u.size();

    for (std::size_t k = 0; k < config.max_iterations; ++k) {
        IterationRecord rec;
        rec.iteration = k;
        rec.iterate   = u;

        const auto g = sampled_gradient(fine, u, config, seeds.next(), gradient);
        rec.simulations += g.estimate.simulations;
        rec.gradient_norm    = g.estimate.norm();
        rec.gradient_sigma   = g.estimate.sigma;
        rec.gradient_samples = g.estimate.n;
        std::vector<double> neg(d);
        std::transform(g.estimate.vector.begin(), g.estimate.vector.end(), neg.begin(), [](double v) { return -v; });
        const auto s  = project_direction(neg, u, box.lower, box.upper);
        rec.direction = s;

        if (g.budget_exhausted) {
            set_step(rec, u, {});
            fill_objective(rec, current);
            rec.note = "gradient sample cap reached";
            push_record(log, std::move(rec));
            finish(log, RunStatus::BudgetExhausted, u);
            return {u, std::move(log)};
        }
        if (norm(s) <= config.step_tolerance) {
            set_step(rec, u, {});
            fill_objective(rec, current);
            rec.note = "stationary";
            push_record(log, std::move(rec));
            finish(log, RunStatus::Converged, u);
            return {u, std::move(log)};
        }

        // first-order correction: the model's gradient at du = 0 equals -s
        const auto coarse_grad = coarse.gradient(u);
        std::vector<double> correction(d);
        for (std::size_t i = 0; i < d; ++i) {
            correction[i] = s[i] + coarse_grad[i];
        }
        const std::vector<double> base = u;
        SmoothObjective model;
        model.value = [&](std::span<const double> du) {
            std::vector<double> x(d);
            for (std::size_t i = 0; i < d; ++i) {
                x[i] = base[i] + du[i];
            }
            return coarse.value(x) - dot(correction, du);
        };
        model.gradient = [&](std::span<const double> du) {
            std::vector<double> x(d);
            for (std::size_t i = 0; i < d; ++i) {
                x[i] = base[i] + du[i];
            }
            auto gc = coarse.gradient(x);
            for (std::size_t i = 0; i < d; ++i) {
                gc[i] -= correction[i];
            }
            return gc;
        };
        const DescentSettings inner{config.c1, config.alpha0, config.inner_max_iterations, config.inner_tolerance,
                                    config.alpha_min};

        TestOutcome outcome = TestOutcome::Rejected;
        std::vector<double> next;
        double rho = config.rho0;
        while (rho >= config.rho_min) {
            Box region;
            region.lower.resize(d);
            region.upper.resize(d);
            for (std::size_t i = 0; i < d; ++i) {
                region.lower[i] = std::max(box.lower[i] - u[i], -rho);
                region.upper[i] = std::min(box.upper[i] - u[i], rho);
            }
            ++rec.trials;
            rec.step_size   = rho;
            const auto sub  = projected_gradient_descent(model, std::vector<double>(d, 0.0), region, inner);
            const auto& du  = sub.solution;
            const double pred = dot(du, s);
            if (pred > 0.0) {
                auto x  = step_in_box(u, du, 1.0, box);
                outcome = test.run(current, trial, x, pred, rec);
                if (outcome != TestOutcome::Rejected) {
                    next = std::move(x);
                    break;
                }
            }
            rho *= 0.5;
        }
        if (outcome == TestOutcome::Rejected) {
            // the coarse model gave no usable step at any radius: take an inexact gradient step
            rec.note = "radius below floor, gradient step";
            log.events.push_back("iteration " + std::to_string(k) + ": fallback to gradient step");
            auto step = inexact_line_search(test, box, u, s, current, trial, rec);
            outcome   = step.outcome;
            next      = std::move(step.next);
        }
        if (outcome != TestOutcome::Accepted) {
            set_step(rec, u, {});
            fill_objective(rec, current);
            const bool budget = outcome == TestOutcome::BudgetExhausted;
            rec.note          = budget ? "objective sample cap reached" : "no acceptable step";
            push_record(log, std::move(rec));
            finish(log, budget ? RunStatus::BudgetExhausted : RunStatus::Stagnation, u);
            return {u, std::move(log)};
        }
        rec.accepted = true;
        set_step(rec, u, next);
        push_record(log, std::move(rec));
        u       = std::move(next);
        current = std::move(*trial);
        trial.reset();
    }
    finish(log, RunStatus::MaxIterations, u);
    return {u, std::move(log)};
}

OptimizationResult multilevel_optimize(const EpidemicParams& fine_params, const EpidemicParams& coarse_params,
                                       const PolicySchedule& u0, const OptimizerConfig& config)
{
    const AbmObjective fine(fine_params, u0.grid());
    const auto coarse = ode_objective(coarse_params, u0.grid(), config.ode_step);
    return multilevel_optimize(fine, coarse, u0.flatten(), config);
}

OptimizationResult kiefer_wolfowitz(const ObjectiveSampler& sampler, std::vector<double> u0,
                                    const OptimizerConfig& config, const KieferWolfowitzSettings& settings)
{
    config.validate();
    if (!(settings.gain > 0.0) || !(settings.h0 > 0.0) || settings.batch == 0) {
        throw ConfigError("Kiefer-Wolfowitz needs gain > 0, h0 > 0 and batch >= 1");
    }
    const Box box = sampler_box(sampler);
    check_box(u0, box);

    RunLog log;
    log.algorithm = "kiefer_wolfowitz";
    SeedSequence seeds(config.seed);
    const std::size_t d = u0.size();
    std::vector<double> u = u0;
    std::vector<double> average(d, 0.0);

    for (std::size_t k = 1; k <= config.max_iterations; ++k) {
        IterationRecord rec;
        rec.iteration = k - 1;
        rec.iterate   = u;
        const double kk  = static_cast<double>(k);
        const double h_k = std::pow(kk, settings.exponent) * settings.h0;
        const double a_k = settings.gain / kk;

        GradientPool pool(sampler, u, h_k, config.crn, seeds.next());
        rec.simulations = pool.extend_to(settings.batch, config.workers);
        const auto g    = pool.estimate();
        rec.gradient_norm    = g.norm();
        rec.gradient_sigma   = g.sigma;
        rec.gradient_samples = g.n;
        rec.step_size        = a_k;

        std::vector<double> x(d);
        rec.direction.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            rec.direction[i] = -g.vector[i];
            x[i]             = u[i] - a_k * g.vector[i];
        }
        x = clamp_to_box(x, box.lower, box.upper);
        set_step(rec, u, x);
        rec.accepted = true;
        push_record(log, std::move(rec));
        u = std::move(x);
        for (std::size_t i = 0; i < d; ++i) {
            average[i] += u[i];
        }
    }
    if (config.max_iterations == 0) {
        finish(log, RunStatus::MaxIterations, u0);
        return {u0, std::move(log)};
    }
    for (double& v : average) {
        v /= static_cast<double>(config.max_iterations);
    }
    finish(log, RunStatus::MaxIterations, average);
    return {average, std::move(log)};
}

} // namespace epiopt
