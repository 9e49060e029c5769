#pragma once

// Projected gradient descent on the ODE, inexact gradient descent and two-level
// trust-region optimization on the sampled objective, and Kiefer-Wolfowitz
// stochastic approximation.

#include "epiopt/estimation.hpp"
#include "epiopt/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace epiopt
{

/// Defaults follow the published optimization settings (c_1, rho_0, h_max, epsilon, alpha_0, K).
struct OptimizerConfig
{
    double c1      = 0.1;
    double alpha0  = 1.0;
    double rho0    = 0.5;
    double epsilon = 0.25;
    double h_max   = 0.1;
    std::size_t max_iterations = 15;

    std::size_t sample_cap      = 1'000'000;
    std::size_t initial_samples = 100;
    bool crn                    = true;
    std::size_t workers         = 0;
    std::uint64_t seed          = 1;

    /// Projected-gradient norm treated as stationary.
    double step_tolerance = 1e-3;
    /// Line-search floor of the deterministic method.
    double alpha_min = 1e-8;
    /// Step-size and radius floors of the sampled methods.
    double stochastic_alpha_min = 1e-6;
    double rho_min              = 1e-6;

    /// Coarse subproblem solved with projected gradient descent to this tolerance.
    double inner_tolerance          = 1e-6;
    std::size_t inner_max_iterations = 200;

    double ode_step = 1.0;

    void validate() const;
};

struct KieferWolfowitzSettings
{
    double gain     = 1e-4;       ///< c in the step c / k
    double exponent = -1.0 / 6.0; ///< p in h_k = k^p h_0
    double h0       = 0.1;
    std::size_t batch = 10;
};

enum class RunStatus
{
    Converged,
    MaxIterations,
    BudgetExhausted,
    Stagnation,
};

std::string to_string(RunStatus status);

struct IterationRecord
{
    std::size_t iteration = 0;
    std::vector<double> iterate;   ///< u_k
    std::vector<double> direction; ///< s_k
    std::vector<double> step;      ///< applied step u_{k+1} - u_k (zero when rejected)
    double step_size = 0.0;        ///< alpha, or the trust-region radius rho

    double objective       = 0.0; ///< estimate of J(u_k)
    double objective_sigma = 0.0;
    std::size_t objective_samples = 0;
    double trial_objective       = 0.0; ///< estimate of J at the last trial point
    double trial_sigma           = 0.0;
    double predicted_decrease    = 0.0; ///< alpha ||s||^2 or du^T s of the last trial

    double gradient_norm  = 0.0;
    double gradient_sigma = 0.0;
    std::size_t gradient_samples = 0;

    std::size_t trials = 0; ///< trial steps tested (line search or radius halvings)
    bool accepted      = false;
    std::size_t simulations            = 0;
    std::size_t cumulative_simulations = 0;
    std::string note;
};

struct RunLog
{
    std::string algorithm;
    std::vector<IterationRecord> records;
    RunStatus status = RunStatus::MaxIterations;
    std::vector<double> solution;
    std::size_t total_simulations = 0;
    std::vector<std::string> events;
};

struct OptimizationResult
{
    std::vector<double> solution;
    RunLog log;
};

/// P_U(x, y) on the unit box: zero the components of x that point out of U at y.
std::vector<double> project_direction(std::span<const double> x, std::span<const double> y);
std::vector<double> project_direction(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> lower, std::span<const double> upper);

/// Componentwise clamp; Pi_U for the unit box.
std::vector<double> clamp_to_box(std::span<const double> u, std::span<const double> lower,
                                 std::span<const double> upper);

/// max{a >= 0 : lower <= u + a s <= upper}; infinite for s = 0.
double max_feasible_step(std::span<const double> u, std::span<const double> s, std::span<const double> lower,
                         std::span<const double> upper);

struct Box
{
    std::vector<double> lower;
    std::vector<double> upper;
};

/// Deterministic objective with gradient. `value` may return +inf outside its domain.
struct SmoothObjective
{
    std::function<double(std::span<const double>)> value;
    std::function<std::vector<double>(std::span<const double>)> gradient;
};

struct DescentSettings
{
    double c1      = 0.1;
    double alpha0  = 1.0;
    std::size_t max_iterations = 15;
    double tolerance = 1e-3;
    double alpha_min = 1e-8;
};

/// Projected steepest descent with Armijo backtracking (halving) inside a box.
OptimizationResult projected_gradient_descent(const SmoothObjective& objective, std::vector<double> u0,
                                              const Box& box, const DescentSettings& settings);

/// J^ODE and its adjoint gradient on a fixed policy grid; +inf beyond the home-office barrier.
SmoothObjective ode_objective(const EpidemicParams& params, std::vector<double> grid, double step);

/// The admissible box [0,1]^{n_u} with the work controls capped just below u_w_max.
Box admissible_box(const EpidemicParams& params, std::size_t intervals);

OptimizationResult steepest_descent_ode(const EpidemicParams& params, const PolicySchedule& u0,
                                        const OptimizerConfig& config);

/// Replaces the sampled gradient (e.g. by an exact one in tests).
using GradientOracle = std::function<AdaptiveGradient(std::span<const double> u, std::uint64_t seed_base)>;

OptimizationResult inexact_gradient_descent(const ObjectiveSampler& fine, std::vector<double> u0,
                                            const OptimizerConfig& config, const GradientOracle& gradient = {});

/**
 * Two-level optimization: trial steps minimize the first-order corrected coarse
 * model J_c(u_k + du) - (s_k + grad J_c(u_k))^T du over the box intersected with
 * an l-infinity trust region; the radius halves until the sampled acceptance
 * test on the fine objective passes.
 */
OptimizationResult multilevel_optimize(const ObjectiveSampler& fine, const SmoothObjective& coarse,
                                       std::vector<double> u0, const OptimizerConfig& config,
                                       const GradientOracle& gradient = {});

OptimizationResult multilevel_optimize(const EpidemicParams& fine_params, const EpidemicParams& coarse_params,
                                       const PolicySchedule& u0, const OptimizerConfig& config);

/// Mini-batch Kiefer-Wolfowitz with step c/k, h_k = k^p h_0 and iterate averaging.
OptimizationResult kiefer_wolfowitz(const ObjectiveSampler& sampler, std::vector<double> u0,
                                    const OptimizerConfig& config, const KieferWolfowitzSettings& settings);

} // namespace epiopt
