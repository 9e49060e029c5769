#pragma once

// Weighted least-squares fit of the five ODE rates to mean agent-model
// infected trajectories.

#include "epiopt/abm.hpp"
#include "epiopt/model.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <span>
#include <vector>

namespace epiopt
{

inline constexpr double kVarianceFloor = 1e-8;

/// Targets on the hourly grid 0, 1, ..., floor(T), as population fractions.
struct FitProblem
{
    std::vector<double> times;
    std::vector<double> mean_adults;
    std::vector<double> mean_children;
    std::vector<double> var_adults;
    std::vector<double> var_children;

    /// Population, initial state and controls used for the ODE; also the initial guess.
    EpidemicParams initial_guess;
    PolicySchedule schedule = PolicySchedule::uniform(1.0, 1);
    double ode_step         = 1.0;

    void validate() const;
};

/// Pointwise mean and unbiased variance of I_a/N and I_c/N over at least two trajectories.
FitProblem build_fit_problem(std::span<const AbmTrajectory> samples, const EpidemicParams& params,
                             const PolicySchedule& schedule);
/// Same from trajectories already reduced to the hourly grid (AbmTrajectory::hourly()).
FitProblem build_fit_problem(std::span<const std::vector<AbmState>> hourly, const EpidemicParams& params,
                             const PolicySchedule& schedule);

/// Order of the fitted parameters.
inline constexpr std::array<const char*, 5> kFitParameterNames = {"r_aa", "r_ac", "r_cc", "r_a", "r_c"};

struct FitOptions
{
    std::size_t max_iterations = 500;
    /// Stop when the relative decrease of the residual falls below this.
    double relative_tolerance = 1e-14;
    double absolute_tolerance = 1e-24;
    double fd_step            = 1e-7;
};

struct FitResult
{
    EpidemicParams params;
    double residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;
};

/// Weighted residual sum_t dt [ (I_a - mean_a)^2 / var_a + (I_c - mean_c)^2 / var_c ] using every `stride`-th node.
double fit_residual(const FitProblem& problem, const EpidemicParams& params, std::size_t stride = 1);

/**
 * Levenberg-Marquardt on the five rates with a forward-difference Jacobian.
 *
 * Rates are clamped to be non-negative and returned in the scale of the initial
 * guess. After max_iterations the best point found is returned with
 * converged = false.
 */
FitResult fit_ode_parameters(const FitProblem& problem, const FitOptions& options = {});

/// Initial guess from the default ODE rates, each multiplied by `perturbation`.
EpidemicParams perturbed_guess(const EpidemicParams& base, double perturbation);

nlohmann::json fit_report(const FitProblem& problem, const FitResult& result);

} // namespace epiopt
