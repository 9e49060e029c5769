#pragma once

// Monte Carlo estimation of the expected objective and of its finite-difference
// gradient, with sample-size control and common random numbers.

#include "epiopt/abm.hpp"
#include "epiopt/model.hpp"
#include "epiopt/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace epiopt
{

/// One random objective value J(u)_i. Implementations must be pure in (u, seed).
class ObjectiveSampler
{
public:
    virtual ~ObjectiveSampler() = default;

    virtual std::size_t dimension() const = 0;
    virtual double sample(std::span<const double> u, SimSeed seed) const = 0;

    /// Largest admissible value per coordinate; the lower bound is always 0.
    virtual std::vector<double> upper_bounds() const { return std::vector<double>(dimension(), 1.0); }
};

/// Distance kept from the home-office barrier u_w_max when stepping or projecting.
inline constexpr double kBarrierMargin = 1e-6;

/// J^ABM on a fixed policy grid; every sample is one SSA run.
class AbmObjective final : public ObjectiveSampler
{
public:
    AbmObjective(EpidemicParams params, std::vector<double> grid, std::optional<AbmState> initial = std::nullopt);

    std::size_t dimension() const override { return 2 * (grid_.size() - 1); }
    double sample(std::span<const double> u, SimSeed seed) const override;
    std::vector<double> upper_bounds() const override;

    const EpidemicParams& params() const { return params_; }
    const std::vector<double>& grid() const { return grid_; }

private:
    EpidemicParams params_;
    std::vector<double> grid_;
    std::optional<AbmState> initial_;
};

/// Wraps a callable; used for injected test objectives and deterministic models.
class FunctionObjective final : public ObjectiveSampler
{
public:
    using Function = std::function<double(std::span<const double>, SimSeed)>;

    FunctionObjective(std::size_t dimension, Function fn, std::vector<double> upper = {});

    std::size_t dimension() const override { return dimension_; }
    double sample(std::span<const double> u, SimSeed seed) const override { return fn_(u, seed); }
    std::vector<double> upper_bounds() const override;

private:
    std::size_t dimension_;
    Function fn_;
    std::vector<double> upper_;
};

struct SamplingOptions
{
    std::size_t workers         = 0;
    std::size_t initial_samples = 100;
    std::size_t sample_cap      = 1'000'000;
};

struct McEstimate
{
    double mean        = 0.0;
    double std_of_mean = 0.0; ///< sigma_n / sqrt(n)
    std::size_t n      = 0;
    std::vector<double> samples; ///< empty unless retained

    static McEstimate from_samples(std::span<const double> values, bool keep_samples = false);
};

/// Samples J at one point; sample i uses SimSeed{seed_base, i}, so growing the pool reuses earlier samples.
class ObjectivePool
{
public:
    ObjectivePool(const ObjectiveSampler& sampler, std::vector<double> u, std::uint64_t seed_base);

    /// Grows the pool to n samples; returns the number of new samples.
    std::size_t extend_to(std::size_t n, std::size_t workers);

    struct Refinement
    {
        bool reached           = false;
        std::size_t new_samples = 0;
    };

    /// Doubles n (starting at options.initial_samples) until std_of_mean <= target or 2n would exceed the cap.
    Refinement refine_to_error(double target, const SamplingOptions& options);

    McEstimate estimate(bool keep_samples = false) const { return McEstimate::from_samples(values_, keep_samples); }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& point() const { return u_; }

private:
    const ObjectiveSampler* sampler_;
    std::vector<double> u_;
    std::uint64_t seed_base_;
    std::vector<double> values_;
};

McEstimate estimate_objective(const ObjectiveSampler& sampler, std::span<const double> u, std::size_t n,
                              std::uint64_t seed_base, std::size_t workers = 0);

struct TargetedEstimate
{
    McEstimate estimate;
    bool budget_exhausted = false;
};

TargetedEstimate estimate_objective_to_error(const ObjectiveSampler& sampler, std::span<const double> u,
                                             double target_error, std::uint64_t seed_base,
                                             const SamplingOptions& options = {});

enum class Difference : std::uint8_t
{
    Central,
    Forward,
    Backward,
};

struct GradientEstimate
{
    std::vector<double> vector;
    Eigen::MatrixXd covariance; ///< sample covariance V_n of per-sample difference quotients
    double sigma = 0.0;         ///< sqrt(||V_n||_2 / n)
    std::size_t n = 0;
    std::vector<double> h;
    std::vector<Difference> kind;
    std::size_t simulations = 0; ///< sampler calls spent on this estimate

    double norm() const;
};

/// Per-coordinate step: min(h, distance to both bounds); below min_step, one-sided toward the roomier side.
struct StepPlan
{
    std::vector<double> h;
    std::vector<Difference> kind;
};

StepPlan plan_steps(std::span<const double> u, double h, std::span<const double> upper, double min_step = 1e-6);

/**
 * Finite-difference gradient samples at one point.
 *
 * With common random numbers, every evaluation belonging to sample i uses
 * stream i; otherwise each evaluation gets its own stream.
 */
class GradientPool
{
public:
    GradientPool(const ObjectiveSampler& sampler, std::vector<double> u, double h, bool crn, std::uint64_t seed_base);

    std::size_t extend_to(std::size_t n, std::size_t workers);
    GradientEstimate estimate() const;
    std::size_t size() const { return rows_.size(); }
    const StepPlan& plan() const { return plan_; }

private:
    std::vector<double> compute_sample(std::size_t i) const;
    std::size_t evaluations_per_sample() const;

    const ObjectiveSampler* sampler_;
    std::vector<double> u_;
    StepPlan plan_;
    bool crn_;
    std::uint64_t seed_base_;
    std::vector<std::vector<double>> rows_;
};

GradientEstimate fd_gradient(const ObjectiveSampler& sampler, std::span<const double> u, double h, std::size_t n,
                             bool crn, std::uint64_t seed_base, std::size_t workers = 0);

struct AdaptiveGradient
{
    GradientEstimate estimate;
    bool budget_exhausted    = false;
    double relative_accuracy = 0.0; ///< 2 sigma / ||g|| achieved
};

/// Doubles n until 2 sigma <= epsilon ||g|| or the cap; h = min(h_max, room to the bounds).
AdaptiveGradient adaptive_gradient(const ObjectiveSampler& sampler, std::span<const double> u, double epsilon,
                                   double h_max, std::uint64_t seed_base, const SamplingOptions& options = {},
                                   bool crn = true);

/**
 * Sample size balancing the O(h^2) differencing error against the sampling error
 * sigma / (h sqrt(n)) for independent samples (n ~ sigma^2 h^-6), or sigma / sqrt(n)
 * with common random numbers (n ~ sigma^2 h^-4).
 */
std::size_t recommended_sample_size(double h, double sigma, bool crn);

/// Raw samples as index,value rows (estimate must retain its samples).
void write_samples_csv(std::ostream& out, const McEstimate& estimate);

} // namespace epiopt
