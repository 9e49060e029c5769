#pragma once

// Polynomial surrogates of the sampled objective, preconditioned condition
// numbers and steepest-descent contraction rates.

#include "epiopt/model.hpp"
#include "epiopt/optimizers.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace epiopt
{

class IllPosedFit : public DomainError
{
public:
    using DomainError::DomainError;
};

struct SurrogateFit
{
    std::vector<std::vector<double>> points;
    std::vector<double> values;
    int degree = 0;
    std::vector<double> center;
    /// Monomial exponents, one row per basis function, in powers of (u - center).
    std::vector<std::vector<int>> exponents;
    Eigen::VectorXd coefficients;
    /// Symmetrized Hessian at the center.
    Eigen::MatrixXd hessian;
    double rms_residual = 0.0;

    double evaluate(std::span<const double> u) const;
};

/// Number of monomials of total degree <= degree in `dimension` variables.
std::size_t monomial_count(std::size_t dimension, int degree);

/// Least-squares polynomial fit; needs at least twice as many points as monomials.
SurrogateFit fit_surrogate(std::span<const std::vector<double>> points, std::span<const double> values, int degree,
                           std::span<const double> center);

/// Tensor grid with `per_axis` nodes per coordinate between lower and upper.
std::vector<std::vector<double>> grid_points(std::size_t per_axis, std::span<const double> lower,
                                             std::span<const double> upper);

/// Latin hypercube of `count` points in the cube of half-width radius around center, clipped to [lower, upper].
std::vector<std::vector<double>> latin_hypercube(std::span<const double> center, double radius, std::size_t count,
                                                 std::span<const double> lower, std::span<const double> upper,
                                                 std::uint64_t seed);

struct ConditionRate
{
    double kappa = 1.0;
    double rho   = 0.0;
};

/// (kappa - 1) / (kappa + 1)
double rate_from_condition(double kappa);

/// Condition number of H_coarse^{-1} H_fine via the Cholesky factor of H_coarse.
ConditionRate condition_and_rate(const Eigen::MatrixXd& h_coarse, const Eigen::MatrixXd& h_fine);

/// Geometric-mean contraction factor of an error sequence (monotone envelope if needed).
double contraction_rate(std::span<const double> errors);

/// contraction_rate of |J(u_k) - reference| over the recorded objective estimates; needs 4 records.
double experimental_rate(const RunLog& log, double reference_value);

struct RateRow
{
    std::string label;
    ConditionRate unpreconditioned;         ///< kappa(H_fine)
    ConditionRate preconditioned;           ///< kappa(H_coarse^{-1} H_fine)
    std::optional<double> experimental_igd; ///< measured contraction, if available
    std::optional<double> experimental_mlo;
};

/// Condition, theoretical-rate and experimental-rate blocks.
nlohmann::json analysis_report(std::span<const RateRow> rows);

} // namespace epiopt
