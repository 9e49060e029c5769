#include "epiopt/analysis.hpp"

#include "epiopt/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace epiopt
{

namespace
{

void enumerate_exponents(std::size_t dimension, int degree, std::vector<int>& current, std::size_t position,
                         int remaining, std::vector<std::vector<int>>& out)
{
    if (position == dimension) {
        out.push_back(current);
        return;
    }
    for (int e = 0; e <= remaining; ++e) {
        current[position] = e;
        enumerate_exponents(dimension, degree, current, position + 1, remaining - e, out);
    }
    current[position] = 0;
}

/// Basis ordered by total degree, then lexicographically.
std::vector<std::vector<int>> exponent_table(std::size_t dimension, int degree)
{
    std::vector<std::vector<int>> out;
    std::vector<int> current(dimension, 0);
    enumerate_exponents(dimension, degree, current, 0, degree, out);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::accumulate(a.begin(), a.end(), 0) < std::accumulate(b.begin(), b.end(), 0);
    });
    return out;
}

double monomial(std::span<const double> x, const std::vector<int>& e)
{
    double v = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int p = 0; p < e[i]; ++p) {
            v *= x[i];
        }
    }
    return v;
}

void require_symmetric(const Eigen::MatrixXd& m, const char* name)
{
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw DomainError(std::string(name) + " must be a non-empty square matrix");
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw DomainError(std::string(name) + " must be symmetric");
    }
}

} // namespace

double SurrogateFit::evaluate(std::span<const double> u) const
{
    if (u.size() != center.size()) {
        throw DomainError("surrogate evaluated with the wrong dimension");
    }
    std::vector<double> x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        x[i] = u[i] - center[i];
    }
    double v = 0.0;
    for (std::size_t j = 0; j < exponents.size(); ++j) {
        v += coefficients[static_cast<Eigen::Index>(j)] * monomial(x, exponents[j]);
    }
    return v;
}

std::size_t monomial_count(std::size_t dimension, int degree)
{
    if (degree < 0) {
        throw DomainError("polynomial degree must be non-negative");
    }
    // binomial(dimension + degree, degree)
    double count = 1.0;
    for (int k = 1; k <= degree; ++k) {
        count = count * static_cast<double>(dimension + static_cast<std::size_t>(k)) / static_cast<double>(k);
    }
    return static_cast<std::size_t>(std::llround(count));
}

SurrogateFit fit_surrogate(std::span<const std::vector<double>> points, std::span<const double> values, int degree,
                           std::span<const double> center)
{
    if (degree < 2) {
        throw DomainError("a Hessian needs a polynomial degree of at least 2");
    }
    if (points.size() != values.size()) {
        throw DomainError("one objective value per sample point is required");
    }
    const std::size_t d     = center.size();
    const std::size_t basis = monomial_count(d, degree);
    if (points.size() < 2 * basis) {
        throw IllPosedFit("degree " + std::to_string(degree) + " needs at least " + std::to_string(2 * basis) +
                          " samples, got " + std::to_string(points.size()));
    }

    SurrogateFit fit;
    fit.points.assign(points.begin(), points.end());
    fit.values.assign(values.begin(), values.end());
    fit.degree    = degree;
    fit.center.assign(center.begin(), center.end());
    fit.exponents = exponent_table(d, degree);

    const auto rows = static_cast<Eigen::Index>(points.size());
    const auto cols = static_cast<Eigen::Index>(basis);
    Eigen::MatrixXd design(rows, cols);
    Eigen::VectorXd rhs(rows);
    std::vector<double> x(d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& p = points[static_cast<std::size_t>(r)];
        if (p.size() != d) {
            throw DomainError("sample point has the wrong dimension");
        }
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = p[i] - center[i];
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            design(r, c) = monomial(x, fit.exponents[static_cast<std::size_t>(c)]);
        }
        rhs[r] = values[static_cast<std::size_t>(r)];
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < cols) {
        throw IllPosedFit("rank-deficient design matrix (rank " + std::to_string(qr.rank()) + " of " +
                          std::to_string(cols) + ")");
    }
    fit.coefficients = qr.solve(rhs);
    fit.rms_residual = std::sqrt((design * fit.coefficients - rhs).squaredNorm() / static_cast<double>(rows));

    // at the center only the quadratic monomials contribute to the Hessian
    fit.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < fit.exponents.size(); ++j) {
        const auto& e = fit.exponents[j];
        if (std::accumulate(e.begin(), e.end(), 0) != 2) {
            continue;
        }
        const double c = fit.coefficients[static_cast<Eigen::Index>(j)];
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < d; ++i) {
            for (int p = 0; p < e[i]; ++p) {
                idx.push_back(static_cast<Eigen::Index>(i));
            }
        }
        if (idx[0] == idx[1]) {
            fit.hessian(idx[0], idx[0]) += 2.0 * c;
        } else {
            fit.hessian(idx[0], idx[1]) += c;
            fit.hessian(idx[1], idx[0]) += c;
        }
    }
    fit.hessian = 0.5 * (fit.hessian + fit.hessian.transpose()).eval();
    return fit;
}

std::vector<std::vector<double>> grid_points(std::size_t per_axis, std::span<const double> lower,
                                             std::span<const double> upper)
{
    if (per_axis < 2 || lower.size() != upper.size() || lower.empty()) {
        throw DomainError("grid needs at least two nodes per axis and matching bounds");
    }
    const std::size_t d = lower.size();
    std::size_t total   = 1;
    for (std::size_t i = 0; i < d; ++i) {
        total *= per_axis;
    }
    std::vector<std::vector<double>> out;
    out.reserve(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::vector<double> p(d);
        std::size_t rest = flat;
        for (std::size_t i = 0; i < d; ++i) {
            const std::size_t k = rest % per_axis;
            rest /= per_axis;
            p[i] = lower[i] + (upper[i] - lower[i]) * static_cast<double>(k) / static_cast<double>(per_axis - 1);
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::vector<double>> latin_hypercube(std::span<const double> center, double radius, std::size_t count,
                                                 std::span<const double> lower, std::span<const double> upper,
                                                 std::uint64_t seed)
{
    if (!(radius > 0.0) || count == 0 || center.size() != lower.size() || center.size() != upper.size()) {
        throw DomainError("latin hypercube needs radius > 0, count > 0 and matching bounds");
    }
    const std::size_t d = center.size();
    StreamRng rng(SimSeed{seed, 0});
    std::vector<std::vector<double>> out(count, std::vector<double>(d));
    std::vector<std::size_t> strata(count);
    for (std::size_t i = 0; i < d; ++i) {
        std::iota(strata.begin(), strata.end(), 0);
        std::shuffle(strata.begin(), strata.end(), rng);
        for (std::size_t k = 0; k < count; ++k) {
            const double frac = (static_cast<double>(strata[k]) + rng.uniform()) / static_cast<double>(count);
            out[k][i]         = std::clamp(center[i] - radius + 2.0 * radius * frac, lower[i], upper[i]);
        }
    }
    return out;
}

double rate_from_condition(double kappa)
{
    if (!(kappa >= 1.0)) {
        throw DomainError("condition number must be at least 1");
    }
    return (kappa - 1.0) / (kappa + 1.0);
}

ConditionRate condition_and_rate(const Eigen::MatrixXd& h_coarse, const Eigen::MatrixXd& h_fine)
{
    require_symmetric(h_coarse, "coarse Hessian");
    require_symmetric(h_fine, "fine Hessian");
    if (h_coarse.rows() != h_fine.rows()) {
        throw DomainError("Hessians must have the same size");
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(h_coarse);
    if (llt.info() != Eigen::Success) {
        throw DomainError("coarse Hessian is not positive definite");
    }
    // L^{-1} H_fine L^{-T} has the generalized eigenvalues of (H_fine, H_coarse)
    const auto lower      = llt.matrixL();
    Eigen::MatrixXd left  = lower.solve(h_fine);
    Eigen::MatrixXd sim   = lower.solve(left.transpose()).transpose();
    sim                   = 0.5 * (sim + sim.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sim, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) {
        throw DomainError("fine Hessian is not positive definite");
    }
    ConditionRate out;
    out.kappa = std::max(1.0, hi / lo);
    out.rho   = rate_from_condition(out.kappa);
    return out;
}

double contraction_rate(std::span<const double> errors)
{
    if (errors.size() < 2) {
        throw DomainError("a contraction rate needs at least two errors");
    }
    std::vector<double> envelope(errors.begin(), errors.end());
    bool monotone = true;
    for (std::size_t k = 0; k < envelope.size(); ++k) {
        if (!(envelope[k] >= 0.0)) {
            throw DomainError("errors must be non-negative");
        }
        if (k > 0 && envelope[k] > envelope[k - 1]) {
            monotone    = false;
            envelope[k] = envelope[k - 1];
        }
    }
    if (!monotone) {
        spdlog::warn("error sequence is not monotone; using its running minimum");
    }
    if (envelope.front() == 0.0) {
        return 0.0;
    }
    const double steps = static_cast<double>(envelope.size() - 1);
    return std::pow(envelope.back() / envelope.front(), 1.0 / steps);
}

double experimental_rate(const RunLog& log, double reference_value)
{
    if (log.records.size() < 4) {
        throw DomainError("an experimental rate needs at least four recorded iterations");
    }
    std::vector<double> errors;
    errors.reserve(log.records.size());
    for (const auto& r : log.records) {
        errors.push_back(std::abs(r.objective - reference_value));
    }
    return contraction_rate(errors);
}

nlohmann::json analysis_report(std::span<const RateRow> rows)
{
    nlohmann::json condition   = nlohmann::json::array();
    nlohmann::json theoretical = nlohmann::json::array();
    nlohmann::json experiment  = nlohmann::json::array();
    for (const auto& r : rows) {
        condition.push_back({{"model", r.label},
                             {"kappa_fine", r.unpreconditioned.kappa},
                             {"kappa_preconditioned", r.preconditioned.kappa}});
        theoretical.push_back(
            {{"model", r.label}, {"rho_fine", r.unpreconditioned.rho}, {"rho_preconditioned", r.preconditioned.rho}});
        nlohmann::json e = {{"model", r.label}};
        e["igd"]         = r.experimental_igd ? nlohmann::json(*r.experimental_igd) : nlohmann::json(nullptr);
        e["mlo"]         = r.experimental_mlo ? nlohmann::json(*r.experimental_mlo) : nlohmann::json(nullptr);
        experiment.push_back(std::move(e));
    }
    return {{"condition", condition}, {"theoretical_rate", theoretical}, {"experimental_rate", experiment}};
}

} // namespace epiopt
