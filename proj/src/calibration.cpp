#include "epiopt/calibration.hpp"

#include "epiopt/ode.hpp"
#include "epiopt/report.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace epiopt
{

namespace
{

using Vector5 = Eigen::Matrix<double, 5, 1>;

Vector5 rates_of(const EpidemicParams& p)
{
    Vector5 v;
    v << p.r_aa, p.r_ac, p.r_cc, p.r_a, p.r_c;
    return v;
}

EpidemicParams with_rates(EpidemicParams p, const Vector5& v)
{
    p.r_aa = v[0];
    p.r_ac = v[1];
    p.r_cc = v[2];
    p.r_a  = v[3];
    p.r_c  = v[4];
    return p;
}

/// Weighted residual vector; its squared norm is fit_residual(stride = 1).
Eigen::VectorXd residual_vector(const FitProblem& problem, const EpidemicParams& params)
{
    const auto traj     = integrate_ode(params, problem.schedule, problem.ode_step);
    const std::size_t m = problem.times.size();
    Eigen::VectorXd r(2 * m);
    // hourly node k sits at trajectory index k / ode_step
    const double per_hour = 1.0 / problem.ode_step;
    for (std::size_t k = 0; k < m; ++k) {
        const auto idx  = static_cast<std::size_t>(std::llround(problem.times[k] * per_hour));
        const auto& y = traj.states.at(idx);
        // hourly nodes: dt = 1
        r[static_cast<Eigen::Index>(2 * k)]     = (y.i_a - problem.mean_adults[k]) / std::sqrt(problem.var_adults[k]);
        r[static_cast<Eigen::Index>(2 * k + 1)] = (y.i_c - problem.mean_children[k]) / std::sqrt(problem.var_children[k]);
    }
    return r;
}

} // namespace

void FitProblem::validate() const
{
    const std::size_t m = times.size();
    if (m < 2 || mean_adults.size() != m || mean_children.size() != m || var_adults.size() != m ||
        var_children.size() != m) {
        throw DomainError("fit targets and weights must share one grid of at least two nodes");
    }
    for (std::size_t k = 0; k < m; ++k) {
        if (times[k] != static_cast<double>(k)) {
            throw DomainError("fit targets must lie on the hourly grid 0, 1, 2, ...");
        }
        if (!(var_adults[k] > 0.0) || !(var_children[k] > 0.0)) {
            throw DomainError("fit weights need positive variances");
        }
    }
    if (times.back() > schedule.horizon()) {
        throw DomainError("fit grid extends beyond the policy horizon");
    }
    initial_guess.validate();
}

FitProblem build_fit_problem(std::span<const AbmTrajectory> samples, const EpidemicParams& params,
                             const PolicySchedule& schedule)
{
    std::vector<std::vector<AbmState>> grids;
    grids.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.horizon != samples.front().horizon) {
            throw DomainError("trajectories must share one horizon");
        }
        grids.push_back(s.hourly());
    }
    return build_fit_problem(grids, params, schedule);
}

FitProblem build_fit_problem(std::span<const std::vector<AbmState>> grids, const EpidemicParams& params,
                             const PolicySchedule& schedule)
{
    if (grids.size() < 2) {
        throw DomainError("insufficient data: at least two trajectories are needed for a variance");
    }
    for (const auto& g : grids) {
        if (g.size() != grids.front().size()) {
            throw DomainError("trajectories must share one hourly grid");
        }
    }
    const double n_pop  = static_cast<double>(params.population);
    const std::size_t m = grids.front().size();
    const double count  = static_cast<double>(grids.size());

    FitProblem p;
    p.initial_guess = params;
    p.schedule      = schedule;
    p.times.resize(m);
    p.mean_adults.assign(m, 0.0);
    p.mean_children.assign(m, 0.0);
    p.var_adults.assign(m, 0.0);
    p.var_children.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        p.times[k] = static_cast<double>(k);
        double sa = 0.0;
        double sc = 0.0;
        for (const auto& g : grids) {
            sa += static_cast<double>(g[k].i_a) / n_pop;
            sc += static_cast<double>(g[k].i_c) / n_pop;
        }
        const double ma = sa / count;
        const double mc = sc / count;
        double va       = 0.0;
        double vc       = 0.0;
        for (const auto& g : grids) {
            const double da = static_cast<double>(g[k].i_a) / n_pop - ma;
            const double dc = static_cast<double>(g[k].i_c) / n_pop - mc;
            va += da * da;
            vc += dc * dc;
        }
        p.mean_adults[k]   = ma;
        p.mean_children[k] = mc;
        p.var_adults[k]    = std::max(va / (count - 1.0), kVarianceFloor);
        p.var_children[k]  = std::max(vc / (count - 1.0), kVarianceFloor);
    }
    return p;
}

double fit_residual(const FitProblem& problem, const EpidemicParams& params, std::size_t stride)
{
    if (stride == 0) {
        throw DomainError("stride must be positive");
    }
    const auto r  = residual_vector(problem, params);
    const auto m  = problem.times.size();
    double total  = 0.0;
    for (std::size_t k = 0; k < m; k += stride) {
        const auto a = r[static_cast<Eigen::Index>(2 * k)];
        const auto c = r[static_cast<Eigen::Index>(2 * k + 1)];
        total += static_cast<double>(stride) * (a * a + c * c);
    }
    return total;
}

FitResult fit_ode_parameters(const FitProblem& problem, const FitOptions& options)
{
    problem.validate();
    const EpidemicParams base = problem.initial_guess.to_scale(RateScale::PopulationIndependent);

    // optimize theta = rates / scale so that all five unknowns are of order one
    const Vector5 start = rates_of(base);
    Vector5 scale       = start.cwiseAbs();
    const double floor  = 1e-3 * std::max(scale.maxCoeff(), 1e-12);
    scale               = scale.cwiseMax(floor);

    auto params_at = [&](const Vector5& theta) { return with_rates(base, theta.cwiseProduct(scale)); };
    auto residual  = [&](const Vector5& theta) { return residual_vector(problem, params_at(theta)); };

    Vector5 theta     = start.cwiseQuotient(scale).cwiseMax(0.0);
    Eigen::VectorXd r = residual(theta);
    double cost       = r.squaredNorm();
    double lambda     = 1e-3;

    FitResult out;
    out.residual_history.push_back(cost);
    std::size_t it = 0;
    for (; it < options.max_iterations; ++it) {
        if (cost <= options.absolute_tolerance) {
            out.converged = true;
            break;
        }
        Eigen::MatrixXd jac(r.size(), 5);
        for (int j = 0; j < 5; ++j) {
            Vector5 shifted = theta;
            const double h  = options.fd_step * std::max(1.0, std::abs(theta[j]));
            shifted[j] += h;
            jac.col(j) = (residual(shifted) - r) / h;
        }
        const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
        const Vector5 jtr                     = jac.transpose() * r;

        bool improved = false;
        while (lambda < 1e16) {
            Eigen::Matrix<double, 5, 5> lhs = jtj;
            for (int j = 0; j < 5; ++j) {
                lhs(j, j) += lambda * std::max(jtj(j, j), 1e-12);
            }
            const Vector5 delta     = lhs.ldlt().solve(-jtr);
            const Vector5 candidate = (theta + delta).cwiseMax(0.0);
            const auto r_new        = residual(candidate);
            const double cost_new   = r_new.squaredNorm();
            if (std::isfinite(cost_new) && cost_new < cost) {
                const double rel = (cost - cost_new) / cost;
                theta            = candidate;
                r                = r_new;
                cost             = cost_new;
                lambda           = std::max(lambda / 3.0, 1e-12);
                improved         = true;
                out.residual_history.push_back(cost);
                if (rel < options.relative_tolerance) {
                    out.converged = true;
                }
                break;
            }
            lambda *= 2.0;
        }
        if (!improved) {
            // no descent at any damping: a stationary point up to rounding
            out.converged = true;
            break;
        }
        if (out.converged) {
            ++it;
            break;
        }
    }
    if (!out.converged) {
        spdlog::warn("parameter fit stopped after {} iterations without converging", it);
    }
    out.iterations = it;
    out.residual   = cost;
    out.params     = params_at(theta).to_scale(problem.initial_guess.scale);
    return out;
}

EpidemicParams perturbed_guess(const EpidemicParams& base, double perturbation)
{
    if (!(perturbation > 0.0)) {
        throw DomainError("perturbation factor must be positive");
    }
    return with_rates(base, rates_of(base) * perturbation);
}

nlohmann::json fit_report(const FitProblem& problem, const FitResult& result)
{
    return Json{{"initial", to_json(problem.initial_guess)},
                {"final", to_json(result.params)},
                {"residual", result.residual},
                {"residual_history", result.residual_history},
                {"iterations", result.iterations},
                {"converged", result.converged},
                {"nodes", problem.times.size()}};
}

} // namespace epiopt
