#include "epiopt/estimation.hpp"

#include "epiopt/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace epiopt
{

AbmObjective::AbmObjective(EpidemicParams params, std::vector<double> grid, std::optional<AbmState> initial)
    : params_(std::move(params))
    , grid_(std::move(grid))
    , initial_(initial)
{
    params_.validate();
    // validates the grid
    PolicySchedule::from_flat(grid_, std::vector<double>(2 * (grid_.size() - 1), 0.0));
}

double AbmObjective::sample(std::span<const double> u, SimSeed seed) const
{
    const auto schedule = PolicySchedule::from_flat(grid_, u);
    const auto initial  = initial_ ? *initial_ : initial_abm_state(params_);
    return sample_objective(params_, schedule, seed, initial).total;
}

std::vector<double> AbmObjective::upper_bounds() const
{
    std::vector<double> upper(dimension(), 1.0);
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i) {
        upper[work_index(i)] = params_.u_w_max - kBarrierMargin;
    }
    return upper;
}

FunctionObjective::FunctionObjective(std::size_t dimension, Function fn, std::vector<double> upper)
    : dimension_(dimension)
    , fn_(std::move(fn))
    , upper_(std::move(upper))
{
    if (!upper_.empty() && upper_.size() != dimension_) {
        throw DomainError("upper bound vector has wrong length");
    }
}

std::vector<double> FunctionObjective::upper_bounds() const
{
    return upper_.empty() ? std::vector<double>(dimension_, 1.0) : upper_;
}

McEstimate McEstimate::from_samples(std::span<const double> values, bool keep_samples)
{
    McEstimate est;
    est.n = values.size();
    if (est.n == 0) {
        return est;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    est.mean = sum / static_cast<double>(est.n);
    if (est.n > 1) {
        double sq = 0.0;
        for (double v : values) {
            sq += (v - est.mean) * (v - est.mean);
        }
        const double variance = sq / static_cast<double>(est.n - 1);
        est.std_of_mean       = std::sqrt(variance / static_cast<double>(est.n));
    }
    if (keep_samples) {
        est.samples.assign(values.begin(), values.end());
    }
    return est;
}

ObjectivePool::ObjectivePool(const ObjectiveSampler& sampler, std::vector<double> u, std::uint64_t seed_base)
    : sampler_(&sampler)
    , u_(std::move(u))
    , seed_base_(seed_base)
{
    if (u_.size() != sampler.dimension()) {
        throw DomainError("control vector has wrong dimension");
    }
}

std::size_t ObjectivePool::extend_to(std::size_t n, std::size_t workers)
{
    const std::size_t old = values_.size();
    if (n <= old) {
        return 0;
    }
    values_.resize(n);
    parallel_for(old, n, workers, [&](std::size_t i) { values_[i] = sampler_->sample(u_, {seed_base_, i}); });
    return n - old;
}

ObjectivePool::Refinement ObjectivePool::refine_to_error(double target, const SamplingOptions& options)
{
    Refinement r;
    r.new_samples += extend_to(std::max<std::size_t>(options.initial_samples, 2), options.workers);
    while (true) {
        const auto est = estimate();
        if (est.std_of_mean <= target) {
            r.reached = true;
            return r;
        }
        if (2 * values_.size() > options.sample_cap) {
            return r;
        }
        r.new_samples += extend_to(2 * values_.size(), options.workers);
    }
}

McEstimate estimate_objective(const ObjectiveSampler& sampler, std::span<const double> u, std::size_t n,
                              std::uint64_t seed_base, std::size_t workers)
{
    if (n < 2) {
        throw DomainError("estimate_objective needs at least 2 samples");
    }
    ObjectivePool pool(sampler, {u.begin(), u.end()}, seed_base);
    pool.extend_to(n, workers);
    return pool.estimate();
}

TargetedEstimate estimate_objective_to_error(const ObjectiveSampler& sampler, std::span<const double> u,
                                             double target_error, std::uint64_t seed_base,
                                             const SamplingOptions& options)
{
    if (!(target_error > 0.0)) {
        throw DomainError("target error must be positive");
    }
    ObjectivePool pool(sampler, {u.begin(), u.end()}, seed_base);
    const auto r = pool.refine_to_error(target_error, options);
    if (!r.reached) {
        spdlog::warn("objective estimate hit the sample cap ({}) before reaching error {}", pool.size(), target_error);
    }
    return {pool.estimate(), !r.reached};
}

double GradientEstimate::norm() const
{
    double s = 0.0;
    for (double v : vector) {
        s += v * v;
    }
    return std::sqrt(s);
}

StepPlan plan_steps(std::span<const double> u, double h, std::span<const double> upper, double min_step)
{
    if (!(h > 0.0)) {
        throw DomainError("differencing step must be positive");
    }
    StepPlan plan;
    plan.h.resize(u.size());
    plan.kind.resize(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double down = u[k];
        const double up   = upper[k] - u[k];
        const double both = std::min({h, down, up});
        if (both >= min_step) {
            plan.h[k]    = both;
            plan.kind[k] = Difference::Central;
            continue;
        }
        const bool forward = up >= down;
        const double room  = std::min(h, forward ? up : down);
        if (!(room >= min_step)) {
            throw DomainError("no room for a finite-difference step at coordinate " + std::to_string(k));
        }
        plan.h[k]    = room;
        plan.kind[k] = forward ? Difference::Forward : Difference::Backward;
    }
    return plan;
}

GradientPool::GradientPool(const ObjectiveSampler& sampler, std::vector<double> u, double h, bool crn,
                           std::uint64_t seed_base)
    : sampler_(&sampler)
    , u_(std::move(u))
    , crn_(crn)
    , seed_base_(seed_base)
{
    if (u_.size() != sampler.dimension()) {
        throw DomainError("control vector has wrong dimension");
    }
    const auto upper = sampler.upper_bounds();
    plan_            = plan_steps(u_, h, upper);
    const auto one_sided =
        std::count_if(plan_.kind.begin(), plan_.kind.end(), [](Difference d) { return d != Difference::Central; });
    if (one_sided > 0) {
        spdlog::warn("{} coordinate(s) at the box boundary use one-sided differences", one_sided);
    }
}

std::size_t GradientPool::evaluations_per_sample() const
{
    std::size_t count = 0;
    bool center       = false;
    for (auto kind : plan_.kind) {
        if (kind == Difference::Central) {
            count += 2;
        } else {
            count += 1;
            center = true;
        }
    }
    return count + (center ? 1 : 0);
}

std::vector<double> GradientPool::compute_sample(std::size_t i) const
{
    const std::size_t d = u_.size();
    // independent streams: slot 0 = center, 1 + 2k = plus, 2 + 2k = minus
    auto seed_for = [&](std::size_t slot) {
        return crn_ ? SimSeed{seed_base_, i} : SimSeed{seed_base_, i * (2 * d + 1) + slot};
    };

    std::optional<double> center;
    auto center_value = [&] {
        if (!center) {
            center = sampler_->sample(u_, seed_for(0));
        }
        return *center;
    };

    std::vector<double> row(d);
    std::vector<double> x = u_;
    for (std::size_t k = 0; k < d; ++k) {
        const double h = plan_.h[k];
        double plus    = 0.0;
        double minus   = 0.0;
        if (plan_.kind[k] != Difference::Backward) {
            x[k] = u_[k] + h;
            plus = sampler_->sample(x, seed_for(1 + 2 * k));
        }
        if (plan_.kind[k] != Difference::Forward) {
            x[k]  = u_[k] - h;
            minus = sampler_->sample(x, seed_for(2 + 2 * k));
        }
        x[k] = u_[k];
        switch (plan_.kind[k]) {
        case Difference::Central:
            row[k] = (plus - minus) / (2.0 * h);
            break;
        case Difference::Forward:
            row[k] = (plus - center_value()) / h;
            break;
        case Difference::Backward:
            row[k] = (center_value() - minus) / h;
            break;
        }
    }
    return row;
}

std::size_t GradientPool::extend_to(std::size_t n, std::size_t workers)
{
    const std::size_t old = rows_.size();
    if (n <= old) {
        return 0;
    }
    rows_.resize(n);
    parallel_for(old, n, workers, [&](std::size_t i) { rows_[i] = compute_sample(i); });
    return (n - old) * evaluations_per_sample();
}

GradientEstimate GradientPool::estimate() const
{
    const std::size_t n = rows_.size();
    const std::size_t d = u_.size();
    GradientEstimate est;
    est.n           = n;
    est.h           = plan_.h;
    est.kind        = plan_.kind;
    est.simulations = n * evaluations_per_sample();
    est.vector.assign(d, 0.0);
    est.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    if (n == 0) {
        return est;
    }
    for (const auto& row : rows_) {
        for (std::size_t k = 0; k < d; ++k) {
            est.vector[k] += row[k];
        }
    }
    for (auto& v : est.vector) {
        v /= static_cast<double>(n);
    }
    if (n < 2) {
        return est;
    }
    Eigen::VectorXd centered(static_cast<Eigen::Index>(d));
    for (const auto& row : rows_) {
        for (std::size_t k = 0; k < d; ++k) {
            centered[static_cast<Eigen::Index>(k)] = row[k] - est.vector[k];
        }
        est.covariance.noalias() += centered * centered.transpose();
    }
    est.covariance /= static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(est.covariance, Eigen::EigenvaluesOnly);
    const double spectral = std::max(0.0, eig.eigenvalues().maxCoeff());
    est.sigma             = std::sqrt(spectral / static_cast<double>(n));
    return est;
}

GradientEstimate fd_gradient(const ObjectiveSampler& sampler, std::span<const double> u, double h, std::size_t n,
                             bool crn, std::uint64_t seed_base, std::size_t workers)
{
    if (n < 2) {
        throw DomainError("fd_gradient needs at least 2 samples");
    }
    GradientPool pool(sampler, {u.begin(), u.end()}, h, crn, seed_base);
    pool.extend_to(n, workers);
    return pool.estimate();
}

AdaptiveGradient adaptive_gradient(const ObjectiveSampler& sampler, std::span<const double> u, double epsilon,
                                   double h_max, std::uint64_t seed_base, const SamplingOptions& options, bool crn)
{
    if (!(epsilon > 0.0 && epsilon < 0.5)) {
        throw DomainError("relative accuracy epsilon must lie in (0, 1/2)");
    }
    GradientPool pool(sampler, {u.begin(), u.end()}, h_max, crn, seed_base);
    pool.extend_to(std::max<std::size_t>(options.initial_samples, 2), options.workers);
    while (true) {
        auto est           = pool.estimate();
        const double norm  = est.norm();
        const double ratio = norm > 0.0 ? 2.0 * est.sigma / norm : (est.sigma > 0.0 ? INFINITY : 0.0);
        if (2.0 * est.sigma <= epsilon * norm) {
            return {std::move(est), false, ratio};
        }
        if (2 * pool.size() > options.sample_cap) {
            spdlog::warn("gradient estimate hit the sample cap ({}) at relative accuracy {:.3g}", pool.size(), ratio);
            return {std::move(est), true, ratio};
        }
        pool.extend_to(2 * pool.size(), options.workers);
    }
}

std::size_t recommended_sample_size(double h, double sigma, bool crn)
{
    if (!(h > 0.0) || !(sigma >= 0.0)) {
        throw DomainError("recommended_sample_size needs h > 0 and sigma >= 0");
    }
    const double n = crn ? sigma * sigma / std::pow(h, 4) : sigma * sigma / std::pow(h, 6);
    return static_cast<std::size_t>(std::clamp(std::ceil(n), 2.0, 1e18));
}

void write_samples_csv(std::ostream& out, const McEstimate& estimate)
{
    out << "index,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < estimate.samples.size(); ++i) {
        out << i << ',' << estimate.samples[i] << '\n';
    }
}

} // namespace epiopt
