#include "epiopt/analysis.hpp"

#include "epiopt/estimation.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace epiopt;

namespace
{

std::vector<double> values_of(const std::vector<std::vector<double>>& points, double (*f)(std::span<const double>))
{
    std::vector<double> v;
    for (const auto& p : points) {
        v.push_back(f(p));
    }
    return v;
}

double quadratic_form(std::span<const double> u)
{
    // A = [[2, 0.5], [0.5, 1]]
    return 2.0 * u[0] * u[0] + u[0] * u[1] + u[1] * u[1];
}

double tilted(std::span<const double> u)
{
    return 3.0 * (u[0] - 0.4) * (u[0] - 0.4) - (u[0] - 0.4) * (u[1] - 0.2) + 0.5 * u[1] * u[1] + u[0] - 7.0;
}

RunLog log_with(std::initializer_list<double> objectives)
{
    RunLog log;
    for (double j : objectives) {
        IterationRecord r;
        r.objective = j;
        log.records.push_back(r);
    }
    return log;
}

} // namespace

TEST(Surrogate, MonomialCounts)
{
    EXPECT_EQ(monomial_count(2, 5), 21u);
    EXPECT_EQ(monomial_count(4, 2), 15u);
    EXPECT_EQ(monomial_count(1, 3), 4u);
}

TEST(Surrogate, RecoversQuadraticHessian)
{
    const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0}, center{0.5, 0.5};
    const auto points = grid_points(6, lo, hi);
    const auto fit    = fit_surrogate(points, values_of(points, quadratic_form), 2, center);
    Eigen::Matrix2d expected;
    expected << 4.0, 1.0, 1.0, 2.0;
    EXPECT_LE((fit.hessian - expected).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(fit.rms_residual, 1e-10);
    EXPECT_NEAR(fit.evaluate(std::vector<double>{0.3, 0.9}), quadratic_form(std::vector<double>{0.3, 0.9}), 1e-10);
}

TEST(Surrogate, HigherDegreeKeepsTheHessian)
{
    const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0}, center{0.4, 0.2};
    const auto points = grid_points(20, lo, hi);
    const auto values = values_of(points, tilted);
    const auto q      = fit_surrogate(points, values, 2, center);
    const auto quint  = fit_surrogate(points, values, 5, center);
    EXPECT_LE((q.hessian - quint.hessian).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_TRUE(quint.hessian.isApprox(quint.hessian.transpose()));
}

TEST(Surrogate, LocalQuadraticInFourDimensions)
{
    const std::vector<double> center{0.5, 0.5, 0.5, 0.5}, lo(4, 0.0), hi(4, 1.0);
    const auto points = latin_hypercube(center, 0.1, 60, lo, hi, 9);
    for (const auto& p : points) {
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_LE(std::abs(p[i] - center[i]), 0.1);
        }
    }
    std::vector<double> values;
    for (const auto& p : points) {
        values.push_back(p[0] * p[0] + 2.0 * p[1] * p[1] + 3.0 * p[2] * p[2] + 4.0 * p[3] * p[3] + p[0] * p[3]);
    }
    const auto fit = fit_surrogate(points, values, 2, center);
    Eigen::Matrix4d expected = Eigen::Vector4d(2.0, 4.0, 6.0, 8.0).asDiagonal();
    expected(0, 3) = expected(3, 0) = 1.0;
    EXPECT_LE((fit.hessian - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Surrogate, IllPosedFits)
{
    const std::vector<double> center{0.0, 0.0};
    const std::vector<std::vector<double>> few(10, {0.1, 0.2});
    const std::vector<double> v(10, 1.0);
    EXPECT_THROW((void)fit_surrogate(few, v, 2, center), IllPosedFit);
    // enough points but all on one line
    std::vector<std::vector<double>> line;
    std::vector<double> lv;
    for (int k = 0; k < 30; ++k) {
        line.push_back({0.03 * k, 0.03 * k});
        lv.push_back(k);
    }
    EXPECT_THROW((void)fit_surrogate(line, lv, 2, center), IllPosedFit);
    EXPECT_THROW((void)fit_surrogate(line, lv, 1, center), DomainError);
}

TEST(Surrogate, AgentModelLandscapeIsConvexAtItsMinimizer)
{
    // coarse version of the 20 x 20 landscape: 8 x 8 nodes, n = 100 each, CRN across nodes
    const auto params = default_abm_params();
    const AbmObjective abm(params, {0.0, 1176.0});
    const std::vector<double> lo{0.0, 0.0}, hi{1.0, params.u_w_max - 0.01};
    const auto points = grid_points(8, lo, hi);
    std::vector<double> values;
    for (const auto& p : points) {
        values.push_back(estimate_objective(abm, p, 100, 77).mean);
    }
    const auto fit = fit_surrogate(points, values, 5, std::vector<double>{0.5, 0.4});
    std::vector<double> best{0.5, 0.4};
    for (const auto& p : grid_points(101, lo, hi)) {
        if (fit.evaluate(p) < fit.evaluate(best)) {
            best = p;
        }
    }
    // with these rates the minimizer closes schools completely and keeps most work open
    EXPECT_GT(best[0], 0.9);
    EXPECT_LT(best[1], 0.5);
    const auto local = fit_surrogate(points, values, 5, best);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(local.hessian);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(ConditionRate, PublishedPairs)
{
    const std::pair<double, double> pairs[] = {{3.0300, 0.5037},  {116.8909, 0.9830}, {21.9801, 0.9130},
                                               {7.0511, 0.7516},  {35.1841, 0.9447},  {235.8803, 0.9916},
                                               {131.8860, 0.9850}};
    for (const auto& [kappa, rho] : pairs) {
        EXPECT_NEAR(rate_from_condition(kappa), rho, 1e-3) << "kappa " << kappa;
    }
    EXPECT_THROW((void)rate_from_condition(0.5), DomainError);
}

TEST(ConditionRate, GeneralizedEigenvalues)
{
    Eigen::Matrix2d fine;
    fine << 4.0, 1.0, 1.0, 2.0;
    const auto same = condition_and_rate(fine, fine);
    EXPECT_NEAR(same.kappa, 1.0, 1e-12);
    EXPECT_NEAR(same.rho, 0.0, 1e-12);

    const auto plain = condition_and_rate(Eigen::Matrix2d::Identity(), fine);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(fine);
    EXPECT_NEAR(plain.kappa, eig.eigenvalues()[1] / eig.eigenvalues()[0], 1e-12);

    Eigen::Matrix2d coarse;
    coarse << 3.0, 0.2, 0.2, 1.5;
    const auto a = condition_and_rate(coarse, fine);
    const auto b = condition_and_rate(7.5 * coarse, 7.5 * fine);
    EXPECT_NEAR(a.kappa, b.kappa, 1e-10);
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> gen(fine, coarse);
    EXPECT_NEAR(a.kappa, gen.eigenvalues()[1] / gen.eigenvalues()[0], 1e-10);
}

TEST(ConditionRate, RejectsIndefiniteInput)
{
    Eigen::Matrix2d indefinite;
    indefinite << 1.0, 0.0, 0.0, -1.0;
    Eigen::Matrix2d asymmetric;
    asymmetric << 1.0, 0.5, 0.0, 1.0;
    EXPECT_THROW((void)condition_and_rate(indefinite, Eigen::Matrix2d::Identity()), DomainError);
    EXPECT_THROW((void)condition_and_rate(Eigen::Matrix2d::Identity(), indefinite), DomainError);
    EXPECT_THROW((void)condition_and_rate(Eigen::Matrix2d::Identity(), asymmetric), DomainError);
    EXPECT_THROW((void)condition_and_rate(Eigen::Matrix3d::Identity(), Eigen::Matrix2d::Identity()), DomainError);
}

TEST(ContractionRate, GeometricSequences)
{
    EXPECT_NEAR(contraction_rate(std::vector<double>{8, 4, 2, 1}), 0.5, 1e-15);
    EXPECT_NEAR(contraction_rate(std::vector<double>{9, 3, 1}), 1.0 / 3.0, 1e-15);
    // the bump to 5 is replaced by the running minimum 4
    EXPECT_NEAR(contraction_rate(std::vector<double>{8, 4, 5, 1}), 0.5, 1e-15);
    EXPECT_THROW((void)contraction_rate(std::vector<double>{1.0}), DomainError);
}

TEST(ContractionRate, FromRunLog)
{
    EXPECT_NEAR(experimental_rate(log_with({18, 14, 12, 11}), 10.0), 0.5, 1e-15);
    EXPECT_THROW((void)experimental_rate(log_with({18, 14, 12}), 10.0), DomainError);
}

TEST(ContractionRate, ReportBlocks)
{
    RateRow row;
    row.label            = "habm";
    row.unpreconditioned = {35.1841, rate_from_condition(35.1841)};
    row.preconditioned   = {3.03, rate_from_condition(3.03)};
    row.experimental_mlo = 0.7;
    const auto report    = analysis_report(std::span<const RateRow>(&row, 1));
    EXPECT_EQ(report.at("condition")[0].at("kappa_fine"), 35.1841);
    EXPECT_NEAR(report.at("theoretical_rate")[0].at("rho_preconditioned").get<double>(), 0.5037, 1e-3);
    EXPECT_TRUE(report.at("experimental_rate")[0].at("igd").is_null());
    EXPECT_EQ(report.at("experimental_rate")[0].at("mlo"), 0.7);
}
