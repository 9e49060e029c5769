#include "epiopt/report.hpp"

#include <iomanip>
#include <ostream>

namespace epiopt
{

namespace
{

const char* difference_name(Difference kind)
{
    switch (kind) {
    case Difference::Central:
        return "central";
    case Difference::Forward:
        return "forward";
    case Difference::Backward:
        return "backward";
    }
    return "unknown";
}

} // namespace

Json to_json(const EpidemicParams& p)
{
    return Json{{"r_aa", p.r_aa},
                {"r_ac", p.r_ac},
                {"r_cc", p.r_cc},
                {"r_a", p.r_a},
                {"r_c", p.r_c},
                {"mu", p.mu},
                {"rate_scale", to_string(p.scale)},
                {"population", p.population},
                {"frac_adults", p.frac_adults},
                {"infected_adults", p.infected_adults},
                {"infected_children", p.infected_children},
                {"i_max", p.i_max},
                {"u_w_max", p.u_w_max},
                {"a_s", p.a_s},
                {"a_w", p.a_w}};
}

Json to_json(const PolicySchedule& schedule)
{
    Json school = Json::array();
    Json work   = Json::array();
    for (const auto& v : schedule.values()) {
        school.push_back(v.school);
        work.push_back(v.work);
    }
    return Json{{"grid", schedule.grid()}, {"school", school}, {"work", work}};
}

Json to_json(const OptimizerConfig& c)
{
    return Json{{"c1", c.c1},
                {"alpha0", c.alpha0},
                {"rho0", c.rho0},
                {"epsilon", c.epsilon},
                {"h_max", c.h_max},
                {"max_iterations", c.max_iterations},
                {"sample_cap", c.sample_cap},
                {"initial_samples", c.initial_samples},
                {"crn", c.crn},
                {"step_tolerance", c.step_tolerance},
                {"alpha_min", c.alpha_min},
                {"stochastic_alpha_min", c.stochastic_alpha_min},
                {"rho_min", c.rho_min},
                {"inner_tolerance", c.inner_tolerance},
                {"inner_max_iterations", c.inner_max_iterations},
                {"ode_step", c.ode_step}};
}

Json to_json(const ObjectiveBreakdown& o)
{
    return Json{{"health", o.health}, {"school", o.school}, {"work", o.work}, {"total", o.total}};
}

Json to_json(const McEstimate& e)
{
    return Json{{"mean", e.mean}, {"std_of_mean", e.std_of_mean}, {"n", e.n}};
}

Json to_json(const GradientEstimate& g)
{
    Json kinds = Json::array();
    for (auto k : g.kind) {
        kinds.push_back(difference_name(k));
    }
    Json cov = Json::array();
    for (Eigen::Index i = 0; i < g.covariance.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < g.covariance.cols(); ++j) {
            row.push_back(g.covariance(i, j));
        }
        cov.push_back(std::move(row));
    }
    return Json{{"gradient", g.vector}, {"covariance", cov}, {"sigma", g.sigma},  {"n", g.n},
                {"h", g.h},             {"difference", kinds}, {"simulations", g.simulations}};
}

Json to_json(const IterationRecord& r)
{
    return Json{{"iteration", r.iteration},
                {"iterate", r.iterate},
                {"direction", r.direction},
                {"step", r.step},
                {"step_size", r.step_size},
                {"objective", r.objective},
                {"objective_sigma", r.objective_sigma},
                {"objective_samples", r.objective_samples},
                {"trial_objective", r.trial_objective},
                {"trial_sigma", r.trial_sigma},
                {"predicted_decrease", r.predicted_decrease},
                {"gradient_norm", r.gradient_norm},
                {"gradient_sigma", r.gradient_sigma},
                {"gradient_samples", r.gradient_samples},
                {"trials", r.trials},
                {"accepted", r.accepted},
                {"simulations", r.simulations},
                {"cumulative_simulations", r.cumulative_simulations},
                {"note", r.note}};
}

Json summary_json(const RunLog& log)
{
    return Json{{"algorithm", log.algorithm},
                {"status", to_string(log.status)},
                {"iterations", log.records.size()},
                {"solution", log.solution},
                {"total_simulations", log.total_simulations},
                {"events", log.events}};
}

void write_jsonl(std::ostream& out, const RunLog& log)
{
    for (const auto& r : log.records) {
        out << to_json(r).dump() << '\n';
    }
}

void write_convergence_csv(std::ostream& out, const RunLog& log)
{
    out << "iteration,objective,sigma,gradient_norm,gradient_sigma,step_size,trials,accepted,simulations,"
           "cumulative_simulations\n"
        << std::setprecision(17);
    for (const auto& r : log.records) {
        out << r.iteration << ',' << r.objective << ',' << r.objective_sigma << ',' << r.gradient_norm << ','
            << r.gradient_sigma << ',' << r.step_size << ',' << r.trials << ',' << (r.accepted ? 1 : 0) << ','
            << r.simulations << ',' << r.cumulative_simulations << '\n';
    }
}

} // namespace epiopt
