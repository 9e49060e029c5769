#include "cli.hpp"

#include "epiopt/abm.hpp"
#include "epiopt/calibration.hpp"
#include "epiopt/estimation.hpp"
#include "epiopt/ode.hpp"
#include "epiopt/parallel.hpp"
#include "epiopt/report.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace epiopt::cli
{

using nlohmann::json;
namespace fs = std::filesystem;

namespace
{

// ---------------------------------------------------------------- documents

json scalar_to_json(const YAML::Node& node)
{
    const std::string& text = node.Scalar();
    if (node.Tag() == "!") {
        return text; // quoted
    }
    if (text == "null" || text == "~" || text.empty()) {
        return nullptr;
    }
    if (text == "true" || text == "false") {
        return text == "true";
    }
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used == text.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    try {
        std::size_t used = 0;
        const double v   = std::stod(text, &used);
        if (used == text.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    return text;
}

json yaml_to_json(const YAML::Node& node)
{
    switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
        return nullptr;
    case YAML::NodeType::Scalar:
        return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
        json out = json::array();
        for (const auto& item : node) {
            out.push_back(yaml_to_json(item));
        }
        return out;
    }
    case YAML::NodeType::Map: {
        json out = json::object();
        for (const auto& kv : node) {
            out[kv.first.as<std::string>()] = yaml_to_json(kv.second);
        }
        return out;
    }
    }
    return nullptr;
}

/// A manifest wraps the resolved config; unwrap it.
json unwrap_manifest(json doc)
{
    if (doc.is_object() && doc.contains("config") && doc.contains("version")) {
        return doc.at("config");
    }
    return doc;
}

// ---------------------------------------------------------------- typed reading

/// Object reader that rejects keys nobody asked for.
class Section
{
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.is_object()) {
            throw ConfigError(where() + " must be a mapping");
        }
    }

    /// Throws on keys that were never looked up.
    void finish() const
    {
        for (const auto& [key, value] : node_.items()) {
            if (!used_.count(key)) {
                throw ConfigError("unknown key '" + child_path(key.c_str()) + "'");
            }
        }
    }

    const json* find(const char* key)
    {
        used_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end() || it->is_null()) {
            return nullptr;
        }
        return &*it;
    }

    std::string child_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void read(const char* key, double& out)
    {
        if (const auto* v = find(key)) {
            if (!v->is_number()) {
                throw ConfigError(child_path(key) + " must be a number");
            }
            out = v->get<double>();
        }
    }

    void read(const char* key, bool& out)
    {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(child_path(key) + " must be true or false");
            }
            out = v->get<bool>();
        }
    }

    void read(const char* key, std::string& out)
    {
        if (const auto* v = find(key)) {
            if (!v->is_string()) {
                throw ConfigError(child_path(key) + " must be a string");
            }
            out = v->get<std::string>();
        }
    }

    template <class Int>
        requires std::is_integral_v<Int>
    void read(const char* key, Int& out)
    {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0)) {
                throw ConfigError(child_path(key) + " must be a non-negative integer");
            }
            out = v->get<Int>();
        }
    }

    void read(const char* key, std::vector<double>& out)
    {
        if (const auto* v = find(key)) {
            out = numbers(*v, child_path(key));
        }
    }

    static std::vector<double> numbers(const json& v, const std::string& path)
    {
        if (!v.is_array()) {
            throw ConfigError(path + " must be a list of numbers");
        }
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) {
                throw ConfigError(path + " must be a list of numbers");
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

ModelKind model_from_string(const std::string& s)
{
    if (s == "ode") {
        return ModelKind::Ode;
    }
    if (s == "habm") {
        return ModelKind::Habm;
    }
    throw ConfigError("model must be 'ode' or 'habm', got '" + s + "'");
}

Algorithm algorithm_from_string(const std::string& s)
{
    if (s == "ode-gd") {
        return Algorithm::OdeGd;
    }
    if (s == "igd") {
        return Algorithm::Igd;
    }
    if (s == "mlo") {
        return Algorithm::Mlo;
    }
    if (s == "kw") {
        return Algorithm::Kw;
    }
    throw ConfigError("algorithm must be one of ode-gd, igd, mlo, kw; got '" + s + "'");
}

void read_params(Section& s, EpidemicParams& p)
{
    std::string scale = to_string(p.scale);
    s.read("rate_scale", scale);
    p.scale = rate_scale_from_string(scale);
    s.read("r_aa", p.r_aa);
    s.read("r_ac", p.r_ac);
    s.read("r_cc", p.r_cc);
    s.read("r_a", p.r_a);
    s.read("r_c", p.r_c);
    s.read("mu", p.mu);
    s.read("population", p.population);
    s.read("frac_adults", p.frac_adults);
    s.read("infected_adults", p.infected_adults);
    s.read("infected_children", p.infected_children);
    s.read("i_max", p.i_max);
    s.read("u_w_max", p.u_w_max);
    s.read("a_s", p.a_s);
    s.read("a_w", p.a_w);
    s.finish();
    try {
        p.validate();
    } catch (const std::exception& e) {
        throw ConfigError(s.child_path("") + ": " + e.what());
    }
}

/// Scalar broadcast to every interval, or one value per interval.
std::vector<double> per_interval(const json& v, std::size_t m, const std::string& path)
{
    if (v.is_number()) {
        return std::vector<double>(m, v.get<double>());
    }
    auto out = Section::numbers(v, path);
    if (out.size() != m) {
        throw ConfigError(path + " needs " + std::to_string(m) + " values, got " + std::to_string(out.size()));
    }
    return out;
}

PolicySchedule read_schedule(Section& s)
{
    std::vector<double> grid;
    s.read("grid", grid);
    double horizon         = 1176.0;
    std::size_t intervals  = 1;
    const bool has_horizon = s.find("horizon") != nullptr;
    const bool has_m       = s.find("intervals") != nullptr;
    s.read("horizon", horizon);
    s.read("intervals", intervals);
    if (!grid.empty() && (has_horizon || has_m)) {
        throw ConfigError("schedule: give either grid or horizon/intervals, not both");
    }
    if (grid.empty()) {
        if (intervals == 0) {
            throw ConfigError("schedule.intervals must be positive");
        }
        grid = PolicySchedule::uniform(horizon, intervals).grid();
    }
    const std::size_t m = grid.size() - 1;
    std::vector<double> school(m, 0.0);
    std::vector<double> work(m, 0.0);
    if (const auto* v = s.find("school")) {
        school = per_interval(*v, m, s.child_path("school"));
    }
    if (const auto* v = s.find("work")) {
        work = per_interval(*v, m, s.child_path("work"));
    }
    s.finish();
    std::vector<Controls> values(m);
    for (std::size_t i = 0; i < m; ++i) {
        values[i] = {school[i], work[i]};
    }
    try {
        return PolicySchedule(grid, values);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
}

void read_optimizer(Section& s, OptimizerConfig& c)
{
    s.read("c1", c.c1);
    s.read("alpha0", c.alpha0);
    s.read("rho0", c.rho0);
    s.read("epsilon", c.epsilon);
    s.read("h_max", c.h_max);
    s.read("max_iterations", c.max_iterations);
    s.read("sample_cap", c.sample_cap);
    s.read("initial_samples", c.initial_samples);
    s.read("crn", c.crn);
    s.read("step_tolerance", c.step_tolerance);
    s.read("alpha_min", c.alpha_min);
    s.read("stochastic_alpha_min", c.stochastic_alpha_min);
    s.read("rho_min", c.rho_min);
    s.read("inner_tolerance", c.inner_tolerance);
    s.read("inner_max_iterations", c.inner_max_iterations);
    s.finish();
}

Eigen::MatrixXd read_matrix(const json& v, const std::string& path)
{
    if (!v.is_array() || v.empty()) {
        throw ConfigError(path + " must be a non-empty list of rows");
    }
    const auto n = static_cast<Eigen::Index>(v.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = Section::numbers(v[static_cast<std::size_t>(i)], path);
        if (static_cast<Eigen::Index>(row.size()) != n) {
            throw ConfigError(path + " must be square");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            m(i, j) = row[static_cast<std::size_t>(j)];
        }
    }
    return m;
}

json matrix_to_json(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json params_json(const EpidemicParams& p)
{
    return to_json(p);
}

// ---------------------------------------------------------------- output helpers

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << std::setprecision(17);
    return out;
}

void prepare_directory(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw std::runtime_error("cannot create output directory " + dir.string() +
                                 (ec ? ": " + ec.message() : std::string()));
    }
}

void write_json(const fs::path& path, const json& value)
{
    auto out = open_output(path);
    out << value.dump(2) << '\n';
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& config)
{
    write_json(dir / "manifest.json", json{{"command", command},
                                           {"config", config_to_json(config)},
                                           {"seed", config.seed},
                                           {"version", kVersion}});
}

void write_schedule_fragment(const fs::path& path, const PolicySchedule& schedule)
{
    YAML::Emitter em;
    em.SetDoublePrecision(17);
    em << YAML::BeginMap << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
    em << YAML::Key << "grid" << YAML::Value << YAML::Flow << schedule.grid();
    std::vector<double> school;
    std::vector<double> work;
    for (const auto& v : schedule.values()) {
        school.push_back(v.school);
        work.push_back(v.work);
    }
    em << YAML::Key << "school" << YAML::Value << YAML::Flow << school;
    em << YAML::Key << "work" << YAML::Value << YAML::Flow << work;
    em << YAML::EndMap << YAML::EndMap;
    auto out = open_output(path);
    out << em.c_str() << '\n';
}

int exit_code(RunStatus status)
{
    switch (status) {
    case RunStatus::Converged:
    case RunStatus::MaxIterations:
        return kExitOk;
    case RunStatus::BudgetExhausted:
        return kExitBudget;
    case RunStatus::Stagnation:
        return kExitStagnation;
    }
    return kExitError;
}

// ---------------------------------------------------------------- models

/// Parameters of the deterministic problem: the configured model if it is the ODE, else the coarse model.
const EpidemicParams& ode_params(const ExperimentConfig& c)
{
    return c.model == ModelKind::Ode ? c.params : c.coarse_params;
}

std::unique_ptr<ObjectiveSampler> fine_sampler(const ExperimentConfig& c)
{
    if (c.model == ModelKind::Habm) {
        return std::make_unique<AbmObjective>(c.params, c.schedule.grid());
    }
    auto objective = ode_objective(c.params, c.schedule.grid(), c.ode_step);
    return std::make_unique<FunctionObjective>(
        c.schedule.dimension(), [objective](std::span<const double> u, SimSeed) { return objective.value(u); },
        admissible_box(c.params, c.schedule.intervals()).upper);
}

OptimizerConfig optimizer_config(const ExperimentConfig& c)
{
    OptimizerConfig o = c.optimizer;
    o.seed            = c.seed;
    o.workers         = c.workers;
    o.ode_step        = c.ode_step;
    return o;
}

OptimizationResult optimize(const ExperimentConfig& c, Algorithm algorithm)
{
    const auto config = optimizer_config(c);
    if (algorithm == Algorithm::OdeGd) {
        return steepest_descent_ode(ode_params(c), c.schedule, config);
    }
    const auto fine = fine_sampler(c);
    const auto u0   = c.schedule.flatten();
    switch (algorithm) {
    case Algorithm::Igd:
        return inexact_gradient_descent(*fine, u0, config);
    case Algorithm::Mlo:
        return multilevel_optimize(*fine, ode_objective(c.coarse_params, c.schedule.grid(), c.ode_step), u0, config);
    case Algorithm::Kw:
        return kiefer_wolfowitz(*fine, u0, config, c.kw);
    case Algorithm::OdeGd:
        break;
    }
    throw ConfigError("unsupported algorithm");
}

void write_run(const fs::path& dir, const ExperimentConfig& c, const OptimizationResult& result)
{
    prepare_directory(dir);
    {
        auto out = open_output(dir / "runlog.jsonl");
        write_jsonl(out, result.log);
    }
    {
        auto out = open_output(dir / "convergence.csv");
        write_convergence_csv(out, result.log);
    }
    const auto final_schedule = c.schedule.with_flat(result.solution);
    json summary              = summary_json(result.log);
    summary["schedule"]       = to_json(final_schedule);
    write_json(dir / "summary.json", summary);
    write_schedule_fragment(dir / "schedule.yaml", final_schedule);
}

struct HourlySample
{
    std::vector<AbmState> hourly;
    ObjectiveBreakdown objective;
    std::string events;
};

std::vector<HourlySample> simulate_many(const ExperimentConfig& c, std::size_t n, bool keep_events)
{
    std::vector<HourlySample> out(n);
    parallel_for(0, n, c.workers, [&](std::size_t i) {
        const auto traj = simulate_ssa(c.params, c.schedule, SimSeed{c.seed, i});
        out[i].hourly    = traj.hourly();
        out[i].objective = objective_sample(traj, c.schedule, c.params);
        if (keep_events) {
            std::ostringstream s;
            write_event_csv(s, traj);
            out[i].events = s.str();
        }
    });
    return out;
}

std::string indexed(const char* stem, std::size_t i, const char* ext)
{
    std::ostringstream s;
    s << stem << std::setw(4) << std::setfill('0') << i << ext;
    return s.str();
}

} // namespace

// ---------------------------------------------------------------- config

std::string to_string(ModelKind model)
{
    return model == ModelKind::Ode ? "ode" : "habm";
}

std::string to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::OdeGd:
        return "ode-gd";
    case Algorithm::Igd:
        return "igd";
    case Algorithm::Mlo:
        return "mlo";
    case Algorithm::Kw:
        return "kw";
    }
    return "unknown";
}

ExperimentConfig config_from_json(const json& document)
{
    const json doc = unwrap_manifest(document.is_null() ? json::object() : document);
    ExperimentConfig c;
    Section root(doc, "");

    std::string model = to_string(c.model);
    root.read("model", model);
    c.model  = model_from_string(model);
    c.params = c.model == ModelKind::Ode ? default_ode_params() : default_abm_params();

    std::string algorithm = to_string(c.algorithm);
    root.read("algorithm", algorithm);
    c.algorithm = algorithm_from_string(algorithm);
    root.read("seed", c.seed);
    root.read("workers", c.workers);
    root.read("output", c.output);
    root.read("ode_step", c.ode_step);
    if (!(c.ode_step > 0.0)) {
        throw ConfigError("ode_step must be positive");
    }

    if (const auto* v = root.find("params")) {
        Section s(*v, "params");
        read_params(s, c.params);
    }
    if (const auto* v = root.find("coarse_params")) {
        Section s(*v, "coarse_params");
        read_params(s, c.coarse_params);
    }
    if (const auto* v = root.find("schedule")) {
        Section s(*v, "schedule");
        c.schedule = read_schedule(s);
    }
    if (const auto* v = root.find("optimizer")) {
        Section s(*v, "optimizer");
        read_optimizer(s, c.optimizer);
    }
    try {
        optimizer_config(c).validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("optimizer: ") + e.what());
    }
    if (const auto* v = root.find("kw")) {
        Section s(*v, "kw");
        s.read("gain", c.kw.gain);
        s.read("exponent", c.kw.exponent);
        s.read("h0", c.kw.h0);
        s.read("batch", c.kw.batch);
        s.finish();
    }
    if (const auto* v = root.find("simulate")) {
        Section s(*v, "simulate");
        s.read("samples", c.simulate.samples);
        s.read("events", c.simulate.events);
        s.finish();
    }
    if (const auto* v = root.find("calibrate")) {
        Section s(*v, "calibrate");
        s.read("samples", c.calibrate.samples);
        s.read("perturbation", c.calibrate.perturbation);
        s.read("max_iterations", c.calibrate.max_iterations);
        s.finish();
    }
    if (const auto* v = root.find("analyze")) {
        Section s(*v, "analyze");
        s.read("kappas", c.analyze.kappas);
        if (const auto* list = s.find("hessians")) {
            if (!list->is_array()) {
                throw ConfigError("analyze.hessians must be a list");
            }
            for (std::size_t i = 0; i < list->size(); ++i) {
                const std::string path = "analyze.hessians[" + std::to_string(i) + "]";
                Section h((*list)[i], path);
                HessianPair pair;
                pair.label = "pair " + std::to_string(i);
                h.read("label", pair.label);
                const auto* coarse = h.find("coarse");
                const auto* fine   = h.find("fine");
                if (!coarse || !fine) {
                    throw ConfigError(path + " needs coarse and fine matrices");
                }
                pair.coarse = read_matrix(*coarse, path + ".coarse");
                pair.fine   = read_matrix(*fine, path + ".fine");
                h.finish();
                c.analyze.hessians.push_back(std::move(pair));
            }
        }
        if (const auto* sur = s.find("surrogate")) {
            Section g(*sur, "analyze.surrogate");
            SurrogateSettings settings;
            g.read("per_axis", settings.per_axis);
            g.read("samples", settings.samples);
            g.read("degree", settings.degree);
            g.finish();
            c.analyze.surrogate = settings;
        }
        s.finish();
    }
    if (const auto* v = root.find("compare")) {
        Section s(*v, "compare");
        s.read("reevaluation_samples", c.compare.reevaluation_samples);
        s.finish();
    }
    root.finish();
    return c;
}

json config_to_json(const ExperimentConfig& c)
{
    json schedule = to_json(c.schedule);
    json optimizer = to_json(c.optimizer);
    optimizer.erase("ode_step");

    json analyze = {{"kappas", c.analyze.kappas}};
    json pairs   = json::array();
    for (const auto& h : c.analyze.hessians) {
        pairs.push_back({{"label", h.label}, {"coarse", matrix_to_json(h.coarse)}, {"fine", matrix_to_json(h.fine)}});
    }
    analyze["hessians"] = pairs;
    if (c.analyze.surrogate) {
        analyze["surrogate"] = {{"per_axis", c.analyze.surrogate->per_axis},
                                {"samples", c.analyze.surrogate->samples},
                                {"degree", c.analyze.surrogate->degree}};
    }

    return json{{"model", to_string(c.model)},
                {"algorithm", to_string(c.algorithm)},
                {"seed", c.seed},
                {"workers", c.workers},
                {"output", c.output},
                {"ode_step", c.ode_step},
                {"params", params_json(c.params)},
                {"coarse_params", params_json(c.coarse_params)},
                {"schedule", schedule},
                {"optimizer", optimizer},
                {"kw", {{"gain", c.kw.gain}, {"exponent", c.kw.exponent}, {"h0", c.kw.h0}, {"batch", c.kw.batch}}},
                {"simulate", {{"samples", c.simulate.samples}, {"events", c.simulate.events}}},
                {"calibrate",
                 {{"samples", c.calibrate.samples},
                  {"perturbation", c.calibrate.perturbation},
                  {"max_iterations", c.calibrate.max_iterations}}},
                {"analyze", analyze},
                {"compare", {{"reevaluation_samples", c.compare.reevaluation_samples}}}};
}

json load_document(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    try {
        return yaml_to_json(YAML::Load(in));
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
}

void apply_override(json& document, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    json value;
    try {
        value = yaml_to_json(YAML::Load(assignment.substr(eq + 1)));
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot parse override value for " + key + ": " + e.what());
    }
    if (!document.is_object()) {
        document = json::object();
    }
    json* node = &document;
    std::size_t start = 0;
    while (true) {
        const auto dot        = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw ConfigError("empty component in override key '" + key + "'");
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        json& next = (*node)[part];
        if (next.is_null()) {
            next = json::object();
        }
        if (!next.is_object()) {
            throw ConfigError("override key '" + key + "' descends into a non-mapping value");
        }
        node  = &next;
        start = dot + 1;
    }
}

// ---------------------------------------------------------------- subcommands

int run_simulate(const ExperimentConfig& c, const fs::path& out)
{
    prepare_directory(out);
    write_manifest(out, "simulate", c);
    if (c.model == ModelKind::Ode) {
        const auto traj = integrate_ode(c.params, c.schedule, c.ode_step);
        auto csv        = open_output(out / "trajectory.csv");
        write_csv(csv, traj);
        write_json(out / "objective.json", to_json(objective_ode(traj, c.schedule, c.params)));
        return kExitOk;
    }

    const std::size_t n = c.simulate.samples;
    if (n == 0) {
        throw ConfigError("simulate.samples must be positive");
    }
    const auto samples = simulate_many(c, n, c.simulate.events);
    const double pop   = static_cast<double>(c.params.population);
    auto objectives    = open_output(out / "objectives.csv");
    objectives << "index,health,school,work,total\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = samples[i];
        {
            auto f = open_output(out / indexed("trajectory_", i, ".csv"));
            f << "t,S_a,S_c,I_a,I_c,R_a,R_c\n";
            for (std::size_t k = 0; k < s.hourly.size(); ++k) {
                const auto& x = s.hourly[k];
                f << k << ',' << x.s_a << ',' << x.s_c << ',' << x.i_a << ',' << x.i_c << ',' << x.r_a << ','
                  << x.r_c << '\n';
            }
        }
        if (c.simulate.events) {
            auto f = open_output(out / indexed("events_", i, ".csv"));
            f << s.events;
        }
        objectives << i << ',' << s.objective.health << ',' << s.objective.school << ',' << s.objective.work << ','
                   << s.objective.total << '\n';
    }

    // mean and sample standard deviation of every compartment, as population fractions
    auto summary = open_output(out / "summary.csv");
    summary << "t";
    for (const char* name : {"S_a", "S_c", "I_a", "I_c", "R_a", "R_c", "I"}) {
        summary << ",mean_" << name << ",std_" << name;
    }
    summary << '\n';
    const std::size_t hours = samples.front().hourly.size();
    for (std::size_t k = 0; k < hours; ++k) {
        summary << k;
        for (int field = 0; field < 7; ++field) {
            double sum = 0.0;
            double sq  = 0.0;
            for (const auto& s : samples) {
                const auto& x  = s.hourly[k];
                const auto cnt = std::array<std::int64_t, 7>{x.s_a, x.s_c, x.i_a, x.i_c, x.r_a, x.r_c, x.infected()};
                const double v = static_cast<double>(cnt[static_cast<std::size_t>(field)]) / pop;
                sum += v;
                sq += v * v;
            }
            const double mean = sum / static_cast<double>(n);
            const double var =
                n > 1 ? std::max(0.0, (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1)) : 0.0;
            summary << ',' << mean << ',' << std::sqrt(var);
        }
        summary << '\n';
    }
    return kExitOk;
}

int run_optimize(const ExperimentConfig& c, const fs::path& out)
{
    prepare_directory(out);
    write_manifest(out, "optimize", c);
    const auto result = optimize(c, c.algorithm);
    write_run(out, c, result);
    return exit_code(result.log.status);
}

int run_calibrate(const ExperimentConfig& c, const fs::path& out)
{
    prepare_directory(out);
    write_manifest(out, "calibrate", c);

    FitProblem problem;
    if (c.model == ModelKind::Ode) {
        // targets generated by the ODE itself, unit weights
        const auto traj = integrate_ode(c.params, c.schedule, c.ode_step);
        const auto per_hour = static_cast<std::size_t>(std::llround(1.0 / c.ode_step));
        const auto hours    = static_cast<std::size_t>(std::floor(c.schedule.horizon()));
        for (std::size_t k = 0; k <= hours; ++k) {
            const auto& y = traj.states.at(k * per_hour);
            problem.times.push_back(static_cast<double>(k));
            problem.mean_adults.push_back(y.i_a);
            problem.mean_children.push_back(y.i_c);
            problem.var_adults.push_back(1.0);
            problem.var_children.push_back(1.0);
        }
        problem.initial_guess = c.params;
        problem.schedule      = c.schedule;
    } else {
        const auto samples = simulate_many(c, c.calibrate.samples, false);
        std::vector<std::vector<AbmState>> grids;
        grids.reserve(samples.size());
        for (const auto& s : samples) {
            grids.push_back(s.hourly);
        }
        problem = build_fit_problem(grids, c.params, c.schedule);
    }
    problem.ode_step = c.ode_step;
    // population and initial state come from the target model, rates from the coarse guess
    EpidemicParams guess = perturbed_guess(c.coarse_params, c.calibrate.perturbation);
    EpidemicParams start = problem.initial_guess;
    start.scale          = guess.scale;
    start.r_aa           = guess.r_aa;
    start.r_ac           = guess.r_ac;
    start.r_cc           = guess.r_cc;
    start.r_a            = guess.r_a;
    start.r_c            = guess.r_c;
    start.mu             = 0.0;
    problem.initial_guess = start;

    FitOptions options;
    options.max_iterations = c.calibrate.max_iterations;
    const auto result      = fit_ode_parameters(problem, options);
    write_json(out / "fit_report.json", fit_report(problem, result));

    const auto fitted = integrate_ode(result.params, c.schedule, c.ode_step);
    const auto per_hour = static_cast<std::size_t>(std::llround(1.0 / c.ode_step));
    auto csv            = open_output(out / "fit_trajectory.csv");
    csv << "t,target_I_a,target_I_c,var_I_a,var_I_c,fit_I_a,fit_I_c\n";
    for (std::size_t k = 0; k < problem.times.size(); ++k) {
        const auto& y = fitted.states.at(k * per_hour);
        csv << k << ',' << problem.mean_adults[k] << ',' << problem.mean_children[k] << ',' << problem.var_adults[k]
            << ',' << problem.var_children[k] << ',' << y.i_a << ',' << y.i_c << '\n';
    }
    return result.converged ? kExitOk : kExitStagnation;
}

int run_analyze(const ExperimentConfig& c, const fs::path& out)
{
    prepare_directory(out);
    write_manifest(out, "analyze", c);
    json report = json::object();

    json rates = json::array();
    for (double kappa : c.analyze.kappas) {
        rates.push_back({{"kappa", kappa}, {"rho", rate_from_condition(kappa)}});
    }
    report["kappa_to_rate"] = rates;

    std::vector<RateRow> rows;
    for (const auto& h : c.analyze.hessians) {
        RateRow row;
        row.label            = h.label;
        row.unpreconditioned = condition_and_rate(Eigen::MatrixXd::Identity(h.fine.rows(), h.fine.cols()), h.fine);
        row.preconditioned   = condition_and_rate(h.coarse, h.fine);
        rows.push_back(std::move(row));
    }

    if (c.analyze.surrogate) {
        const auto& settings = *c.analyze.surrogate;
        const auto box       = admissible_box(c.params, c.schedule.intervals());
        const auto points    = grid_points(settings.per_axis, box.lower, box.upper);
        const auto fine      = fine_sampler(c);
        const auto coarse    = ode_objective(ode_params(c), c.schedule.grid(), c.ode_step);

        std::vector<double> fine_values(points.size());
        std::vector<double> coarse_values(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            // one seed base for every grid point: common random numbers smooth the landscape
            fine_values[i]   = estimate_objective(*fine, points[i], settings.samples, c.seed, c.workers).mean;
            coarse_values[i] = coarse.value(points[i]);
        }
        std::vector<double> mid(box.lower.size());
        for (std::size_t i = 0; i < mid.size(); ++i) {
            mid[i] = 0.5 * (box.lower[i] + box.upper[i]);
        }
        // center at the fitted minimizer over a refined grid
        const auto first  = fit_surrogate(points, fine_values, settings.degree, mid);
        const auto mesh   = grid_points(4 * settings.per_axis, box.lower, box.upper);
        std::size_t best  = 0;
        double best_value = INFINITY;
        for (std::size_t i = 0; i < mesh.size(); ++i) {
            const double v = first.evaluate(mesh[i]);
            if (v < best_value) {
                best_value = v;
                best       = i;
            }
        }
        const auto& center = mesh[best];
        const auto h_fine  = fit_surrogate(points, fine_values, settings.degree, center);
        const auto h_ode   = fit_surrogate(points, coarse_values, settings.degree, center);

        json sur = {{"center", center},
                    {"fine_hessian", matrix_to_json(h_fine.hessian)},
                    {"coarse_hessian", matrix_to_json(h_ode.hessian)},
                    {"fine_rms_residual", h_fine.rms_residual},
                    {"coarse_rms_residual", h_ode.rms_residual},
                    {"points", points.size()},
                    {"samples_per_point", settings.samples}};
        {
            auto csv = open_output(out / "surrogate_samples.csv");
            csv << "index";
            for (std::size_t i = 0; i < center.size(); ++i) {
                csv << ",u" << i;
            }
            csv << ",fine,coarse\n";
            for (std::size_t i = 0; i < points.size(); ++i) {
                csv << i;
                for (double x : points[i]) {
                    csv << ',' << x;
                }
                csv << ',' << fine_values[i] << ',' << coarse_values[i] << '\n';
            }
        }
        try {
            RateRow row;
            row.label = "surrogate";
            row.unpreconditioned =
                condition_and_rate(Eigen::MatrixXd::Identity(h_fine.hessian.rows(), h_fine.hessian.cols()),
                                   h_fine.hessian);
            row.preconditioned = condition_and_rate(h_ode.hessian, h_fine.hessian);
            rows.push_back(std::move(row));
        } catch (const DomainError& e) {
            sur["error"] = e.what();
            spdlog::warn("surrogate Hessians are not usable: {}", e.what());
        }
        report["surrogate"] = sur;
    }
    report["rates"] = analysis_report(rows);
    write_json(out / "analysis.json", report);
    return kExitOk;
}

int run_compare(const ExperimentConfig& c, const fs::path& out)
{
    prepare_directory(out);
    write_manifest(out, "compare", c);
    const auto igd = optimize(c, Algorithm::Igd);
    write_run(out / "igd", c, igd);
    const auto mlo = optimize(c, Algorithm::Mlo);
    write_run(out / "mlo", c, mlo);

    // fresh streams shared by both final points
    const auto fine           = fine_sampler(c);
    const std::uint64_t fresh = mix_seed(c.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t n       = c.compare.reevaluation_samples;
    if (n < 2) {
        throw ConfigError("compare.reevaluation_samples must be at least 2");
    }
    const auto at_igd = estimate_objective(*fine, igd.solution, n, fresh, c.workers);
    const auto at_mlo = estimate_objective(*fine, mlo.solution, n, fresh, c.workers);

    auto side = [](const OptimizationResult& r, const McEstimate& e) {
        json records = json::array();
        for (const auto& rec : r.log.records) {
            records.push_back({{"iteration", rec.iteration},
                               {"objective", rec.objective},
                               {"cumulative_simulations", rec.cumulative_simulations}});
        }
        return json{{"status", to_string(r.log.status)},
                    {"solution", r.solution},
                    {"reevaluation", to_json(e)},
                    {"simulations", r.log.total_simulations},
                    {"iterations", records}};
    };
    std::string lower = "tie";
    if (at_mlo.mean < at_igd.mean) {
        lower = "mlo";
    } else if (at_igd.mean < at_mlo.mean) {
        lower = "igd";
    }
    write_json(out / "comparison.json",
               json{{"igd", side(igd, at_igd)}, {"mlo", side(mlo, at_mlo)}, {"lower", lower}, {"reevaluation_samples", n}});
    return std::max(exit_code(igd.log.status), exit_code(mlo.log.status));
}

// ---------------------------------------------------------------- entry point

int run_cli(int argc, char** argv)
{
    CLI::App app{"Epidemic policy optimization on an agent model and its ODE limit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    struct Options
    {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::optional<std::size_t> workers;
        std::string out;
        std::vector<std::string> overrides;
        std::string log_level = "info";
    } opt;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "Integrate the ODE or sample agent-model trajectories"},
        {"optimize", "Run one optimizer"},
        {"calibrate", "Fit the ODE rates to mean trajectories"},
        {"analyze", "Condition numbers and convergence rates"},
        {"compare", "Paired multilevel and inexact-gradient runs with shared seeds"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "YAML config or a manifest.json")->required();
        sub->add_option("--seed", opt.seed, "Seed base");
        sub->add_option("--workers", opt.workers, "Worker threads (0 = all cores)");
        sub->add_option("--out", opt.out, "Output directory");
        sub->add_option("--override", opt.overrides, "key.path=value, may repeat");
        sub->add_option("--log-level", opt.log_level, "trace, debug, info, warn, error or off");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitError;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        spdlog::set_level(spdlog::level::from_str(opt.log_level));
        json doc = unwrap_manifest(load_document(opt.config));
        for (const auto& o : opt.overrides) {
            apply_override(doc, o);
        }
        if (opt.seed) {
            doc["seed"] = *opt.seed;
        }
        if (opt.workers) {
            doc["workers"] = *opt.workers;
        }
        auto config = config_from_json(doc);

        fs::path out;
        if (!opt.out.empty()) {
            out = opt.out;
        } else if (!config.output.empty()) {
            out = config.output;
        } else if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
            out = fs::path(root) / (command + "-seed" + std::to_string(config.seed));
        } else {
            out = fs::path("epiopt-out") / (command + "-seed" + std::to_string(config.seed));
        }
        config.output = out.string();

        int code = kExitError;
        if (command == "simulate") {
            code = run_simulate(config, out);
        } else if (command == "optimize") {
            code = run_optimize(config, out);
        } else if (command == "calibrate") {
            code = run_calibrate(config, out);
        } else if (command == "analyze") {
            code = run_analyze(config, out);
        } else if (command == "compare") {
            code = run_compare(config, out);
        }
        spdlog::info("{} wrote {} (exit {})", command, out.string(), code);
        return code;
    } catch (const InfeasiblePolicy& e) {
        std::cerr << "infeasible policy: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}

} // namespace epiopt::cli
