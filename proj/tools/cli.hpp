#pragma once

// Experiment configuration and the subcommands of the epiopt tool.

#include "epiopt/analysis.hpp"
#include "epiopt/model.hpp"
#include "epiopt/optimizers.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace epiopt::cli
{

inline constexpr const char* kVersion         = "0.1.0";
inline constexpr const char* kOutputRootEnv   = "EPIOPT_OUTPUT_ROOT";

enum ExitCode : int
{
    kExitOk         = 0,
    kExitError      = 1, ///< configuration, input or I/O problem
    kExitInfeasible = 2,
    kExitBudget     = 3,
    kExitStagnation = 4,
};

enum class ModelKind
{
    Ode,
    Habm,
};

enum class Algorithm
{
    OdeGd,
    Igd,
    Mlo,
    Kw,
};

struct SimulateSettings
{
    std::size_t samples = 1;
    bool events         = false; ///< also write every SSA event
};

struct CalibrateSettings
{
    ModelKind targets       = ModelKind::Habm;
    std::size_t samples     = 1000;
    double perturbation     = 1.0;
    std::size_t max_iterations = 500;
};

struct HessianPair
{
    std::string label;
    Eigen::MatrixXd coarse;
    Eigen::MatrixXd fine;
};

struct SurrogateSettings
{
    std::size_t per_axis = 20;
    std::size_t samples  = 100;
    int degree           = 5;
};

struct AnalyzeSettings
{
    std::vector<double> kappas;
    std::vector<HessianPair> hessians;
    std::optional<SurrogateSettings> surrogate;
};

struct CompareSettings
{
    std::size_t reevaluation_samples = 10000;
};

struct ExperimentConfig
{
    ModelKind model     = ModelKind::Habm;
    Algorithm algorithm = Algorithm::Mlo;
    std::uint64_t seed  = 1;
    std::size_t workers = 0;
    std::string output;

    EpidemicParams params        = default_abm_params();
    EpidemicParams coarse_params = default_ode_params();
    PolicySchedule schedule      = PolicySchedule::uniform(1176.0, 1);
    double ode_step              = 1.0;
    OptimizerConfig optimizer;
    KieferWolfowitzSettings kw;

    SimulateSettings simulate;
    CalibrateSettings calibrate;
    AnalyzeSettings analyze;
    CompareSettings compare;
};

std::string to_string(ModelKind model);
std::string to_string(Algorithm algorithm);

/**
 * Builds a config from a parsed document (YAML or JSON). A manifest written by
 * a previous run is accepted as well; its "config" entry is used. Unknown keys
 * raise ConfigError.
 */
ExperimentConfig config_from_json(const nlohmann::json& document);

/// Fully resolved config with every default expanded; config_from_json inverts it.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Reads a YAML (or JSON) file into a JSON document.
nlohmann::json load_document(const std::filesystem::path& path);

/// Applies "a.b.c=value" with value parsed as a YAML scalar or flow sequence.
void apply_override(nlohmann::json& document, const std::string& assignment);

/// Runs a subcommand and writes its files into `out`. Returns an ExitCode.
int run_simulate(const ExperimentConfig& config, const std::filesystem::path& out);
int run_optimize(const ExperimentConfig& config, const std::filesystem::path& out);
int run_calibrate(const ExperimentConfig& config, const std::filesystem::path& out);
int run_analyze(const ExperimentConfig& config, const std::filesystem::path& out);
int run_compare(const ExperimentConfig& config, const std::filesystem::path& out);

/// Command-line entry point.
int run_cli(int argc, char** argv);

} // namespace epiopt::cli
