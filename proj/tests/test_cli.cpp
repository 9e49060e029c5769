#include "cli.hpp"

#include "epiopt/abm.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace epiopt;
using namespace epiopt::cli;
namespace fs = std::filesystem;

namespace
{

class TempDir
{
public:
    TempDir()
        : path_(fs::temp_directory_path() /
                ("epiopt-test-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name())))
    {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    TempDir(const TempDir&)            = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

    fs::path write(const std::string& name, const std::string& text) const
    {
        std::ofstream(path_ / name) << text;
        return path_ / name;
    }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::vector<std::string> args)
{
    args.insert(args.begin(), "epiopt");
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST(Config, DefaultsFromEmptyDocument)
{
    const auto c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.model, ModelKind::Habm);
    EXPECT_EQ(c.algorithm, Algorithm::Mlo);
    EXPECT_EQ(c.params.population, 1091);
    EXPECT_EQ(c.schedule.intervals(), 1u);
    EXPECT_DOUBLE_EQ(c.optimizer.epsilon, 0.25);
    EXPECT_DOUBLE_EQ(c.optimizer.c1, 0.1);
    EXPECT_EQ(c.optimizer.max_iterations, 15u);
}

TEST(Config, YamlDocument)
{
    TempDir dir;
    const auto path = dir.write("c.yaml", "model: ode\n"
                                          "algorithm: ode-gd\n"
                                          "seed: 7\n"
                                          "schedule:\n"
                                          "  horizon: 1176\n"
                                          "  intervals: 7\n"
                                          "  school: 0.25\n"
                                          "optimizer:\n"
                                          "  epsilon: 0.2\n"
                                          "params:\n"
                                          "  mu: 0.0\n");
    const auto c = config_from_json(load_document(path));
    EXPECT_EQ(c.model, ModelKind::Ode);
    EXPECT_EQ(c.algorithm, Algorithm::OdeGd);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.schedule.intervals(), 7u);
    EXPECT_DOUBLE_EQ(c.schedule.values()[6].school, 0.25);
    EXPECT_DOUBLE_EQ(c.optimizer.epsilon, 0.2);
    EXPECT_EQ(c.params.scale, RateScale::PerContact);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected)
{
    EXPECT_THROW((void)config_from_json({{"modle", "ode"}}), ConfigError);
    EXPECT_THROW((void)config_from_json({{"optimizer", {{"epsilon", 0.7}}}}), ConfigError);
    EXPECT_THROW((void)config_from_json({{"params", {{"r_xx", 1.0}}}}), ConfigError);
    EXPECT_THROW((void)config_from_json({{"algorithm", "newton"}}), ConfigError);
    EXPECT_THROW((void)config_from_json({{"schedule", {{"grid", {0.0, 10.0}}, {"intervals", 2}}}}), ConfigError);
}

TEST(Config, DottedOverrides)
{
    nlohmann::json doc = {{"optimizer", {{"c1", 0.1}}}};
    apply_override(doc, "optimizer.c1=0.2");
    apply_override(doc, "schedule.school=[0.1, 0.2]");
    apply_override(doc, "schedule.grid=[0, 1, 2]");
    apply_override(doc, "model=ode");
    const auto c = config_from_json(doc);
    EXPECT_DOUBLE_EQ(c.optimizer.c1, 0.2);
    EXPECT_DOUBLE_EQ(c.schedule.values()[1].school, 0.2);
    EXPECT_EQ(c.model, ModelKind::Ode);
    EXPECT_THROW(apply_override(doc, "no-equals-sign"), ConfigError);
}

TEST(Config, ResolvedConfigRoundTrips)
{
    auto c           = config_from_json({{"seed", 42}, {"schedule", {{"intervals", 7}, {"work", 0.3}}}});
    c.params.a_s     = 2.0;
    const auto again = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(again), config_to_json(c));
    EXPECT_EQ(again.schedule, c.schedule);
    EXPECT_EQ(again.params.a_s, 2.0);
    // a manifest written by a run is itself a valid config
    const nlohmann::json manifest = {{"command", "optimize"}, {"config", config_to_json(c)}, {"version", kVersion}};
    EXPECT_EQ(config_to_json(config_from_json(manifest)), config_to_json(c));
}

TEST(Commands, OdeSimulationFiles)
{
    TempDir dir;
    const auto cfg = dir.write("c.yaml", "model: ode\n");
    EXPECT_EQ(run({"simulate", "--config", cfg.string(), "--out", (dir.path() / "out").string(), "--log-level",
                   "off"}),
              kExitOk);
    const auto csv = slurp(dir.path() / "out" / "trajectory.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1178);
    EXPECT_TRUE(fs::exists(dir.path() / "out" / "objective.json"));
    EXPECT_TRUE(fs::exists(dir.path() / "out" / "manifest.json"));
}

TEST(Commands, AgentSimulationIsDeterministic)
{
    TempDir dir;
    const auto cfg = dir.write("c.yaml", "model: habm\nsimulate:\n  samples: 2\n");
    for (const char* sub : {"a", "b"}) {
        ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", (dir.path() / sub).string(), "--seed", "5",
                       "--log-level", "off"}),
                  kExitOk);
    }
    for (const char* file : {"trajectory_0000.csv", "trajectory_0001.csv", "objectives.csv", "summary.csv"}) {
        EXPECT_EQ(slurp(dir.path() / "a" / file), slurp(dir.path() / "b" / file)) << file;
    }
    EXPECT_NE(slurp(dir.path() / "a" / "trajectory_0000.csv"), slurp(dir.path() / "a" / "trajectory_0001.csv"));
}

TEST(Commands, KieferWolfowitzWithoutIterations)
{
    TempDir dir;
    const auto cfg = dir.write("c.yaml", "algorithm: kw\n"
                                         "schedule:\n  school: 0.3\n  work: 0.2\n"
                                         "optimizer:\n  max_iterations: 0\n");
    ASSERT_EQ(run({"optimize", "--config", cfg.string(), "--out", (dir.path() / "o").string(), "--log-level", "off"}),
              kExitOk);
    const auto summary = nlohmann::json::parse(slurp(dir.path() / "o" / "summary.json"));
    EXPECT_EQ(summary.at("total_simulations"), 0);
    const auto schedule = slurp(dir.path() / "o" / "schedule.yaml");
    EXPECT_NE(schedule.find("0.29999999999999999"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir.path() / "o" / "runlog.jsonl"));
    EXPECT_TRUE(fs::exists(dir.path() / "o" / "convergence.csv"));
}

TEST(Commands, ExitCodes)
{
    TempDir dir;
    const auto out = (dir.path() / "o").string();
    EXPECT_EQ(run({"simulate", "--config", (dir.path() / "missing.yaml").string(), "--out", out, "--log-level", "off"}),
              kExitError);
    const auto unknown = dir.write("u.yaml", "bogus: 1\n");
    EXPECT_EQ(run({"simulate", "--config", unknown.string(), "--out", out, "--log-level", "off"}), kExitError);
    const auto infeasible = dir.write("i.yaml", "model: ode\nschedule:\n  work: 0.9\n");
    EXPECT_EQ(run({"simulate", "--config", infeasible.string(), "--out", out, "--log-level", "off"}),
              kExitInfeasible);
    const auto budget = dir.write("b.yaml", "algorithm: igd\noptimizer:\n  sample_cap: 100\n  max_iterations: 2\n");
    EXPECT_EQ(run({"optimize", "--config", budget.string(), "--out", out, "--log-level", "off"}), kExitBudget);
    EXPECT_EQ(run({"frobnicate"}), kExitError);
}
