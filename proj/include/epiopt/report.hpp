#pragma once

// JSON and CSV serialization of parameters, schedules, estimates and run logs.

#include "epiopt/estimation.hpp"
#include "epiopt/model.hpp"
#include "epiopt/optimizers.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>

namespace epiopt
{

using Json = nlohmann::json;

Json to_json(const EpidemicParams& params);
Json to_json(const PolicySchedule& schedule);
Json to_json(const OptimizerConfig& config);
Json to_json(const ObjectiveBreakdown& objective);
Json to_json(const McEstimate& estimate);
Json to_json(const GradientEstimate& estimate);
Json to_json(const IterationRecord& record);

/// Summary without the per-iteration records.
Json summary_json(const RunLog& log);

/// One JSON object per line, one line per iteration.
void write_jsonl(std::ostream& out, const RunLog& log);

/// iteration,objective,sigma,gradient_norm,gradient_sigma,step_size,trials,accepted,simulations,cumulative_simulations
void write_convergence_csv(std::ostream& out, const RunLog& log);

} // namespace epiopt
