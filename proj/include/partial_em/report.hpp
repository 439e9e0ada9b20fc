#pragma once

#include <nlohmann/json.hpp>

#include "partial_em/em_engine.hpp"

namespace partial_em {

nlohmann::json model_to_json(const MixtureModel& model);

/// The keys iterations, termination, loglik_trace, f_trace, active_counts,
/// density_evals, wall_time_secs, model and config_echo, plus a few extras.
nlohmann::json report_to_json(const RunReport& report, const Policy& policy, const FitConfig& config,
                              std::size_t k);

}  // namespace partial_em
