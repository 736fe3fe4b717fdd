#pragma once

// JSON bindings for the pieces of configuration shared between the experiment
// orchestrator and the CLI subcommands. All parsers reject unknown keys.

#include "json.hpp"

#include "dnf/detector.hpp"
#include "dnf/harness.hpp"
#include "dnf/schedule.hpp"

namespace dnf {

void check_config_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& where);

NoiseSchedule schedule_from_json(const nlohmann::json& j);
TimestepSequence taus_from_json(const nlohmann::json& j, int total_steps);
TextureParams texture_params_from_json(const nlohmann::json& j, int resolution);
PredictorSpec predictor_spec_from_json(const nlohmann::json& j);
DetectorTrainConfig detector_train_config_from_json(const nlohmann::json& j);

}  // namespace dnf
