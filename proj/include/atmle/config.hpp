#pragma once

#include <string>

#include "atmle/simulation.hpp"

namespace atmle {

// Strict JSON configuration for the simulation command: unknown keys are
// rejected by name, every field has a documented default, and the resolved
// form reproduces the run bit-for-bit.
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string resolved_experiment_config(const ExperimentConfig& config);

}  // namespace atmle
