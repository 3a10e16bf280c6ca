#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdvmrnn/error_regression.hpp"
#include "pdvmrnn/model.hpp"
#include "pdvmrnn/trainer.hpp"

// One flat key=value config covering the model, training, and planning
// settings, parsed from a text file ('#' comments, blank lines ignored) with
// later assignments and CLI overrides winning. Unknown keys are rejected.
// to_text() is the canonical echo written into every output directory.

namespace pdvmrnn {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    PlanConfig plan;          // plan.t_max 0 means 1.5x the longest training sequence
    std::string task = "reach";
    uint64_t data_seed = 1;

    void apply(const std::string& key, const std::string& value);
    void apply_line(const std::string& line); // "key = value"
    std::string to_text() const;
    void validate() const;

    static const std::vector<std::string>& known_keys();
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

} // namespace pdvmrnn
