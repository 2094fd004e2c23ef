#pragma once

#include <string>

#include "facetrain/cleaner.hpp"
#include "facetrain/cost_model.hpp"
#include "facetrain/nas.hpp"
#include "facetrain/synth.hpp"
#include "facetrain/trainer.hpp"

namespace facetrain {

// Top-level run configuration: optional sections, schema-checked (unknown
// keys rejected) before anything runs.
struct RunConfig {
    TrainConfig train;
    FinetuneOverrides finetune;
    CleaningConfig clean;
    FcMemSpec cost;
    RewardConfig reward;
    SynthTaskSpec synth;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace facetrain
