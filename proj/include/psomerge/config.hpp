#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "psomerge/baselines.hpp"
#include "psomerge/fitness.hpp"
#include "psomerge/pso.hpp"

namespace psomerge {

// A run is fully described by one JSON document. Defaults are materialized
// before anything runs, and every field is overridable on the command line
// by its dotted name (e.g. --pso.w=0.2), so the echoed config reproduces
// the run bit-exactly.
struct Config {
    nlohmann::json doc;

    uint64_t seed() const { return doc.at("seed").get<uint64_t>(); }
    std::string out_dir() const { return doc.at("out_dir").get<std::string>(); }

    pso::PsoHyperparams pso_hyperparams() const;
    pso::SwarmInit pso_init_mode() const;
    MergeRecipe merge_recipe() const;

    // nullptr when evaluator.kind == "none"
    std::shared_ptr<IFitnessEvaluator> make_evaluator() const;
    std::shared_ptr<IFitnessEvaluator> make_holdout_evaluator() const;
};

nlohmann::json default_config();

// Load (optional) config file, then apply dotted-path overrides in order.
Config resolve_config(const std::optional<std::string>& config_path,
                      const std::vector<std::pair<std::string, std::string>>& overrides);

// Set doc at the dotted path (e.g. "pso.w") to the value, parsed as JSON
// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& dotted_path,
                    const std::string& value);

QuadraticSpec quadratic_spec_from(const nlohmann::json& node);

}  // namespace psomerge
