#include "psomerge/config.hpp"

#include <fstream>

#include "psomerge/mlp.hpp"

namespace psomerge {

using nlohmann::json;

json default_config() {
    return json{
        {"seed", 42},
        {"out_dir", "."},
        {"base", ""},
        {"checkpoint", ""},  // input of the eval command
        {"experts", json::array()},  // [{"name": ..., "path": ...}]
        {"save_dtype", "F32"},
        {"outputs",
         {{"checkpoint", "merged.safetensors"},
          {"trace", "trace.csv"},
          {"report", "report.json"},
          {"table_md", "table.md"},
          {"table_csv", "table.csv"}}},
        {"method",
         {{"name", "task_arithmetic"},
          {"lambda", nullptr},  // null -> 1/n
          {"drop_rate", 0.8},
          {"keep_fraction", 0.2},
          {"epsilon", 0.1},
          {"es", {{"population", 0}, {"generations", 0}, {"sigma", 0.3}, {"budget", 0}}}}},
        {"pso",
         {{"c1", 2.0},
          {"c2", 2.0},
          {"w", 0.2},
          {"p", 0.8},
          {"steps", 5},
          {"init", "full"},
          {"holdout_eval", false}}},
        {"evaluator",
         {{"kind", "none"},
          {"command", ""},
          {"timeout_s", 3600.0},
          {"tasks", json::array()},
          {"seed", 1234},
          {"quadratic",
           {{"n_tasks", 3},
            {"dim", 64},
            {"block_value", 1.0},
            {"curv_own", {8.0, 4.0, 2.0}},
            {"curv_other", 1.5},
            {"sharpness", 0.02}}}}},
        {"holdout_evaluator",
         {{"kind", "none"},
          {"command", ""},
          {"timeout_s", 3600.0},
          {"tasks", json::array()},
          {"seed", 1234},
          {"quadratic",
           {{"n_tasks", 3},
            {"dim", 64},
            {"block_value", 1.0},
            {"curv_own", {8.0, 4.0, 2.0}},
            {"curv_other", 1.5},
            {"sharpness", 0.02}}}}},
        {"bench",
         {{"kind", "quadratic"},
          {"seeds", 20},
          {"first_seed", 1},
          {"noise", 0.01},
          {"steps", 5},
          {"keep_fraction", 0.2},
          {"epsilon", 0.1},
          {"include_ablation", true},
          {"include_es", true},
          {"momentum_w", json::array()},
          {"momentum_steps", 40},
          {"write_traces", true},
          {"quadratic",
           {{"n_tasks", 3},
            {"dim", 64},
            {"block_value", 1.0},
            {"curv_own", {8.0, 4.0, 2.0}},
            {"curv_other", 1.5},
            {"sharpness", 0.02}}}}},
    };
}

namespace {

// Merge overrides the defaults key-by-key so unknown keys are caught early
// and partial objects keep their unspecified defaults.
void merge_into(json& target, const json& patch, const std::string& prefix) {
    for (const auto& [key, value] : patch.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!target.contains(key)) {
            throw ConfigError("unknown config key '" + path + "'");
        }
        if (value.is_object() && target[key].is_object()) {
            merge_into(target[key], value, path);
        } else {
            target[key] = value;
        }
    }
}

}  // namespace

void apply_override(json& doc, const std::string& dotted_path, const std::string& value) {
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // plain string
    }

    json* node = &doc;
    size_t begin = 0;
    std::string walked;
    while (true) {
        const size_t dot = dotted_path.find('.', begin);
        const std::string key = dotted_path.substr(begin, dot - begin);
        walked += (walked.empty() ? "" : ".") + key;
        if (!node->is_object() || !node->contains(key)) {
            throw ConfigError("unknown config key '" + walked + "'");
        }
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            return;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
}

Config resolve_config(const std::optional<std::string>& config_path,
                      const std::vector<std::pair<std::string, std::string>>& overrides) {
    json doc = default_config();
    if (config_path.has_value()) {
        std::ifstream file(*config_path);
        if (!file) {
            throw ConfigError("cannot open config file '" + *config_path + "'");
        }
        json from_file;
        try {
            from_file = json::parse(file);
        } catch (const json::exception& e) {
            throw ConfigError("config file '" + *config_path + "': " + e.what());
        }
        merge_into(doc, from_file, "");
    }
    for (const auto& [path, value] : overrides) {
        apply_override(doc, path, value);
    }
    return Config{std::move(doc)};
}

pso::PsoHyperparams Config::pso_hyperparams() const {
    const auto& node = doc.at("pso");
    pso::PsoHyperparams hp;
    hp.c1 = node.at("c1").get<double>();
    hp.c2 = node.at("c2").get<double>();
    hp.w = node.at("w").get<double>();
    hp.drop_rate = node.at("p").get<double>();
    hp.steps = node.at("steps").get<int>();
    hp.validate();
    return hp;
}

pso::SwarmInit Config::pso_init_mode() const {
    const std::string mode = doc.at("pso").at("init").get<std::string>();
    if (mode == "full") return pso::SwarmInit::Full;
    if (mode == "originals_only") return pso::SwarmInit::OriginalsOnly;
    if (mode == "sparsified_only") return pso::SwarmInit::SparsifiedOnly;
    throw ConfigError("unknown pso.init '" + mode +
                      "' (valid: full, originals_only, sparsified_only)");
}

MergeRecipe Config::merge_recipe() const {
    const auto& node = doc.at("method");
    MergeRecipe recipe;
    recipe.method = parse_merge_method(node.at("name").get<std::string>());
    if (!node.at("lambda").is_null()) {
        recipe.scaling = node.at("lambda").get<double>();
    }
    recipe.drop_rate = node.at("drop_rate").get<double>();
    recipe.keep_fraction = node.at("keep_fraction").get<double>();
    recipe.epsilon = node.at("epsilon").get<double>();
    recipe.seed = seed();
    recipe.es.population = node.at("es").at("population").get<int>();
    recipe.es.generations = node.at("es").at("generations").get<int>();
    recipe.es.sigma = node.at("es").at("sigma").get<double>();
    recipe.es_budget = node.at("es").at("budget").get<int>();
    return recipe;
}

QuadraticSpec quadratic_spec_from(const json& node) {
    QuadraticSpec spec;
    spec.n_tasks = node.at("n_tasks").get<int>();
    spec.dim = node.at("dim").get<int64_t>();
    spec.block_value = node.at("block_value").get<double>();
    const auto& own = node.at("curv_own");
    if (own.is_array()) {
        spec.curv_own = own.get<std::vector<double>>();
    } else {
        spec.curv_own = {own.get<double>()};
    }
    spec.curv_other = node.at("curv_other").get<double>();
    spec.sharpness = node.at("sharpness").get<double>();
    return spec;
}

namespace {

std::shared_ptr<IFitnessEvaluator> build_evaluator(const json& node) {
    const std::string kind = node.at("kind").get<std::string>();
    if (kind == "none") {
        return nullptr;
    }
    if (kind == "quadratic_synthetic") {
        return std::make_shared<QuadraticEvaluator>(
            make_quadratic_tasks(quadratic_spec_from(node.at("quadratic"))));
    }
    if (kind == "mlp_synthetic") {
        return std::make_shared<mlp::MlpEvaluator>(
            mlp::make_blob_tasks(node.at("seed").get<uint64_t>()));
    }
    if (kind == "external_command") {
        const auto tasks = node.at("tasks").get<std::vector<std::string>>();
        return std::make_shared<ExternalEvaluator>(node.at("command").get<std::string>(),
                                                   tasks,
                                                   node.at("timeout_s").get<double>());
    }
    throw ConfigError("unknown evaluator kind '" + kind +
                      "' (valid: none, quadratic_synthetic, mlp_synthetic, "
                      "external_command)");
}

}  // namespace

std::shared_ptr<IFitnessEvaluator> Config::make_evaluator() const {
    return build_evaluator(doc.at("evaluator"));
}

std::shared_ptr<IFitnessEvaluator> Config::make_holdout_evaluator() const {
    return build_evaluator(doc.at("holdout_evaluator"));
}

}  // namespace psomerge
