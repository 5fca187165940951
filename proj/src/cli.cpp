#include "psomerge/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "psomerge/baselines.hpp"
#include "psomerge/bench.hpp"
#include "psomerge/checkpoint.hpp"
#include "psomerge/digest.hpp"
#include "psomerge/mlp.hpp"

namespace psomerge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct NamedPath {
    std::string name;
    fs::path path;
};

struct Inputs {
    ParameterSet base;
    std::vector<ParameterSet> experts;
    std::vector<std::string> labels;
    json digests = json::object();
};

std::vector<NamedPath> expert_paths(const Config& config) {
    std::vector<NamedPath> out;
    const auto& experts = config.doc.at("experts");
    for (size_t i = 0; i < experts.size(); ++i) {
        const auto& entry = experts[i];
        NamedPath np;
        if (entry.is_string()) {
            np.path = entry.get<std::string>();
        } else {
            np.path = entry.at("path").get<std::string>();
            if (entry.contains("name")) np.name = entry.at("name").get<std::string>();
        }
        if (np.name.empty()) np.name = "expert" + std::to_string(i);
        out.push_back(std::move(np));
    }
    return out;
}

// Path checks run before any tensor data is read.
void check_input_paths(const Config& config) {
    const std::string base = config.doc.at("base").get<std::string>();
    if (base.empty()) {
        throw ConfigError("config.base must point at the pre-trained checkpoint");
    }
    if (!fs::exists(base)) {
        throw ConfigError("base checkpoint not found: '" + base + "'");
    }
    const auto experts = expert_paths(config);
    if (experts.empty()) {
        throw ConfigError("config.experts must list at least one expert checkpoint");
    }
    for (const auto& e : experts) {
        if (!fs::exists(e.path)) {
            throw ConfigError("expert checkpoint not found: '" + e.path.string() + "'");
        }
    }
}

Inputs load_inputs(const Config& config) {
    Inputs inputs;
    inputs.base = load_checkpoint(config.doc.at("base").get<std::string>());
    inputs.digests["base"] = digest_hex(content_digest(inputs.base));
    for (const auto& e : expert_paths(config)) {
        ParameterSet expert = load_checkpoint(e.path);
        inputs.digests[e.name] = digest_hex(content_digest(expert));
        inputs.experts.push_back(std::move(expert));
        inputs.labels.push_back(e.name);
    }
    return inputs;
}

void echo_config(const Config& config) {
    const auto& pso = config.doc.at("pso");
    std::cout << "pso: c1=" << pso.at("c1").dump() << " c2=" << pso.at("c2").dump()
              << " w=" << pso.at("w").dump() << " p=" << pso.at("p").dump()
              << " steps=" << pso.at("steps").dump() << " seed="
              << config.doc.at("seed").dump() << "\n";
    std::cout << "resolved config:\n" << config.doc.dump(2) << "\n";
}

fs::path out_path(const Config& config, const char* key) {
    const fs::path dir = config.out_dir();
    fs::create_directories(dir);
    return dir / config.doc.at("outputs").at(key).get<std::string>();
}

void write_report(const Config& config, const fs::path& path, json report) {
    report["config"] = config.doc;
    std::ofstream file(path, std::ios::trunc);
    if (!file) {
        throw Error("cannot open report file '" + path.string() + "'");
    }
    file << report.dump(2) << "\n";
    if (!file) {
        throw Error("write failed for report '" + path.string() + "'");
    }
}

json report_scores(const FitnessReport& report) {
    json out = json::object();
    for (const auto& [task, score] : report.per_task) out[task] = score;
    return out;
}

}  // namespace

int cmd_merge(const Config& config) {
    MergeRecipe recipe = config.merge_recipe();  // validates the method name
    check_input_paths(config);
    echo_config(config);

    const auto evaluator = config.make_evaluator();
    Inputs inputs = load_inputs(config);
    if (recipe.method == MergeMethod::EsWeightSearch && recipe.es_budget <= 0) {
        // evaluation budget matched to n * S
        recipe.es_budget = static_cast<int>(inputs.experts.size()) *
                           config.doc.at("pso").at("steps").get<int>();
    }

    ParameterSet merged = run_recipe(recipe, inputs.base, inputs.experts, evaluator.get());

    const fs::path checkpoint_path = out_path(config, "checkpoint");
    SaveOptions save_opts;
    save_opts.dtype = parse_save_dtype(config.doc.at("save_dtype").get<std::string>());
    save_checkpoint(merged, checkpoint_path, save_opts);

    json report;
    report["method"] = merge_method_name(recipe.method);
    report["input_digests"] = inputs.digests;
    report["output_digest"] = digest_hex(content_digest(merged));
    if (evaluator) {
        const FitnessReport scores = evaluator->evaluate(merged);
        report["per_task"] = report_scores(scores);
        report["mean"] = scores.mean;
    }
    write_report(config, out_path(config, "report"), std::move(report));

    std::cout << "merged checkpoint written to " << checkpoint_path.string() << "\n";
    return 0;
}

int cmd_pso(const Config& config) {
    const pso::PsoHyperparams hp = config.pso_hyperparams();
    check_input_paths(config);
    const auto evaluator = config.make_evaluator();
    if (!evaluator) {
        throw ConfigError("pso requires evaluator.kind != none");
    }
    echo_config(config);

    Inputs inputs = load_inputs(config);

    pso::RunOptions options;
    options.labels = inputs.labels;
    options.init_mode = config.pso_init_mode();
    const auto holdout = config.make_holdout_evaluator();
    std::shared_ptr<IFitnessEvaluator> holdout_keepalive = holdout;
    if (config.doc.at("pso").at("holdout_eval").get<bool>()) {
        if (!holdout) {
            throw ConfigError("pso.holdout_eval=true needs a holdout_evaluator");
        }
        options.holdout = holdout_keepalive.get();
    }

    pso::PsoResult result = pso::run_pso_merge(inputs.base, inputs.experts, hp,
                                               *evaluator, config.seed(), options);

    const fs::path checkpoint_path = out_path(config, "checkpoint");
    SaveOptions save_opts;
    save_opts.dtype = parse_save_dtype(config.doc.at("save_dtype").get<std::string>());
    save_checkpoint(result.merged, checkpoint_path, save_opts);

    const fs::path trace_path = out_path(config, "trace");
    pso::write_trace_csv(result.trace, trace_path);

    json report;
    report["method"] = "pso";
    report["input_digests"] = inputs.digests;
    report["output_digest"] = digest_hex(content_digest(result.merged));
    report["per_task"] = report_scores(result.gbest_report);
    report["mean"] = result.gbest_report.mean;
    report["gbest_per_step"] = result.trace.gbest_per_step;
    if (!result.trace.holdout_per_step.empty()) {
        report["holdout_per_step"] = result.trace.holdout_per_step;
    }
    write_report(config, out_path(config, "report"), std::move(report));

    std::cout << "merged checkpoint written to " << checkpoint_path.string()
              << " (gbest fitness " << result.gbest_fitness << ")\n";
    return 0;
}

int cmd_eval(const Config& config) {
    const std::string checkpoint = config.doc.at("checkpoint").get<std::string>();
    if (checkpoint.empty()) {
        throw ConfigError("eval requires --checkpoint=<path>");
    }
    const auto evaluator = config.make_evaluator();
    if (!evaluator) {
        throw ConfigError("eval requires evaluator.kind != none");
    }
    // keep stdout pure JSON; the reproducibility echo goes to stderr
    std::cerr << "resolved config:\n" << config.doc.dump(2) << "\n";
    const ParameterSet theta = load_checkpoint(checkpoint);
    const FitnessReport report = evaluator->evaluate(theta);

    json out;
    out["checkpoint"] = checkpoint;
    out["digest"] = digest_hex(content_digest(theta));
    out["per_task"] = report_scores(report);
    out["mean"] = report.mean;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_bench_synthetic(const Config& config) {
    echo_config(config);
    const auto& node = config.doc.at("bench");
    const std::string kind = node.at("kind").get<std::string>();
    if (kind != "quadratic" && kind != "mlp" && kind != "both") {
        throw ConfigError("bench.kind must be quadratic, mlp or both");
    }

    bench::BenchOptions options;
    options.seeds = node.at("seeds").get<int>();
    options.first_seed = node.at("first_seed").get<uint64_t>();
    options.hp = config.pso_hyperparams();
    options.hp.steps = node.at("steps").get<int>();
    options.keep_fraction = node.at("keep_fraction").get<double>();
    options.epsilon = node.at("epsilon").get<double>();
    options.include_ablation = node.at("include_ablation").get<bool>();
    options.include_es = node.at("include_es").get<bool>();
    options.momentum_w = node.at("momentum_w").get<std::vector<double>>();
    options.momentum_steps = node.at("momentum_steps").get<int>();

    const double noise = node.at("noise").get<double>();
    const QuadraticSpec quad_spec = quadratic_spec_from(node.at("quadratic"));
    const bool write_traces = node.at("write_traces").get<bool>();

    std::vector<std::string> kinds =
        kind == "both" ? std::vector<std::string>{"quadratic", "mlp"}
                       : std::vector<std::string>{kind};

    const fs::path dir = config.out_dir();
    fs::create_directories(dir);

    for (const auto& k : kinds) {
        bench::SetupFactory factory;
        if (k == "quadratic") {
            factory = [&](uint64_t seed) {
                return make_synthetic_experts(quad_spec, noise, seed);
            };
        } else {
            factory = [](uint64_t seed) { return mlp_synthetic_build(seed); };
        }

        const bench::BenchResult result = bench::run_bench(factory, options);

        auto stem = [&](const char* key) {
            fs::path p = dir / config.doc.at("outputs").at(key).get<std::string>();
            if (kinds.size() > 1) {
                p = p.parent_path() / (k + "_" + p.filename().string());
            }
            return p;
        };
        {
            std::ofstream md(stem("table_md"), std::ios::trunc);
            bench::write_table_markdown(result, md);
            std::ofstream csv(stem("table_csv"), std::ios::trunc);
            bench::write_table_csv(result, csv);
            if (!md || !csv) {
                throw Error("write failed for bench tables");
            }
        }
        if (write_traces) {
            for (const auto& method : result.methods) {
                for (size_t s = 0; s < method.traces.size(); ++s) {
                    if (method.traces[s].rows.empty()) continue;
                    std::string name = method.name;
                    for (char& c : name) {
                        if (c == '[' || c == ']' || c == '=') c = '_';
                    }
                    const fs::path path =
                        dir / (k + "_" + name + "_seed" +
                               std::to_string(options.first_seed + s) + ".csv");
                    pso::write_trace_csv(method.traces[s], path);
                }
            }
        }

        std::cout << "== " << k << " bench (" << options.seeds << " seeds) ==\n";
        bench::write_table_markdown(result, std::cout);
    }
    return 0;
}

int run(const std::vector<std::string>& args) {
    const std::string usage =
        "usage: psomerge <merge|pso|bench-synthetic|eval> [--config <path>] "
        "[--seed N] [--out-dir DIR] [--dotted.key=value ...]";
    if (args.empty() || args[0] == "-h" || args[0] == "--help") {
        std::cout << usage << "\n";
        return args.empty() ? 1 : 0;
    }
    const std::string command = args[0];

    try {
        std::optional<std::string> config_path;
        std::vector<std::pair<std::string, std::string>> overrides;
        for (size_t i = 1; i < args.size(); ++i) {
            std::string arg = args[i];
            if (arg.rfind("--", 0) != 0) {
                throw ConfigError("unexpected argument '" + arg + "'");
            }
            arg = arg.substr(2);
            std::string value;
            if (const size_t eq = arg.find('='); eq != std::string::npos) {
                value = arg.substr(eq + 1);
                arg = arg.substr(0, eq);
            } else {
                if (i + 1 >= args.size()) {
                    throw ConfigError("flag '--" + arg + "' needs a value");
                }
                value = args[++i];
            }
            if (arg == "config") {
                config_path = value;
            } else if (arg == "seed") {
                overrides.emplace_back("seed", value);
            } else if (arg == "out-dir") {
                overrides.emplace_back("out_dir", value);
            } else if (arg == "checkpoint") {
                overrides.emplace_back("checkpoint", value);
            } else {
                overrides.emplace_back(arg, value);
            }
        }

        Config config = resolve_config(config_path, overrides);

        if (command == "merge") return cmd_merge(config);
        if (command == "pso") return cmd_pso(config);
        if (command == "eval") return cmd_eval(config);
        if (command == "bench-synthetic") return cmd_bench_synthetic(config);
        std::cerr << "unknown command '" << command << "'\n" << usage << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace psomerge::cli
