// Acceptance suite: every check prints one [PASS]/[FAIL] line with its
// runtime; the process exits non-zero if any check fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "psomerge/baselines.hpp"
#include "psomerge/bench.hpp"
#include "psomerge/checkpoint.hpp"
#include "psomerge/cli.hpp"
#include "psomerge/fitness.hpp"
#include "psomerge/pso.hpp"
#include "psomerge/rng.hpp"
#include "psomerge/task_vector.hpp"

using namespace psomerge;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct CheckFailure {
    std::string message;
};

void require(bool ok, const std::string& message) {
    if (!ok) throw CheckFailure{message};
}

void run_criterion(int number, const char* title, double time_limit_s,
                   const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string failure;
    try {
        body();
    } catch (const CheckFailure& f) {
        failure = f.message;
    } catch (const std::exception& e) {
        failure = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (failure.empty() && elapsed > time_limit_s) {
        std::ostringstream os;
        os << "runtime " << elapsed << " s exceeds the " << time_limit_s << " s budget";
        failure = os.str();
    }
    if (failure.empty()) {
        std::printf("[PASS] criterion %2d: %s (%.2f s)\n", number, title, elapsed);
    } else {
        std::printf("[FAIL] criterion %2d: %s (%.2f s): %s\n", number, title, elapsed,
                    failure.c_str());
        ++g_failures;
    }
    std::fflush(stdout);
}

ParameterSet theta_tensor(std::vector<float> values) {
    ParameterSet ps;
    const int64_t n = static_cast<int64_t>(values.size());
    ps.add("theta", {n}, std::move(values));
    return ps;
}

std::vector<float> uniform_values(size_t n, uint64_t tag, float lo, float hi) {
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = lo + (hi - lo) * static_cast<float>(rng::u01(4242, rng::Stream::Generic, tag, i));
    }
    return out;
}

// Values on the 2^-10 grid so expert-minus-base deltas are exactly
// representable and identity checks can be bit-wise.
std::vector<float> dyadic_values(size_t n, uint64_t tag) {
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double u = rng::u01(777, rng::Stream::Generic, tag, i);
        out[i] = static_cast<float>(std::floor(u * 2049.0) - 1024.0) / 1024.0f;
    }
    return out;
}

class ConstantEvaluator : public IFitnessEvaluator {
public:
    FitnessReport evaluate(const ParameterSet&) const override {
        return make_report({{"c", 0.5}});
    }
    const std::vector<std::string>& task_names() const override { return names_; }
    std::vector<std::string> names_{"c"};
};

struct TempDir {
    fs::path dir;
    explicit TempDir(const char* tag) {
        dir = fs::temp_directory_path() /
              ("psomerge_accept_" + std::to_string(getpid()) + "_" + tag);
        fs::create_directories(dir);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

bench::BenchOptions default_bench_options(int seeds) {
    bench::BenchOptions options;
    options.seeds = seeds;
    options.first_seed = 1;
    // standard hyperparameters: c1 = c2 = 2, w = 0.2, p = 0.8, S = 5
    options.hp = pso::PsoHyperparams{};
    return options;
}

bench::SetupFactory quadratic_factory() {
    return [](uint64_t seed) {
        return make_synthetic_experts(QuadraticSpec{}, 0.01, seed);
    };
}

// ---- criteria -------------------------------------------------------------

void criterion_1_linear_combination() {
    const int64_t d = 1000;
    const ParameterSet base = theta_tensor(uniform_values(d, 0, 0.5f, 1.5f));
    std::vector<ParameterSet> experts;
    for (uint64_t e = 1; e <= 3; ++e) {
        experts.push_back(theta_tensor(uniform_values(d, e, 0.5f, 1.5f)));
    }
    pso::PsoHyperparams hp;
    hp.w = 0.0;
    pso::Swarm swarm = pso::init_swarm(base, experts, hp, 17);
    pso::evaluate_swarm(swarm, ConstantEvaluator{});

    std::vector<ParameterSet> prev;
    std::vector<ParameterSet> pbest;
    for (const auto& p : swarm.particles) {
        prev.push_back(p.position);
        pbest.push_back(p.pbest_position);
    }
    const ParameterSet gbest = swarm.gbest_position;

    pso::step_swarm(swarm);

    for (size_t t = 0; t < swarm.particles.size(); ++t) {
        const auto [r1, r2] = pso::draw_r(17, static_cast<int>(t), 1);
        const float a = static_cast<float>(hp.c1 * r1);
        const float b = static_cast<float>(hp.c2 * r2);
        const auto& actual = swarm.particles[t].position.at("theta").data;
        const auto& g = gbest.at("theta").data;
        const auto& pb = pbest[t].at("theta").data;
        const auto& th = prev[t].at("theta").data;
        float scale = 1.0f;
        for (int64_t j = 0; j < d; ++j) {
            scale = std::max({scale, std::fabs(g[static_cast<size_t>(j)]),
                              std::fabs(pb[static_cast<size_t>(j)]),
                              std::fabs(th[static_cast<size_t>(j)])});
        }
        for (int64_t j = 0; j < d; ++j) {
            const size_t idx = static_cast<size_t>(j);
            const float expect = a * g[idx] + b * pb[idx] + (1.0f - a - b) * th[idx];
            const float tol =
                1e-5f * std::max({std::fabs(expect), std::fabs(actual[idx]), scale});
            require(std::fabs(actual[idx] - expect) <= tol,
                    "particle " + std::to_string(t) + " element " + std::to_string(j) +
                        ": step " + std::to_string(actual[idx]) + " vs combination " +
                        std::to_string(expect));
        }
    }
}

void criterion_2_gbest_monotone() {
    int runs = 0;
    auto check_trace = [&](const pso::RunTrace& trace) {
        for (size_t i = 1; i < trace.gbest_per_step.size(); ++i) {
            require(trace.gbest_per_step[i] >= trace.gbest_per_step[i - 1],
                    "gbest decreased at step " + std::to_string(i));
        }
        ++runs;
    };
    pso::PsoHyperparams hp;
    for (uint64_t seed = 1; seed <= 30; ++seed) {
        const SyntheticSetup setup = make_synthetic_experts(QuadraticSpec{}, 0.01, seed);
        check_trace(pso::run_pso_merge(setup.base, setup.experts, hp, *setup.evaluator,
                                       seed)
                        .trace);
    }
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const SyntheticSetup setup = mlp_synthetic_build(seed);
        check_trace(pso::run_pso_merge(setup.base, setup.experts, hp, *setup.evaluator,
                                       seed)
                        .trace);
    }
    require(runs == 50, "expected 50 runs");
}

void criterion_3_dare_unbiased() {
    const int64_t d = 10000;
    TaskVector tv;
    {
        std::vector<float> values = uniform_values(static_cast<size_t>(d), 9, 0.5f, 1.5f);
        tv.deltas.add("t", {d}, std::move(values));
    }
    const double p = 0.8;
    const int seeds = 1000;
    const float rescale = static_cast<float>(1.0 / (1.0 - p));
    require(rescale == 5.0f, "rescale for p=0.8 must be exactly 5");

    std::vector<double> sums(static_cast<size_t>(d), 0.0);
    const auto& tv_data = tv.deltas.at("t").data;
    for (int s = 0; s < seeds; ++s) {
        const TaskVector out = dare_sparsify(tv, p, 3000000 + static_cast<uint64_t>(s));
        const auto& data = out.deltas.at("t").data;
        for (int64_t i = 0; i < d; ++i) {
            const size_t idx = static_cast<size_t>(i);
            require(data[idx] == 0.0f || data[idx] == tv_data[idx] * 5.0f,
                    "support must be {0, 5*tv_i}");
            sums[idx] += data[idx];
        }
    }
    const double mc = std::sqrt(p * (1.0 - p) / seeds);
    for (int64_t i = 0; i < d; ++i) {
        const size_t idx = static_cast<size_t>(i);
        const double mean = sums[idx] / seeds;
        const double bound = 4.0 * std::fabs(tv_data[idx] / (1.0 - p)) * mc + 1e-6;
        require(std::fabs(mean - tv_data[idx]) <= bound,
                "element " + std::to_string(i) + " mean " + std::to_string(mean) +
                    " vs " + std::to_string(tv_data[idx]));
    }
}

void criterion_4_swarm_cardinality() {
    pso::PsoHyperparams hp;
    for (int n : {1, 2, 3, 5}) {
        const int64_t d = 16;
        const ParameterSet base = theta_tensor(std::vector<float>(d, 0.0f));
        std::vector<ParameterSet> experts;
        for (int e = 0; e < n; ++e) {
            experts.push_back(theta_tensor(uniform_values(d, 100 + e, -1.0f, 1.0f)));
        }
        const pso::Swarm swarm = pso::init_swarm(base, experts, hp, 3);
        require(swarm.particles.size() == static_cast<size_t>(2 * n + 1),
                "n=" + std::to_string(n) + " gave " +
                    std::to_string(swarm.particles.size()) + " particles");
    }
}

void criterion_5_quadratic_win() {
    const auto result = bench::run_bench(quadratic_factory(), default_bench_options(20));
    const double pso_median = bench::median(result.row("pso").mean_by_seed);

    for (const char* name : {"task_arithmetic", "dare_linear", "ties", "dare_ties",
                             "della", "rankmean"}) {
        const double baseline = bench::median(result.row(name).mean_by_seed);
        require(pso_median >= baseline, std::string("pso median ") +
                                            std::to_string(pso_median) + " < " + name +
                                            " median " + std::to_string(baseline));
    }
    for (int e = 0; e < 3; ++e) {
        const std::string name = "expert" + std::to_string(e);
        const double expert = bench::median(result.row(name).mean_by_seed);
        require(pso_median > expert,
                "pso median does not strictly exceed " + name + " (" +
                    std::to_string(expert) + ")");
    }
    const double opt = bench::median(result.optimum_score_by_seed);
    require(pso_median >= 0.9 * opt, "pso median " + std::to_string(pso_median) +
                                         " is more than 10% below the closed-form "
                                         "optimum score " +
                                         std::to_string(opt));
}

void criterion_6_convergence() {
    bench::BenchOptions options = default_bench_options(20);
    options.hp.steps = 40;
    options.include_ablation = false;
    options.include_es = false;
    const auto result = bench::run_bench(quadratic_factory(), options);
    std::vector<double> fractions;
    for (const auto& trace : result.row("pso").traces) {
        fractions.push_back(bench::gain_fraction_by(trace, 10));
    }
    const double med = bench::median(fractions);
    require(med >= 0.9, "median gain fraction by step 10 is " + std::to_string(med));
}

void criterion_7_particle_ablation() {
    bench::BenchOptions options = default_bench_options(20);
    options.include_es = false;
    const auto result = bench::run_bench(
        [](uint64_t seed) { return mlp_synthetic_build(seed); }, options);

    const auto& full = result.row("pso").mean_by_seed;
    const auto& sparse = result.row("pso_sparsified_only").mean_by_seed;
    const auto& orig = result.row("pso_originals_only").mean_by_seed;

    const double full_med = bench::median(full);
    const double sparse_med = bench::median(sparse);
    const double orig_med = bench::median(orig);
    require(full_med >= sparse_med, "full median " + std::to_string(full_med) +
                                        " < sparsified median " +
                                        std::to_string(sparse_med));
    require(sparse_med >= orig_med, "sparsified median " + std::to_string(sparse_med) +
                                        " < originals median " +
                                        std::to_string(orig_med));
    int strict = 0;
    for (size_t s = 0; s < full.size(); ++s) {
        if (full[s] > orig[s]) ++strict;
    }
    require(strict >= 14, "full beat originals strictly in only " +
                              std::to_string(strict) + "/20 seeds");
}

void criterion_8_momentum() {
    bench::BenchOptions options = default_bench_options(20);
    options.include_ablation = false;
    options.include_es = false;
    options.momentum_w = {0.2, 0.8};
    options.momentum_steps = 40;
    const auto result = bench::run_bench(quadratic_factory(), options);

    int low_w_all_within = 0;
    for (const auto& trace : result.row("pso[w=0.2]").traces) {
        if (!trace.rows.empty() && bench::momentum_outcome(trace).all_within) {
            ++low_w_all_within;
        }
    }
    const auto& high = result.row("pso[w=0.8]");
    int high_w_bad = high.diverged;
    for (const auto& trace : high.traces) {
        if (!trace.rows.empty() && !bench::momentum_outcome(trace).all_within) {
            ++high_w_bad;
        }
    }
    require(low_w_all_within >= 11, "w=0.2 kept all particles within 10% of gbest in "
                                        "only " +
                                        std::to_string(low_w_all_within) + "/20 seeds");
    require(high_w_bad >= 11, "w=0.8 produced a straggler or divergence in only " +
                                  std::to_string(high_w_bad) + "/20 seeds");
}

void criterion_9_determinism() {
    TempDir work("det");
    save_checkpoint(theta_tensor(std::vector<float>(16, 0.0f)), work.path("base.safetensors"));
    save_checkpoint(theta_tensor(uniform_values(16, 50, -1.0f, 1.0f)),
                    work.path("e0.safetensors"));
    save_checkpoint(theta_tensor(uniform_values(16, 51, -1.0f, 1.0f)),
                    work.path("e1.safetensors"));

    auto run_once = [&](const char* out) {
        const std::vector<std::string> args = {
            "pso",
            "--base", work.path("base.safetensors"),
            "--experts",
            "[\"" + work.path("e0.safetensors") + "\", \"" + work.path("e1.safetensors") +
                "\"]",
            "--evaluator.kind", "quadratic_synthetic",
            "--evaluator.quadratic.dim", "16",
            "--evaluator.quadratic.n_tasks", "2",
            "--pso.steps", "4",
            "--seed", "99",
            "--out-dir", work.path(out)};
        std::stringstream captured;
        std::streambuf* saved = std::cout.rdbuf(captured.rdbuf());
        const int rc = cli::run(args);
        std::cout.rdbuf(saved);
        require(rc == 0, "cmd_pso exited non-zero");
        // the resolved-config echo carries the default hyperparameters
        require(captured.str().find("c1=2.0 c2=2.0 w=0.2 p=0.8") != std::string::npos,
                "config echo is missing the default hyperparameters");
    };
    run_once("a");
    run_once("b");

    require(slurp(fs::path(work.path("a")) / "merged.safetensors") ==
                slurp(fs::path(work.path("b")) / "merged.safetensors"),
            "merged checkpoints differ");
    require(!slurp(fs::path(work.path("a")) / "merged.safetensors").empty(),
            "merged checkpoint is empty");
    require(slurp(fs::path(work.path("a")) / "trace.csv") ==
                slurp(fs::path(work.path("b")) / "trace.csv"),
            "traces differ");
}

void criterion_10_external_protocol() {
    TempDir work("ext");
    auto script = [&](const char* name, const std::string& body) {
        const fs::path path = work.dir / name;
        {
            std::ofstream f(path, std::ios::trunc);
            f << "#!/bin/sh\n" << body << "\n";
        }
        fs::permissions(path, fs::perms::owner_all);
        return path.string();
    };
    const ParameterSet theta = theta_tensor({0.25f, -1.5f, 3.0f, 0.0625f});

    // fixed-score echo
    const std::string echo_mock =
        script("echo.sh", R"(echo '{"scores": {"a": 0.5, "b": 0.7}}')");
    const FitnessReport echoed =
        external_evaluate(echo_mock + " {checkpoint}", theta, {"a", "b"}, 10.0);
    require(echoed.per_task.at("a") == 0.5 && echoed.per_task.at("b") == 0.7 &&
                std::fabs(echoed.mean - 0.6) < 1e-12,
            "echo mock scores wrong");

    // checkpoint bit-equality against a reference file
    const fs::path reference = work.dir / "reference.safetensors";
    save_checkpoint(theta, reference);
    const std::string bit_mock = script(
        "bit.sh", "cmp -s \"$1\" \"" + reference.string() + "\" || exit 9\n" +
                      R"(echo '{"scores": {"a": 1.0}}')");
    const FitnessReport bit =
        external_evaluate(bit_mock + " {checkpoint}", theta, {"a"}, 10.0);
    require(bit.per_task.at("a") == 1.0, "bit-equality mock rejected the checkpoint");

    // failure modes
    bool threw = false;
    try {
        external_evaluate(script("fail.sh", "echo broken >&2\nexit 1") + " {checkpoint}",
                          theta, {"a"}, 10.0);
    } catch (const EvaluatorError& e) {
        threw = std::string(e.what()).find("exited with code 1") != std::string::npos &&
                e.stderr_tail.find("broken") != std::string::npos;
    }
    require(threw, "nonzero exit not reported with stderr");

    threw = false;
    try {
        external_evaluate(script("slow.sh", "sleep 5") + " {checkpoint}", theta, {"a"},
                          0.5);
    } catch (const EvaluatorError& e) {
        threw = std::string(e.what()).find("timed out") != std::string::npos;
    }
    require(threw, "timeout not reported");

    threw = false;
    try {
        external_evaluate(script("partial.sh", R"(echo '{"scores": {"a": 0.5}}')") +
                              " {checkpoint}",
                          theta, {"a", "b"}, 10.0);
    } catch (const EvaluatorError& e) {
        threw = std::string(e.what()).find("incomplete scores") != std::string::npos &&
                std::string(e.what()).find("b") != std::string::npos;
    }
    require(threw, "missing task not reported as incomplete scores");
}

void criterion_11_baseline_identities() {
    const ParameterSet base = theta_tensor(dyadic_values(256, 1));
    const ParameterSet expert = theta_tensor(dyadic_values(256, 2));
    const std::vector<ParameterSet> experts{expert};

    require(bit_equal(task_arithmetic(base, experts, 1.0), expert), "task_arithmetic");
    require(bit_equal(dare_linear(base, experts, 1.0, 0.0, 7), expert), "dare_linear");
    require(bit_equal(ties_merge(base, experts, 1.0, 1.0), expert), "ties");
    require(bit_equal(dare_ties(base, experts, 1.0, 0.0, 1.0, 7), expert), "dare_ties");
    require(bit_equal(della_merge(base, experts, 1.0, 0.0, 0.0, 7), expert), "della");
    require(bit_equal(rankmean_merge(base, experts), expert), "rankmean");

    const std::vector<ParameterSet> pair{expert, theta_tensor(dyadic_values(256, 3))};
    require(bit_equal(task_arithmetic(base, pair, 0.0), base), "lambda=0 task_arithmetic");
    require(bit_equal(dare_linear(base, pair, 0.0, 0.8, 7), base), "lambda=0 dare_linear");
    require(bit_equal(ties_merge(base, pair, 0.0, 0.5), base), "lambda=0 ties");
    require(bit_equal(dare_ties(base, pair, 0.0, 0.8, 0.5, 7), base), "lambda=0 dare_ties");
    require(bit_equal(della_merge(base, pair, 0.0, 0.8, 0.1, 7), base), "lambda=0 della");
}

void criterion_12_ties_hand_oracle() {
    ParameterSet base = theta_tensor({0.0f, 0.0f});
    ParameterSet a = theta_tensor({2.0f, 1.0f});
    ParameterSet b = theta_tensor({-1.0f, 3.0f});
    const ParameterSet merged = ties_merge(base, {a, b}, 1.0, 1.0);
    require(merged.at("theta").data == std::vector<float>{2.0f, 2.0f},
            "expected [2, 2], got [" + std::to_string(merged.at("theta").data[0]) + ", " +
                std::to_string(merged.at("theta").data[1]) + "]");
}

}  // namespace

int main() {
    run_criterion(1, "one w=0 step equals the explicit linear combination", 1.0,
                  criterion_1_linear_combination);
    run_criterion(2, "gbest fitness is non-decreasing over 50 synthetic runs", 30.0,
                  criterion_2_gbest_monotone);
    run_criterion(3, "DARE masks are unbiased with exact {0, tv/(1-p)} support", 10.0,
                  criterion_3_dare_unbiased);
    run_criterion(4, "swarm cardinality is 2n+1 (7 particles for n=3)", 1.0,
                  criterion_4_swarm_cardinality);
    run_criterion(5, "quadratic bench: swarm merge beats every static baseline", 120.0,
                  criterion_5_quadratic_win);
    run_criterion(6, "90% of the gbest gain lands within 10 of 40 steps", 300.0,
                  criterion_6_convergence);
    run_criterion(7, "particle ablation: full >= sparsified-only >= originals-only",
                  600.0, criterion_7_particle_ablation);
    run_criterion(8, "momentum sweep: w=0.2 converges everywhere, w=0.8 does not",
                  300.0, criterion_8_momentum);
    run_criterion(9, "pso command is bit-deterministic in config and seed", 60.0,
                  criterion_9_determinism);
    run_criterion(10, "external evaluator protocol round-trip and failure modes", 10.0,
                  criterion_10_external_protocol);
    run_criterion(11, "single-expert identities and lambda=0 are bit-exact", 10.0,
                  criterion_11_baseline_identities);
    run_criterion(12, "TIES elect/mean two-coordinate hand oracle gives [2, 2]", 1.0,
                  criterion_12_ties_hand_oracle);

    if (g_failures == 0) {
        std::printf("acceptance: all 12 criteria passed\n");
    } else {
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
    }
    return g_failures == 0 ? 0 : 1;
}
