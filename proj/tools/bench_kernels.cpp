// Times the OpenMP kernels against the serial reference loops on synthetic
// buffers. Usage: bench_kernels [elements] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "psomerge/kernels.hpp"
#include "psomerge/rng.hpp"

using namespace psomerge;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(int repeats, const std::function<void()>& fn) {
    fn();  // warm up
    const auto start = Clock::now();
    for (int r = 0; r < repeats; ++r) fn();
    const auto stop = Clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const int64_t n = argc > 1 ? std::atoll(argv[1]) : 16'000'000;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;

    std::vector<float> x(static_cast<size_t>(n)), y(static_cast<size_t>(n));
    std::vector<float> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        x[static_cast<size_t>(i)] = static_cast<float>(rng::u01(1, rng::Stream::Generic, 0, i)) - 0.5f;
        y[static_cast<size_t>(i)] = static_cast<float>(rng::u01(1, rng::Stream::Generic, 1, i)) - 0.5f;
    }

#ifdef _OPENMP
    std::printf("elements: %lld, repeats: %d, omp threads: %d\n",
                static_cast<long long>(n), repeats, omp_get_max_threads());
#else
    std::printf("elements: %lld, repeats: %d (OpenMP disabled)\n",
                static_cast<long long>(n), repeats);
#endif
    std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    report("axpy",
           time_ms(repeats, [&] { kernels::reference::axpy(0.5f, x, y, out); }),
           time_ms(repeats, [&] {
               kernels::axpy(0.5f, x, y, out, kernels::ExecMode::Parallel);
           }));

    report("weighted_merge",
           time_ms(repeats,
                   [&] {
                       kernels::weighted_merge(y, {x.data()}, {0.5},
                                               out, kernels::ExecMode::Serial);
                   }),
           time_ms(repeats, [&] {
               kernels::weighted_merge(y, {x.data()}, {0.5}, out,
                                       kernels::ExecMode::Parallel);
           }));

    report("dare_apply",
           time_ms(repeats,
                   [&] {
                       kernels::dare_apply(x, 0.8, 7, 11, out,
                                           kernels::ExecMode::Serial);
                   }),
           time_ms(repeats, [&] {
               kernels::dare_apply(x, 0.8, 7, 11, out, kernels::ExecMode::Parallel);
           }));

    std::vector<float> vel = x;
    std::vector<float> pos = y;
    report("pso_update",
           time_ms(repeats,
                   [&] {
                       kernels::pso_update(vel, pos, x, y, 0.2f, 0.9f, 0.7f,
                                           kernels::ExecMode::Serial);
                   }),
           time_ms(repeats, [&] {
               kernels::pso_update(vel, pos, x, y, 0.2f, 0.9f, 0.7f,
                                   kernels::ExecMode::Parallel);
           }));

    report("sum_abs",
           time_ms(repeats, [&] { (void)kernels::reference::sum_abs(x); }),
           time_ms(repeats,
                   [&] { (void)kernels::sum_abs(x, kernels::ExecMode::Parallel); }));

    report("weighted_sqdist",
           time_ms(repeats, [&] { (void)kernels::reference::weighted_sqdist(x, y, y); }),
           time_ms(repeats, [&] {
               (void)kernels::weighted_sqdist(x, y, y, kernels::ExecMode::Parallel);
           }));

    return 0;
}
