#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "psomerge/kernels.hpp"
#include "psomerge/rng.hpp"

using namespace psomerge;

namespace {

std::vector<float> random_buffer(size_t n, uint64_t tag) {
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>(rng::u01(99, rng::Stream::Generic, tag, i)) * 2.0f - 1.0f;
    }
    return out;
}

// Values on the 2^-10 grid, so differences of two buffers are exactly
// representable and identities can be checked bit-wise.
std::vector<float> dyadic_buffer(size_t n, uint64_t tag) {
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double u = rng::u01(7, rng::Stream::Generic, tag, i);
        out[i] = static_cast<float>(std::floor(u * 2049.0) - 1024.0) / 1024.0f;
    }
    return out;
}

}  // namespace

TEST_CASE("parallel elementwise kernels match the serial reference bit-exactly") {
    const size_t n = 100001;  // odd size exercises the tail
    const auto x = random_buffer(n, 0);
    const auto y = random_buffer(n, 1);

    std::vector<float> ref(n), par(n);

    kernels::reference::axpy(1.7f, x, y, ref);
    kernels::axpy(1.7f, x, y, par, kernels::ExecMode::Parallel);
    CHECK(ref == par);

    kernels::reference::subtract(x, y, ref);
    kernels::subtract(x, y, par, kernels::ExecMode::Parallel);
    CHECK(ref == par);

    kernels::reference::scale(-0.3f, x, ref);
    kernels::scale(-0.3f, x, par, kernels::ExecMode::Parallel);
    CHECK(ref == par);
}

TEST_CASE("reductions are identical across exec modes and close to the reference") {
    const size_t n = 50000;
    const auto x = random_buffer(n, 2);
    const auto mu = random_buffer(n, 3);
    auto curv = random_buffer(n, 4);
    for (auto& c : curv) c = std::fabs(c) + 0.1f;

    const double serial = kernels::sum_abs(x, kernels::ExecMode::Serial);
    const double parallel = kernels::sum_abs(x, kernels::ExecMode::Parallel);
    CHECK(serial == parallel);  // same chunked order, bit-identical
    CHECK(serial == doctest::Approx(kernels::reference::sum_abs(x)).epsilon(1e-12));

    const double sq_serial = kernels::weighted_sqdist(x, mu, curv, kernels::ExecMode::Serial);
    const double sq_parallel = kernels::weighted_sqdist(x, mu, curv, kernels::ExecMode::Parallel);
    CHECK(sq_serial == sq_parallel);
    CHECK(sq_serial ==
          doctest::Approx(kernels::reference::weighted_sqdist(x, mu, curv)).epsilon(1e-12));
}

#ifdef _OPENMP
TEST_CASE("results do not depend on the thread count") {
    const size_t n = 70000;
    const auto x = random_buffer(n, 5);
    std::vector<float> mask1(n), mask2(n);

    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    kernels::dare_apply(x, 0.8, 21, 17, mask1, kernels::ExecMode::Parallel);
    const double sum1 = kernels::sum_abs(x, kernels::ExecMode::Parallel);
    omp_set_num_threads(2);
    kernels::dare_apply(x, 0.8, 21, 17, mask2, kernels::ExecMode::Parallel);
    const double sum2 = kernels::sum_abs(x, kernels::ExecMode::Parallel);
    omp_set_num_threads(saved);

    CHECK(mask1 == mask2);
    CHECK(sum1 == sum2);
}
#endif

TEST_CASE("dare kernel output support is {0, tv/(1-p)}") {
    const size_t n = 4096;
    std::vector<float> tv(n, 1.0f);
    std::vector<float> out(n);
    kernels::dare_apply(tv, 0.8, 3, 5, out);
    const float rescale = static_cast<float>(1.0 / (1.0 - 0.8));
    CHECK(rescale == 5.0f);
    int survivors = 0;
    for (float v : out) {
        const bool ok = v == 0.0f || v == 5.0f;
        if (!ok) FAIL_CHECK("unexpected value ", v);
        if (v != 0.0f) ++survivors;
    }
    CHECK(survivors > 0);
    CHECK(survivors < static_cast<int>(n));
}

TEST_CASE("weighted_merge keeps single-expert identity exact on grid data") {
    const size_t n = 10000;
    const auto base = dyadic_buffer(n, 6);
    const auto expert = dyadic_buffer(n, 7);
    std::vector<float> delta(n), out(n);
    kernels::subtract(expert, base, delta);  // exact: both on the same grid
    kernels::weighted_merge(base, {delta.data()}, {1.0}, out);
    CHECK(out == expert);
}

TEST_CASE("pso_update fixed point and pure momentum") {
    std::vector<float> pos{1.0f, -2.0f};
    std::vector<float> vel{0.0f, 0.0f};
    const std::vector<float> same = pos;
    kernels::pso_update(vel, pos, same, same, 0.2f, 1.3f, 0.7f);
    CHECK(pos == same);
    CHECK(vel == std::vector<float>{0.0f, 0.0f});

    std::vector<float> vel2{10.0f};
    std::vector<float> pos2{4.0f};
    const std::vector<float> anchor{4.0f};
    kernels::pso_update(vel2, pos2, anchor, anchor, 0.2f, 0.5f, 0.5f);
    CHECK(vel2[0] == 2.0f);
    CHECK(pos2[0] == 6.0f);
}

TEST_CASE("all_finite flags NaN and Inf") {
    std::vector<float> ok(10000, 1.0f);
    CHECK(kernels::all_finite(ok));
    ok[7777] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(kernels::all_finite(ok));
    ok[7777] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(kernels::all_finite(ok));
}
