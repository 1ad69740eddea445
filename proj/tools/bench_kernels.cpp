// Times the OpenMP kernels against their serial references on
// training-shaped workloads and reports the speedup.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "clnet/kernels.hpp"
#include "clnet/rng.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

using namespace clnet;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warmup
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<float>& v, Rng& rng) {
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

} // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
#if defined(_OPENMP)
    std::printf("OpenMP threads: %d, reps: %d\n", omp_get_max_threads(), reps);
#else
    std::printf("built without OpenMP (parallel == serial), reps: %d\n", reps);
#endif

    Rng rng(42);

    { // stage-1-sized convolution forward
        Tensor3<float> in(64, 64, 16), out(32, 32, 32);
        std::vector<float> w(3 * 3 * 16 * 32), b(32, 0.1f);
        fill(in.v, rng);
        fill(w, rng);
        const double s = time_ms([&] { kernels::ref::conv2d_forward(in, w, b, 3, 2, 1, out); }, reps);
        const double p = time_ms([&] { kernels::conv2d_forward(in, w, b, 3, 2, 1, out); }, reps);
        report("conv2d_forward 64x64x16->32", s, p);
    }
    { // conv backward (input + params)
        Tensor3<float> in(32, 32, 32), gout(16, 16, 64), gin(32, 32, 32);
        std::vector<float> w(3 * 3 * 32 * 64), gw(w.size()), gb(64);
        fill(in.v, rng);
        fill(gout.v, rng);
        fill(w, rng);
        const double s = time_ms(
            [&] {
                kernels::ref::conv2d_backward_input(gout, w, 3, 2, 1, gin);
                kernels::ref::conv2d_backward_params(gout, in, 3, 2, 1, gw, gb);
            },
            reps);
        const double p = time_ms(
            [&] {
                kernels::conv2d_backward_input(gout, w, 3, 2, 1, gin);
                kernels::conv2d_backward_params(gout, in, 3, 2, 1, gw, gb);
            },
            reps);
        report("conv2d_backward 32x32x32", s, p);
    }
    { // converter-sized affine
        Matrix<float> in(16, 1024), w(1024, 1024), out(16, 1024);
        std::vector<float> b(1024);
        fill(in.v, rng);
        fill(w.v, rng);
        fill(b, rng);
        const double s = time_ms([&] { kernels::ref::affine_forward(in, w, b, out); }, reps);
        const double p = time_ms([&] { kernels::affine_forward(in, w, b, out); }, reps);
        report("affine_forward 16x1024x1024", s, p);
    }
    { // retrieval-sized similarity
        Matrix<float> a(512, 128), bb(512, 128), m(512, 512);
        fill(a.v, rng);
        fill(bb.v, rng);
        const double s = time_ms([&] { kernels::ref::similarity(a, bb, m); }, reps);
        const double p = time_ms([&] { kernels::similarity(a, bb, m); }, reps);
        report("similarity 512x512x128", s, p);
    }
    { // map normalization
        Tensor3<float> in(32, 32, 128), out(32, 32, 128);
        std::vector<float> scales(128);
        fill(in.v, rng);
        const double s =
            time_ms([&] { kernels::ref::channel_l2_softmax(in, true, out, scales); }, reps);
        const double p = time_ms([&] { kernels::channel_l2_softmax(in, true, out, scales); }, reps);
        report("channel_l2_softmax 32x32x128", s, p);
    }
    return 0;
}
