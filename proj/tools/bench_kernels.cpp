// Rough throughput numbers for the hot kernels; not part of the test suite.
#include <chrono>
#include <cstdio>
#include <vector>

#include "hunet/kernels.hpp"
#include "hunet/rng.hpp"

using namespace hunet;

template <typename T>
static double bench_gemm(std::int64_t M, std::int64_t N, std::int64_t K, int reps) {
    Rng rng(1);
    std::vector<T> a(M * K), b(K * N), c(M * N, 0);
    for (auto& v : a) v = static_cast<T>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<T>(rng.uniform(-1, 1));
    gemm_acc<T>(M, N, K, a.data(), K, b.data(), N, c.data(), N); // warm
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) gemm_acc<T>(M, N, K, a.data(), K, b.data(), N, c.data(), N);
    auto t1 = std::chrono::steady_clock::now();
    double sec = std::chrono::duration<double>(t1 - t0).count() / reps;
    return 2.0 * M * N * K / sec / 1e9;
}

template <typename T>
static double bench_conv(int B, int Cin, int Cout, int H, int k, int reps) {
    Rng rng(2);
    std::vector<T> x(static_cast<std::size_t>(B) * Cin * H * H), w(static_cast<std::size_t>(Cout) * Cin * k * k),
        bias(Cout), y(static_cast<std::size_t>(B) * Cout * H * H);
    for (auto& v : x) v = static_cast<T>(rng.uniform(0, 1));
    for (auto& v : w) v = static_cast<T>(rng.uniform(-0.1, 0.1));
    conv2d_forward<T>(x.data(), B, Cin, H, H, w.data(), Cout, k, k, bias.data(), PadMode::replicate, y.data());
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r)
        conv2d_forward<T>(x.data(), B, Cin, H, H, w.data(), Cout, k, k, bias.data(), PadMode::replicate, y.data());
    auto t1 = std::chrono::steady_clock::now();
    double sec = std::chrono::duration<double>(t1 - t0).count() / reps;
    double flops = 2.0 * B * Cout * H * H * Cin * k * k;
    return flops / sec / 1e9;
}

int main() {
    std::printf("gemm f64  64x2048x1568 : %6.1f GFLOP/s\n", bench_gemm<double>(64, 2048, 1568, 5));
    std::printf("gemm f32  64x2048x1568 : %6.1f GFLOP/s\n", bench_gemm<float>(64, 2048, 1568, 5));
    std::printf("gemm f64  32x4096x288  : %6.1f GFLOP/s\n", bench_gemm<double>(32, 4096, 288, 10));
    std::printf("conv f64  B16 32->64 7x7 @64   : %6.1f GFLOP/s\n", bench_conv<double>(16, 32, 64, 64, 7, 3));
    std::printf("conv f32  B1  32->64 7x7 @256  : %6.1f GFLOP/s\n", bench_conv<float>(1, 32, 64, 256, 7, 3));
    std::printf("conv f32  B1  1->32 16x16 @256 : %6.1f GFLOP/s\n", bench_conv<float>(1, 1, 32, 256, 16, 3));
    return 0;
}
