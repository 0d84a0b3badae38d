#pragma once

// Dense kernels shared by the autodiff graph (double) and the fast inference
// path (float). Parallel loops only ever split disjoint output regions and
// every accumulation runs in a fixed order, so results are bitwise
// independent of the worker count.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

#include "hunet/common.hpp"

namespace hunet {

enum class PadMode { zero, replicate };

namespace detail {

template <typename T>
struct MicroTile {
    static constexpr int MR = 8;
    static constexpr int NR = sizeof(T) == 4 ? 32 : 16;
};

// C[MR x NR] += A[MR x kc] * Bpack[kc x NR]; B panel is contiguous.
template <typename T, int MR, int NR>
inline void micro_kernel(std::int64_t kc, const T* a, std::int64_t lda, const T* bpack, T* c,
                         std::int64_t ldc) {
    T acc[MR][NR] = {};
    for (std::int64_t k = 0; k < kc; ++k) {
        const T* brow = bpack + k * NR;
        for (int i = 0; i < MR; ++i) {
            T av = a[i * lda + k];
#pragma omp simd
            for (int j = 0; j < NR; ++j) acc[i][j] += av * brow[j];
        }
    }
    for (int i = 0; i < MR; ++i) {
        T* crow = c + i * ldc;
#pragma omp simd
        for (int j = 0; j < NR; ++j) crow[j] += acc[i][j];
    }
}

// Ragged edges; bpack strip still has NR-column stride.
template <typename T, int NR>
inline void micro_kernel_edge(std::int64_t mr, std::int64_t nr, std::int64_t kc, const T* a,
                              std::int64_t lda, const T* bpack, T* c, std::int64_t ldc) {
    for (std::int64_t i = 0; i < mr; ++i) {
        for (std::int64_t j = 0; j < nr; ++j) {
            T acc = 0;
            for (std::int64_t k = 0; k < kc; ++k) acc += a[i * lda + k] * bpack[k * NR + j];
            c[i * ldc + j] += acc;
        }
    }
}

// Distinct thread-local scratch areas; Tag keeps simultaneously-live buffers
// (gemm pack, transpose, im2col columns) from aliasing.
template <typename T, int Tag>
inline T* scratch(std::size_t n) {
    static thread_local std::vector<T> buf;
    if (buf.size() < n) buf.resize(n);
    return buf.data();
}

inline constexpr int kScratchPack = 0;
inline constexpr int kScratchTranspose = 1;
inline constexpr int kScratchCol = 2;

} // namespace detail

// C[M x N] += A[M x K] * B[K x N], all row-major. Threads split N blocks;
// the k accumulation order per element is fixed.
template <typename T>
inline void gemm_acc(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, std::int64_t lda,
                     const T* B, std::int64_t ldb, T* C, std::int64_t ldc) {
    constexpr int MR = detail::MicroTile<T>::MR;
    constexpr int NR = detail::MicroTile<T>::NR;
    constexpr std::int64_t NC = 512;
    constexpr std::int64_t KC = 320;

    const std::int64_t nblocks = (N + NC - 1) / NC;
#pragma omp parallel for schedule(static)
    for (std::int64_t nb = 0; nb < nblocks; ++nb) {
        const std::int64_t n0 = nb * NC;
        const std::int64_t nc = std::min(NC, N - n0);
        const std::int64_t nstrips = (nc + NR - 1) / NR;
        T* pack = detail::scratch<T, detail::kScratchPack>(static_cast<std::size_t>(KC) * nstrips * NR);
        for (std::int64_t k0 = 0; k0 < K; k0 += KC) {
            const std::int64_t kc = std::min(KC, K - k0);
            // pack the B block into contiguous NR-column strips
            for (std::int64_t s = 0; s < nstrips; ++s) {
                T* dst = pack + s * kc * NR;
                const T* src = B + k0 * ldb + n0 + s * NR;
                const std::int64_t w = std::min<std::int64_t>(NR, nc - s * NR);
                for (std::int64_t k = 0; k < kc; ++k) {
                    for (std::int64_t j = 0; j < w; ++j) dst[k * NR + j] = src[k * ldb + j];
                    for (std::int64_t j = w; j < NR; ++j) dst[k * NR + j] = T(0);
                }
            }
            std::int64_t m = 0;
            for (; m + MR <= M; m += MR) {
                std::int64_t n = 0;
                for (; n + NR <= nc; n += NR)
                    detail::micro_kernel<T, MR, NR>(kc, A + m * lda + k0, lda, pack + (n / NR) * kc * NR,
                                                    C + m * ldc + n0 + n, ldc);
                if (n < nc)
                    detail::micro_kernel_edge<T, NR>(MR, nc - n, kc, A + m * lda + k0, lda,
                                                     pack + (n / NR) * kc * NR, C + m * ldc + n0 + n, ldc);
            }
            for (; m < M; ++m) {
                std::int64_t n = 0;
                for (; n < nc; n += NR) {
                    const std::int64_t w = std::min<std::int64_t>(NR, nc - n);
                    detail::micro_kernel_edge<T, NR>(1, w, kc, A + m * lda + k0, lda,
                                                     pack + (n / NR) * kc * NR, C + m * ldc + n0 + n, ldc);
                }
            }
        }
    }
}

template <typename T>
inline void transpose_into(const T* a, std::int64_t rows, std::int64_t cols, std::int64_t lda, T* out) {
    for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * lda + j];
}

// C += A^T * B where A is [K x M] row-major.
template <typename T>
inline void gemm_acc_tn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, std::int64_t lda,
                        const T* B, std::int64_t ldb, T* C, std::int64_t ldc) {
    T* at = detail::scratch<T, detail::kScratchTranspose>(static_cast<std::size_t>(M) * K);
    transpose_into(A, K, M, lda, at);
    gemm_acc<T>(M, N, K, at, K, B, ldb, C, ldc);
}

// C += A * B^T where B is [N x K] row-major.
template <typename T>
inline void gemm_acc_nt(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, std::int64_t lda,
                        const T* B, std::int64_t ldb, T* C, std::int64_t ldc) {
    T* bt = detail::scratch<T, detail::kScratchTranspose>(static_cast<std::size_t>(K) * N);
    transpose_into(B, N, K, ldb, bt);
    gemm_acc<T>(M, N, K, A, lda, bt, N, C, ldc);
}

// ---------------------------------------------------------------------------
// conv2d, stride 1, same padding. Even kernels pad (k-1)/2 before and k/2
// after so the output keeps the power-of-two extent the transform blocks need.

struct ConvGeom {
    int kh, kw;
    int pad_top, pad_left;
    PadMode pad;
};

inline ConvGeom conv_geom(int kh, int kw, PadMode pad) {
    return ConvGeom{kh, kw, (kh - 1) / 2, (kw - 1) / 2, pad};
}

namespace detail {

// Walks the output pixels [n0, n0+nc) as horizontal segments of single rows.
template <typename Fn>
inline void for_each_row_segment(int W, std::int64_t n0, std::int64_t nc, Fn&& fn) {
    std::int64_t p = n0;
    const std::int64_t end = n0 + nc;
    while (p < end) {
        const int oy = static_cast<int>(p / W);
        const int ox = static_cast<int>(p % W);
        const std::int64_t run = std::min<std::int64_t>(W - ox, end - p);
        fn(oy, ox, p - n0, run);
        p += run;
    }
}

} // namespace detail

// Columns for output pixels [n0, n0+nc) of one image: out[K x nc] with
// K = C*kh*kw. Out-of-range taps read 0 (zero mode) or the clamped pixel.
template <typename T>
inline void im2col_block(const T* x, int C, int H, int W, const ConvGeom& g, std::int64_t n0,
                         std::int64_t nc, T* out) {
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c) {
        const T* plane = x + c * hw;
        for (int dy = 0; dy < g.kh; ++dy) {
            for (int dx = 0; dx < g.kw; ++dx, ++row) {
                T* dst = out + row * nc;
                detail::for_each_row_segment(W, n0, nc, [&](int oy, int ox, std::int64_t off, std::int64_t run) {
                    int iy = oy + dy - g.pad_top;
                    T* d = dst + off;
                    if (iy < 0 || iy >= H) {
                        if (g.pad == PadMode::zero) {
                            std::fill(d, d + run, T(0));
                            return;
                        }
                        iy = std::clamp(iy, 0, H - 1);
                    }
                    const T* src = plane + static_cast<std::int64_t>(iy) * W;
                    const int ix0 = ox + dx - g.pad_left;
                    std::int64_t i = 0;
                    for (; i < run && ix0 + i < 0; ++i)
                        d[i] = g.pad == PadMode::zero ? T(0) : src[0];
                    const std::int64_t in_end = std::min<std::int64_t>(run, W - ix0);
                    if (in_end > i) {
                        std::memcpy(d + i, src + ix0 + i, static_cast<std::size_t>(in_end - i) * sizeof(T));
                        i = in_end;
                    }
                    for (; i < run; ++i)
                        d[i] = g.pad == PadMode::zero ? T(0) : src[W - 1];
                });
            }
        }
    }
}

// Scatter-add of a column block back onto the input gradient; the inverse
// index map of im2col_block. Sequential by design (taps overlap).
template <typename T>
inline void col2im_block_acc(const T* col, int C, int H, int W, const ConvGeom& g, std::int64_t n0,
                             std::int64_t nc, T* dxout) {
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c) {
        T* plane = dxout + c * hw;
        for (int dy = 0; dy < g.kh; ++dy) {
            for (int dx = 0; dx < g.kw; ++dx, ++row) {
                const T* srcrow = col + row * nc;
                detail::for_each_row_segment(W, n0, nc, [&](int oy, int ox, std::int64_t off, std::int64_t run) {
                    int iy = oy + dy - g.pad_top;
                    if (iy < 0 || iy >= H) {
                        if (g.pad == PadMode::zero) return;
                        iy = std::clamp(iy, 0, H - 1);
                    }
                    T* drow = plane + static_cast<std::int64_t>(iy) * W;
                    const T* s = srcrow + off;
                    const int ix0 = ox + dx - g.pad_left;
                    std::int64_t i = 0;
                    for (; i < run && ix0 + i < 0; ++i)
                        if (g.pad == PadMode::replicate) drow[0] += s[i];
                    const std::int64_t in_end = std::min<std::int64_t>(run, W - ix0);
                    for (; i < in_end; ++i) drow[ix0 + i] += s[i];
                    if (g.pad == PadMode::replicate)
                        for (; i < run; ++i) drow[W - 1] += s[i];
                });
            }
        }
    }
}

inline constexpr std::int64_t kConvColBlock = 2048;

// Few output channels with a large patch size: column materialization would
// be pure memory traffic, so run the convolution as shifted-row AXPYs.
inline bool conv_prefers_direct(int cout, std::int64_t k) { return cout <= 2 && k >= 1024; }

namespace detail {

// In-range span of output columns for one (dx) tap on one row.
struct Span {
    std::int64_t lo, hi; // ox in [lo, hi) reads x in-bounds at ox + shift
    std::int64_t shift;
};

inline Span tap_span(int W, int dx, int pad_left) {
    Span s;
    s.shift = dx - pad_left;
    s.lo = std::max<std::int64_t>(0, -s.shift);
    s.hi = std::min<std::int64_t>(W, W - s.shift);
    return s;
}

} // namespace detail

template <typename T>
inline void conv2d_forward_direct(const T* x, int B, int Cin, int H, int W, const T* w, int Cout,
                                  int kh, int kw, const T* bias, PadMode pad, T* y) {
    const ConvGeom g = conv_geom(kh, kw, pad);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        const T* xb = x + b * Cin * plane;
        T* yb = y + b * Cout * plane;
#pragma omp parallel for schedule(static)
        for (int oy = 0; oy < H; ++oy) {
            for (int co = 0; co < Cout; ++co) {
                T* yrow = yb + co * plane + static_cast<std::int64_t>(oy) * W;
                std::fill(yrow, yrow + W, bias ? bias[co] : T(0));
                for (int ci = 0; ci < Cin; ++ci) {
                    const T* xplane = xb + ci * plane;
                    const T* wbase = w + ((static_cast<std::int64_t>(co) * Cin + ci) * kh) * kw;
                    for (int dy = 0; dy < kh; ++dy) {
                        int iy = oy + dy - g.pad_top;
                        if (iy < 0 || iy >= H) {
                            if (g.pad == PadMode::zero) continue;
                            iy = std::clamp(iy, 0, H - 1);
                        }
                        const T* xrow = xplane + static_cast<std::int64_t>(iy) * W;
                        const T* wrow = wbase + static_cast<std::int64_t>(dy) * kw;
                        for (int dx = 0; dx < kw; ++dx) {
                            const T wv = wrow[dx];
                            const auto s = detail::tap_span(W, dx, g.pad_left);
                            if (g.pad == PadMode::replicate) {
                                for (std::int64_t ox = 0; ox < s.lo; ++ox) yrow[ox] += wv * xrow[0];
                                for (std::int64_t ox = s.hi; ox < W; ++ox) yrow[ox] += wv * xrow[W - 1];
                            }
                            const T* src = xrow + s.shift + s.lo;
                            T* dst = yrow + s.lo;
                            const std::int64_t run = s.hi - s.lo;
#pragma omp simd
                            for (std::int64_t i = 0; i < run; ++i) dst[i] += wv * src[i];
                        }
                    }
                }
            }
        }
    }
}

// Direct gradients for the same case. dx is parallel over input rows (each
// written by one thread); dw/db accumulate sequentially.
template <typename T>
inline void conv2d_backward_direct(const T* x, const T* dy, int B, int Cin, int H, int W, const T* w,
                                   int Cout, int kh, int kw, PadMode pad, T* dxout, T* dw, T* db) {
    const ConvGeom g = conv_geom(kh, kw, pad);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        const T* xb = x + b * Cin * plane;
        const T* dyb = dy + b * Cout * plane;
        if (dxout) {
            T* dxb = dxout + b * Cin * plane;
            // dX[ci, iy, ix] += sum over taps w[co,ci,dy,dx] * dY[co, iy+pt-dy, ix+pl-dx];
            // iterate output rows contributing to each input row
#pragma omp parallel for schedule(static)
            for (int iy = 0; iy < H; ++iy) {
                for (int ci = 0; ci < Cin; ++ci) {
                    T* dxrow = dxb + ci * plane + static_cast<std::int64_t>(iy) * W;
                    for (int co = 0; co < Cout; ++co) {
                        const T* dyplane = dyb + co * plane;
                        const T* wbase = w + ((static_cast<std::int64_t>(co) * Cin + ci) * kh) * kw;
                        for (int dy_ = 0; dy_ < kh; ++dy_) {
                            // zero mode: input row iy receives from output row oy = iy + pt - dy
                            if (g.pad == PadMode::zero) {
                                const int oy = iy + g.pad_top - dy_;
                                if (oy < 0 || oy >= H) continue;
                                const T* dyrow = dyplane + static_cast<std::int64_t>(oy) * W;
                                const T* wrow = wbase + static_cast<std::int64_t>(dy_) * kw;
                                for (int dx = 0; dx < kw; ++dx) {
                                    const T wv = wrow[dx];
                                    const auto s = detail::tap_span(W, dx, g.pad_left);
                                    const T* src = dyrow + s.lo;
                                    T* dst = dxrow + s.shift + s.lo;
#pragma omp simd
                                    for (std::int64_t i = 0; i < s.hi - s.lo; ++i) dst[i] += wv * src[i];
                                }
                            } else {
                                // replicate: output row oy reads clamped input row; accumulate all
                                // oy whose clamp maps onto iy
                                for (int oy = 0; oy < H; ++oy) {
                                    int src_iy = std::clamp(oy + dy_ - g.pad_top, 0, H - 1);
                                    if (src_iy != iy) continue;
                                    const T* dyrow = dyplane + static_cast<std::int64_t>(oy) * W;
                                    const T* wrow = wbase + static_cast<std::int64_t>(dy_) * kw;
                                    for (int dx = 0; dx < kw; ++dx) {
                                        const T wv = wrow[dx];
                                        const auto s = detail::tap_span(W, dx, g.pad_left);
                                        for (std::int64_t ox = 0; ox < s.lo; ++ox) dxrow[0] += wv * dyrow[ox];
                                        for (std::int64_t ox = s.hi; ox < W; ++ox)
                                            dxrow[W - 1] += wv * dyrow[ox];
                                        const T* src = dyrow + s.lo;
                                        T* dst = dxrow + s.shift + s.lo;
                                        for (std::int64_t i = 0; i < s.hi - s.lo; ++i) dst[i] += wv * src[i];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if (dw) {
            for (int co = 0; co < Cout; ++co) {
                const T* dyplane = dyb + co * plane;
                for (int ci = 0; ci < Cin; ++ci) {
                    const T* xplane = xb + ci * plane;
                    T* dwbase = dw + ((static_cast<std::int64_t>(co) * Cin + ci) * kh) * kw;
#pragma omp parallel for schedule(static)
                    for (int dy_ = 0; dy_ < kh; ++dy_) {
                        T* dwrow = dwbase + static_cast<std::int64_t>(dy_) * kw;
                        for (int oy = 0; oy < H; ++oy) {
                            int iy = oy + dy_ - g.pad_top;
                            if (iy < 0 || iy >= H) {
                                if (g.pad == PadMode::zero) continue;
                                iy = std::clamp(iy, 0, H - 1);
                            }
                            const T* dyrow = dyplane + static_cast<std::int64_t>(oy) * W;
                            const T* xrow = xplane + static_cast<std::int64_t>(iy) * W;
                            for (int dx = 0; dx < kw; ++dx) {
                                const auto s = detail::tap_span(W, dx, g.pad_left);
                                T acc = 0;
                                if (g.pad == PadMode::replicate) {
                                    for (std::int64_t ox = 0; ox < s.lo; ++ox) acc += dyrow[ox] * xrow[0];
                                    for (std::int64_t ox = s.hi; ox < W; ++ox) acc += dyrow[ox] * xrow[W - 1];
                                }
                                const T* dsrc = dyrow + s.lo;
                                const T* xsrc = xrow + s.shift + s.lo;
#pragma omp simd reduction(+ : acc)
                                for (std::int64_t i = 0; i < s.hi - s.lo; ++i) acc += dsrc[i] * xsrc[i];
                                dwrow[dx] += acc;
                            }
                        }
                    }
                }
            }
        }
        if (db) {
            for (int co = 0; co < Cout; ++co) {
                T acc = 0;
                const T* src = dyb + co * plane;
                for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
                db[co] += acc;
            }
        }
    }
}

// y[B,Cout,H,W] = w[Cout,Cin,kh,kw] (*) x[B,Cin,H,W] + bias. Cross-correlation.
template <typename T>
inline void conv2d_forward(const T* x, int B, int Cin, int H, int W, const T* w, int Cout, int kh,
                           int kw, const T* bias, PadMode pad, T* y) {
    if (conv_prefers_direct(Cout, static_cast<std::int64_t>(Cin) * kh * kw)) {
        conv2d_forward_direct(x, B, Cin, H, W, w, Cout, kh, kw, bias, pad, y);
        return;
    }
    const ConvGeom g = conv_geom(kh, kw, pad);
    const std::int64_t N = static_cast<std::int64_t>(H) * W;
    const std::int64_t K = static_cast<std::int64_t>(Cin) * kh * kw;
    const std::int64_t in_stride = static_cast<std::int64_t>(Cin) * N;
    const std::int64_t out_stride = static_cast<std::int64_t>(Cout) * N;

    const std::int64_t nblocks = (N + kConvColBlock - 1) / kConvColBlock;
    for (int b = 0; b < B; ++b) {
        const T* xb = x + b * in_stride;
        T* yb = y + b * out_stride;
#pragma omp parallel for schedule(static)
        for (std::int64_t nb = 0; nb < nblocks; ++nb) {
            const std::int64_t n0 = nb * kConvColBlock;
            const std::int64_t nc = std::min(kConvColBlock, N - n0);
            T* col = detail::scratch<T, detail::kScratchCol>(static_cast<std::size_t>(K) * nc);
            im2col_block(xb, Cin, H, W, g, n0, nc, col);
            for (int co = 0; co < Cout; ++co) {
                T* dst = yb + co * N + n0;
                const T bv = bias ? bias[co] : T(0);
                std::fill(dst, dst + nc, bv);
            }
            // y block [Cout x nc] += w [Cout x K] * col [K x nc]
            gemm_acc<T>(Cout, nc, K, w, K, col, nc, yb + n0, N);
        }
    }
}

// Gradients w.r.t. input, weights, bias. dx/dw/db are accumulated into
// (callers zero them first). Any of them may be null to skip.
template <typename T>
inline void conv2d_backward(const T* x, const T* dy, int B, int Cin, int H, int W, const T* w,
                            int Cout, int kh, int kw, PadMode pad, T* dxout, T* dw, T* db) {
    if (conv_prefers_direct(Cout, static_cast<std::int64_t>(Cin) * kh * kw)) {
        conv2d_backward_direct(x, dy, B, Cin, H, W, w, Cout, kh, kw, pad, dxout, dw, db);
        return;
    }
    const ConvGeom g = conv_geom(kh, kw, pad);
    const std::int64_t N = static_cast<std::int64_t>(H) * W;
    const std::int64_t K = static_cast<std::int64_t>(Cin) * kh * kw;
    const std::int64_t in_stride = static_cast<std::int64_t>(Cin) * N;
    const std::int64_t out_stride = static_cast<std::int64_t>(Cout) * N;

    std::vector<T> col(static_cast<std::size_t>(K) * std::min(kConvColBlock, N));
    std::vector<T> dyt;
    std::vector<T> dwt;
    if (dw) {
        dyt.assign(static_cast<std::size_t>(std::min(kConvColBlock, N)) * Cout, T(0));
        dwt.assign(static_cast<std::size_t>(K) * Cout, T(0));
    }
    for (int b = 0; b < B; ++b) {
        const T* xb = x + b * in_stride;
        const T* dyb = dy + b * out_stride;
        T* dxb = dxout ? dxout + b * in_stride : nullptr;
        for (std::int64_t n0 = 0; n0 < N; n0 += kConvColBlock) {
            const std::int64_t nc = std::min(kConvColBlock, N - n0);
            if (dw) {
                im2col_block(xb, Cin, H, W, g, n0, nc, col.data());
                // dw^T [K x Cout] += col [K x nc] * dy^T [nc x Cout]; only the
                // small dy block gets transposed
                transpose_into(dyb + n0, Cout, nc, N, dyt.data());
                gemm_acc<T>(K, Cout, nc, col.data(), nc, dyt.data(), Cout, dwt.data(), Cout);
            }
            if (dxb) {
                std::fill(col.begin(), col.begin() + K * nc, T(0));
                // dcol [K x nc] += w^T [K x Cout] * dy block [Cout x nc]
                gemm_acc_tn<T>(K, nc, Cout, w, K, dyb + n0, N, col.data(), nc);
                col2im_block_acc(col.data(), Cin, H, W, g, n0, nc, dxb);
            }
        }
        if (db) {
            for (int co = 0; co < Cout; ++co) {
                T acc = 0;
                const T* src = dyb + co * N;
                for (std::int64_t n = 0; n < N; ++n) acc += src[n];
                db[co] += acc;
            }
        }
    }
    if (dw) {
        for (int co = 0; co < Cout; ++co)
            for (std::int64_t k = 0; k < K; ++k) dw[co * K + k] += dwt[k * Cout + co];
    }
}

// ---------------------------------------------------------------------------
// 2x2 average pooling, stride 2.

template <typename T>
inline void avgpool2d_forward(const T* x, int B, int C, int H, int W, T* y) {
    if (H % 2 || W % 2) throw DimensionError("avgpool2d: extents must be even");
    const int Ho = H / 2, Wo = W / 2;
    const std::int64_t planes = static_cast<std::int64_t>(B) * C;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* src = x + p * H * W;
        T* dst = y + p * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                const T* s = src + (2 * oy) * W + 2 * ox;
                dst[oy * Wo + ox] = (s[0] + s[1] + s[W] + s[W + 1]) * T(0.25);
            }
    }
}

template <typename T>
inline void avgpool2d_backward(const T* dy, int B, int C, int H, int W, T* dxout) {
    const int Ho = H / 2, Wo = W / 2;
    const std::int64_t planes = static_cast<std::int64_t>(B) * C;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* src = dy + p * Ho * Wo;
        T* dst = dxout + p * H * W;
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                const T q = src[oy * Wo + ox] * T(0.25);
                T* d = dst + (2 * oy) * W + 2 * ox;
                d[0] += q;
                d[1] += q;
                d[W] += q;
                d[W + 1] += q;
            }
    }
}

} // namespace hunet
