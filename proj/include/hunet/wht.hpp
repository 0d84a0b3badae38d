#pragma once

#include <cstdint>
#include <vector>

#include "hunet/common.hpp"

namespace hunet {

enum class Ordering { natural, sequency };

// unnormalized: plain butterfly, H*v, exact convolution theorem.
// ortho_eq1:    1/M overall factor for the 2D transform (1/sqrt(M) per axis),
//               making the 2D transform an involution and norm-preserving.
enum class NormConvention { unnormalized, ortho_eq1 };

// Hadamard-domain coefficient grid of an M x M image.
struct Spectrum {
    int m = 0;
    std::vector<double> coeffs; // m*m row-major
    Ordering ordering = Ordering::natural;
    NormConvention norm = NormConvention::ortho_eq1;

    double& at(int a, int b) { return coeffs[static_cast<std::size_t>(a) * m + b]; }
    double at(int a, int b) const { return coeffs[static_cast<std::size_t>(a) * m + b]; }
};

// In-place radix-2 butterfly; additions and subtractions only. Natural order.
template <typename T>
inline void fwht_inplace(T* v, std::int64_t n) {
    for (std::int64_t h = 1; h < n; h <<= 1) {
        for (std::int64_t i = 0; i < n; i += (h << 1)) {
            for (std::int64_t j = i; j < i + h; ++j) {
                T x = v[j];
                T y = v[j + h];
                v[j] = x + y;
                v[j + h] = x - y;
            }
        }
    }
}

// In-place 2D transform of an m x m plane: butterfly over rows, then columns,
// then the convention's scale factor (1/m for ortho_eq1).
template <typename T>
inline void ht_2d_inplace(T* plane, int m, NormConvention norm = NormConvention::ortho_eq1) {
    for (int r = 0; r < m; ++r) fwht_inplace(plane + static_cast<std::int64_t>(r) * m, m);
    std::vector<T> col(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) {
        for (int r = 0; r < m; ++r) col[r] = plane[static_cast<std::int64_t>(r) * m + c];
        fwht_inplace(col.data(), m);
        for (int r = 0; r < m; ++r) plane[static_cast<std::int64_t>(r) * m + c] = col[r];
    }
    if (norm == NormConvention::ortho_eq1) {
        T s = T(1) / T(m);
        std::int64_t n = static_cast<std::int64_t>(m) * m;
        for (std::int64_t i = 0; i < n; ++i) plane[i] *= s;
    }
}

// 1D transform. ortho_eq1 scales by 1/sqrt(M) (the per-axis share of the 2D
// 1/M factor), so the 1D transform is an involution as well.
std::vector<double> fwht_1d(std::vector<double> v, NormConvention norm = NormConvention::unnormalized);

Spectrum ht_2d(const std::vector<double>& x, int m, NormConvention norm = NormConvention::ortho_eq1);
std::vector<double> iht_2d(const Spectrum& s);

// out[k] = sum_i m[i] * n[k XOR i]. O(M^2) test oracle for the convolution
// theorem; kept deliberately independent of the butterfly path.
std::vector<double> dyadic_conv_bruteforce(const std::vector<double>& m, const std::vector<double>& n);

// perm[s] = natural-order index of the s-th Walsh function when sorted by
// zero-crossing count (sequency). Diagnostic reordering only; the network's
// per-coefficient parameters are ordering-invariant.
std::vector<int> sequency_permutation(int m);

Spectrum to_sequency(const Spectrum& s);
Spectrum to_natural(const Spectrum& s);

// Fraction of spectral energy inside the lowest-sequency `block` x `block`
// corner. Used to certify that a field is low-frequency.
double low_sequency_energy_fraction(const std::vector<double>& img, int m, int block);

} // namespace hunet
