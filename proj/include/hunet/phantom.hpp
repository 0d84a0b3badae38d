#pragma once

// Synthetic phantoms: an elliptical organ with a few internal texture zones
// on a dark noisy background, corrupted by a smooth multiplicative bias
// field. Supplies ground-truth pairs (and the true field) for training and
// evaluation.

#include <cstdint>
#include <string>
#include <vector>

#include "hunet/metrics.hpp"
#include "hunet/rng.hpp"

namespace hunet {

struct Phantom {
    int size = 0;
    std::vector<double> clean;  // reference Y, intensities in [0,1]
    std::vector<double> biased; // raw input X = Y * b
    std::vector<double> bias;   // b, in [0.6, 1.5], mean 1 over tissue
    Mask tissue_mask;
    Mask background_mask;
};

// b = exp(s * P(u,v)) for a random polynomial P of total degree <= 3,
// centered and scaled so b lies in [0.6, 1.5] with mean 1 over the tissue
// mask (whole image when no mask is given).
std::vector<double> gen_bias(Rng& rng, int size, const Mask* tissue = nullptr);

// Deterministic core of gen_bias; coeffs are the polynomial coefficients
// c[i][j] for u^i v^j, i + j <= 3, constant term ignored. `amplitude` is the
// peak of |s*P| before exponentiation (pass <= 0.40 to stay inside the range
// guarantee). An all-zero polynomial yields b == 1.
std::vector<double> bias_from_poly(const std::vector<double>& coeffs, double amplitude, int size,
                                   const Mask* tissue = nullptr);

// Clean phantom plus bias and their product. size must be a power of two
// >= 32.
Phantom gen_phantom(Rng& rng, int size);

// ---- datasets -----------------------------------------------------------------

struct DatasetItem {
    std::string id;
    std::uint64_t seed = 0;
    Phantom phantom;
};

// n phantoms with per-item seeds split from `seed`; regenerating with the
// same arguments reproduces the data bit-exactly.
std::vector<DatasetItem> make_dataset(std::uint64_t seed, int n, int size);

// On-disk layout: manifest.json plus per-item raw f32 volumes
// ({id}_x/_y/_bias/_mask.f32 with JSON sidecars).
void write_dataset(const std::string& dir, std::uint64_t seed, int n, int size);
std::vector<DatasetItem> load_dataset(const std::string& dir);

} // namespace hunet
