#include "hunet/wht.hpp"

#include <cmath>

namespace hunet {

std::vector<double> fwht_1d(std::vector<double> v, NormConvention norm) {
    auto n = static_cast<std::int64_t>(v.size());
    require_pow2(n, "fwht_1d length");
    fwht_inplace(v.data(), n);
    if (norm == NormConvention::ortho_eq1) {
        double s = 1.0 / std::sqrt(static_cast<double>(n));
        for (auto& x : v) x *= s;
    }
    return v;
}

Spectrum ht_2d(const std::vector<double>& x, int m, NormConvention norm) {
    require_pow2(m, "ht_2d side");
    if (static_cast<std::int64_t>(x.size()) != static_cast<std::int64_t>(m) * m)
        throw DimensionError("ht_2d: input is not an m x m matrix");
    Spectrum s;
    s.m = m;
    s.coeffs = x;
    s.ordering = Ordering::natural;
    s.norm = norm;
    ht_2d_inplace(s.coeffs.data(), m, norm);
    return s;
}

std::vector<double> iht_2d(const Spectrum& s) {
    if (s.ordering != Ordering::natural)
        throw ContractError("iht_2d expects natural ordering; reorder first");
    require_pow2(s.m, "iht_2d side");
    std::vector<double> x = s.coeffs;
    // ortho_eq1 is an involution; the unnormalized inverse carries 1/M^2.
    ht_2d_inplace(x.data(), s.m, NormConvention::unnormalized);
    double scale = (s.norm == NormConvention::ortho_eq1)
                       ? 1.0 / static_cast<double>(s.m)
                       : 1.0 / (static_cast<double>(s.m) * static_cast<double>(s.m));
    for (auto& v : x) v *= scale;
    return x;
}

std::vector<double> dyadic_conv_bruteforce(const std::vector<double>& m, const std::vector<double>& n) {
    if (m.size() != n.size())
        throw DimensionError("dyadic_conv: length mismatch");
    auto len = static_cast<std::int64_t>(m.size());
    require_pow2(len, "dyadic_conv length");
    std::vector<double> out(m.size(), 0.0);
    for (std::int64_t k = 0; k < len; ++k) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < len; ++i) acc += m[i] * n[k ^ i];
        out[k] = acc;
    }
    return out;
}

namespace {

std::uint32_t bit_reverse(std::uint32_t x, int bits) {
    std::uint32_t r = 0;
    for (int i = 0; i < bits; ++i) {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    return r;
}

} // namespace

std::vector<int> sequency_permutation(int m) {
    require_pow2(m, "sequency_permutation size");
    int bits = ilog2(m);
    std::vector<int> perm(static_cast<std::size_t>(m));
    for (std::uint32_t s = 0; s < static_cast<std::uint32_t>(m); ++s) {
        std::uint32_t gray = s ^ (s >> 1);
        perm[s] = static_cast<int>(bit_reverse(gray, bits));
    }
    return perm;
}

namespace {

Spectrum reorder(const Spectrum& s, Ordering target) {
    Spectrum out;
    out.m = s.m;
    out.norm = s.norm;
    out.ordering = target;
    out.coeffs.resize(s.coeffs.size());
    auto perm = sequency_permutation(s.m);
    if (target == Ordering::sequency) {
        for (int a = 0; a < s.m; ++a)
            for (int b = 0; b < s.m; ++b)
                out.coeffs[static_cast<std::size_t>(a) * s.m + b] = s.at(perm[a], perm[b]);
    } else {
        for (int a = 0; a < s.m; ++a)
            for (int b = 0; b < s.m; ++b)
                out.coeffs[static_cast<std::size_t>(perm[a]) * s.m + perm[b]] = s.at(a, b);
    }
    return out;
}

} // namespace

Spectrum to_sequency(const Spectrum& s) {
    if (s.ordering == Ordering::sequency) return s;
    return reorder(s, Ordering::sequency);
}

Spectrum to_natural(const Spectrum& s) {
    if (s.ordering == Ordering::natural) return s;
    return reorder(s, Ordering::natural);
}

double low_sequency_energy_fraction(const std::vector<double>& img, int m, int block) {
    Spectrum s = to_sequency(ht_2d(img, m));
    double total = 0.0, low = 0.0;
    for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) {
            double e = s.at(a, b) * s.at(a, b);
            total += e;
            if (a < block && b < block) low += e;
        }
    }
    return total > 0.0 ? low / total : 1.0;
}

} // namespace hunet
