#include "hunet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hunet/common.hpp"
#include "hunet/volume_io.hpp"

namespace hunet {

namespace {

constexpr double kBgLow = 0.005, kBgHigh = 0.045;
constexpr double kMaxLogAmplitude = 0.40; // keeps exp range inside [0.6, 1.5] after normalization

struct Ellipse {
    double cx, cy, a, b, phi;
    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(phi), s = std::sin(phi);
        const double u = (dx * c + dy * s) / a;
        const double v = (-dx * s + dy * c) / b;
        return u * u + v * v <= 1.0;
    }
};

} // namespace

std::vector<double> bias_from_poly(const std::vector<double>& coeffs, double amplitude, int size,
                                   const Mask* tissue) {
    require_pow2(size, "bias field size");
    if (coeffs.size() != 16) throw ContractError("bias_from_poly: expected a 4x4 coefficient grid");
    if (amplitude < 0.0 || amplitude > kMaxLogAmplitude)
        throw ContractError("bias_from_poly: amplitude must lie in [0, 0.40]");
    const std::int64_t n = static_cast<std::int64_t>(size) * size;
    if (tissue && static_cast<std::int64_t>(tissue->size()) != n)
        throw DimensionError("bias_from_poly: mask size mismatch");

    std::vector<double> p(n, 0.0);
    for (int yy = 0; yy < size; ++yy) {
        const double v = 2.0 * yy / (size - 1.0) - 1.0;
        for (int xx = 0; xx < size; ++xx) {
            const double u = 2.0 * xx / (size - 1.0) - 1.0;
            double acc = 0.0;
            double upow = 1.0;
            for (int i = 0; i <= 3; ++i) {
                double vpow = 1.0;
                for (int j = 0; j <= 3 - i; ++j) {
                    if (i || j) acc += coeffs[i * 4 + j] * upow * vpow;
                    vpow *= v;
                }
                upow *= u;
            }
            p[yy * size + xx] = acc;
        }
    }

    auto masked_mean = [&](const std::vector<double>& f) {
        double acc = 0.0;
        std::int64_t cnt = 0;
        for (std::int64_t i = 0; i < n; ++i)
            if (!tissue || (*tissue)[i]) {
                acc += f[i];
                ++cnt;
            }
        if (cnt == 0) throw ContractError("bias_from_poly: empty tissue mask");
        return acc / static_cast<double>(cnt);
    };

    const double pmean = masked_mean(p);
    double pmax_mask = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        p[i] -= pmean;
        if (!tissue || (*tissue)[i]) pmax_mask = std::max(pmax_mask, std::abs(p[i]));
    }
    std::vector<double> b(n, 1.0);
    if (pmax_mask < 1e-15) return b; // zero polynomial

    // Amplitude is targeted over the tissue region; outside it the log-field
    // is squashed through tanh so the whole image stays within range. The
    // shrink loop makes [0.6, 1.5] a hard guarantee.
    constexpr double kLogCap = 0.405; // ln(1.5), minus rounding slack below
    double s = amplitude / pmax_mask;
    std::vector<double> logb(n);
    for (int iter = 0; iter < 64; ++iter) {
        for (std::int64_t i = 0; i < n; ++i) logb[i] = kLogCap * std::tanh(s * p[i] / kLogCap);
        double lmean = 0.0;
        std::int64_t cnt = 0;
        for (std::int64_t i = 0; i < n; ++i)
            if (!tissue || (*tissue)[i]) {
                lmean += logb[i];
                ++cnt;
            }
        lmean /= static_cast<double>(cnt);
        for (std::int64_t i = 0; i < n; ++i) b[i] = std::exp(logb[i] - lmean);
        const double bmean = masked_mean(b);
        double lo = 1e300, hi = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            b[i] /= bmean;
            lo = std::min(lo, b[i]);
            hi = std::max(hi, b[i]);
        }
        if (lo >= 0.6 && hi <= 1.5) return b;
        s *= 0.85;
    }
    throw ContractError("bias_from_poly: range normalization did not converge");
}

std::vector<double> gen_bias(Rng& rng, int size, const Mask* tissue) {
    std::vector<double> coeffs(16, 0.0);
    // low-degree terms dominate so the field varies across the organ region
    // rather than peaking in the image corners
    for (int i = 0; i <= 3; ++i)
        for (int j = 0; j <= 3 - i; ++j) {
            if (!(i || j)) continue;
            const int deg = i + j;
            const double scale = deg == 1 ? 1.5 : (deg == 2 ? 0.8 : 0.35);
            coeffs[i * 4 + j] = scale * rng.normal();
        }
    const double amplitude = rng.uniform(0.30, kMaxLogAmplitude);
    return bias_from_poly(coeffs, amplitude, size, tissue);
}

Phantom gen_phantom(Rng& rng, int size) {
    require_pow2(size, "phantom size");
    if (size < 32) throw ContractError("phantom size must be >= 32");
    const std::int64_t n = static_cast<std::int64_t>(size) * size;

    Phantom ph;
    ph.size = size;
    ph.clean.resize(n);
    ph.tissue_mask.assign(n, 0);
    ph.background_mask.assign(n, 0);

    const double half = size / 2.0;
    Ellipse organ;
    organ.cx = half + rng.uniform(-0.08, 0.08) * size;
    organ.cy = half + rng.uniform(-0.08, 0.08) * size;
    organ.a = rng.uniform(0.26, 0.36) * size;
    organ.b = rng.uniform(0.26, 0.36) * size;
    organ.phi = rng.uniform(0.0, 3.14159265358979323846);

    const double base = rng.uniform(0.50, 0.65);
    const int zones = 2 + static_cast<int>(rng.below(3)); // organ counts as one zone
    std::vector<Ellipse> inner(zones - 1);
    std::vector<double> level(zones - 1);
    for (int k = 0; k < zones - 1; ++k) {
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = rng.uniform(0.0, 0.55);
        inner[k].cx = organ.cx + rad * organ.a * std::cos(ang);
        inner[k].cy = organ.cy + rad * organ.b * std::sin(ang);
        inner[k].a = rng.uniform(0.045, 0.085) * size;
        inner[k].b = rng.uniform(0.045, 0.085) * size;
        inner[k].phi = rng.uniform(0.0, 3.14159265358979323846);
        // 20-40% contrast against the surrounding tissue, either direction
        const double contrast = rng.uniform(0.20, 0.40) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        level[k] = std::clamp(base * (1.0 + contrast), 0.05, 0.95);
    }

    for (int yy = 0; yy < size; ++yy) {
        for (int xx = 0; xx < size; ++xx) {
            const std::int64_t i = static_cast<std::int64_t>(yy) * size + xx;
            if (organ.contains(xx, yy)) {
                double val = base;
                for (int k = 0; k < zones - 1; ++k)
                    if (inner[k].contains(xx, yy)) val = level[k];
                val *= 1.0 + 0.02 * rng.normal(); // mild multiplicative texture noise
                ph.clean[i] = std::clamp(val, 0.0, 1.0);
                ph.tissue_mask[i] = 1;
            } else {
                ph.clean[i] = rng.uniform(kBgLow, kBgHigh);
                ph.background_mask[i] = 1;
            }
        }
    }

    ph.bias = gen_bias(rng, size, &ph.tissue_mask);
    ph.biased.resize(n);
    for (std::int64_t i = 0; i < n; ++i) ph.biased[i] = ph.clean[i] * ph.bias[i];
    return ph;
}

// ---- datasets ------------------------------------------------------------------

namespace {

std::uint64_t item_seed(std::uint64_t master, int index) {
    Rng base(master);
    Rng child = base.split(static_cast<std::uint64_t>(index));
    return child.next_u64();
}

std::string item_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phantom_%04d", index);
    return buf;
}

} // namespace

std::vector<DatasetItem> make_dataset(std::uint64_t seed, int n, int size) {
    if (n < 1) throw ContractError("make_dataset: n must be >= 1");
    std::vector<DatasetItem> items(n);
    for (int i = 0; i < n; ++i) {
        items[i].id = item_id(i);
        items[i].seed = item_seed(seed, i);
        Rng rng(items[i].seed);
        items[i].phantom = gen_phantom(rng, size);
    }
    return items;
}

void write_dataset(const std::string& dir, std::uint64_t seed, int n, int size) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto items = make_dataset(seed, n, size);

    nlohmann::json manifest;
    manifest["n"] = n;
    manifest["size"] = size;
    manifest["seed"] = seed;
    manifest["items"] = nlohmann::json::array();

    for (const auto& item : items) {
        const Phantom& ph = item.phantom;
        auto write_plane = [&](const std::string& kind, const std::vector<double>& vals) {
            Volume v = make_volume(size, size, 1);
            v.seed = item.seed;
            v.set_slice(0, vals);
            write_raw((fs::path(dir) / (item.id + "_" + kind)).string(), v);
        };
        write_plane("x", ph.biased);
        write_plane("y", ph.clean);
        write_plane("bias", ph.bias);
        std::vector<double> maskf(ph.tissue_mask.begin(), ph.tissue_mask.end());
        write_plane("mask", maskf);
        manifest["items"].push_back({{"id", item.id}, {"seed", item.seed}});
    }
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
}

std::vector<DatasetItem> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("no manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), 0, "manifest");
    }
    const int size = manifest.at("size").get<int>();
    std::vector<DatasetItem> items;
    for (const auto& entry : manifest.at("items")) {
        DatasetItem item;
        item.id = entry.at("id").get<std::string>();
        item.seed = entry.at("seed").get<std::uint64_t>();
        Phantom& ph = item.phantom;
        ph.size = size;

        auto read_plane = [&](const std::string& kind) {
            Volume v = read_raw((fs::path(dir) / (item.id + "_" + kind)).string());
            if (v.nx != size || v.ny != size || v.nz != 1)
                throw ParseError("dataset item '" + item.id + "' has unexpected dims", 0, "dims");
            return v.slice(0);
        };
        ph.biased = read_plane("x");
        ph.clean = read_plane("y");
        ph.bias = read_plane("bias");
        auto maskf = read_plane("mask");
        const std::int64_t n = static_cast<std::int64_t>(size) * size;
        ph.tissue_mask.resize(n);
        ph.background_mask.resize(n);
        for (std::int64_t i = 0; i < n; ++i) {
            ph.tissue_mask[i] = maskf[i] > 0.5 ? 1 : 0;
            ph.background_mask[i] = ph.tissue_mask[i] ? 0 : 1;
        }
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace hunet
