#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hunet/metrics.hpp"
#include "hunet/phantom.hpp"
#include "hunet/volume_io.hpp"
#include "hunet/wht.hpp"

using namespace hunet;
namespace fs = std::filesystem;

namespace {

void patch_file(const std::string& path, std::int64_t offset, const void* bytes, std::size_t n) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(offset);
    f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
}

std::vector<char> file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("phantom structure") {
    Rng rng(201);
    Phantom ph = gen_phantom(rng, 64);
    const std::int64_t n = 64 * 64;

    std::int64_t tissue = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        CHECK(ph.tissue_mask[i] + ph.background_mask[i] == 1); // disjoint cover
        CHECK(ph.clean[i] >= 0.0);
        CHECK(ph.clean[i] <= 1.0);
        if (ph.background_mask[i]) CHECK(ph.clean[i] < 0.05);
        if (ph.tissue_mask[i]) ++tissue;
    }
    CHECK(tissue > n / 10);
    CHECK(tissue < n * 9 / 10);

    CHECK_THROWS_AS(gen_phantom(rng, 16), ContractError);   // too small
    CHECK_THROWS_AS(gen_phantom(rng, 48), DimensionError);  // not a power of two
}

TEST_CASE("different seeds give different phantoms") {
    Rng a(1), b(2);
    Phantom pa = gen_phantom(a, 32), pb = gen_phantom(b, 32);
    double dist = 0.0;
    for (std::size_t i = 0; i < pa.clean.size(); ++i) {
        const double d = pa.clean[i] - pb.clean[i];
        dist += d * d;
    }
    CHECK(dist > 0.0);
}

TEST_CASE("bias multiplicativity: X / b reproduces Y") {
    Rng rng(202);
    Phantom ph = gen_phantom(rng, 64);
    for (std::size_t i = 0; i < ph.clean.size(); ++i) {
        CHECK(std::abs(ph.biased[i] / ph.bias[i] - ph.clean[i]) < 1e-12);
        CHECK(ph.bias[i] >= 0.6);
        CHECK(ph.bias[i] <= 1.5);
    }
}

TEST_CASE("zero polynomial gives the unit field") {
    auto b = bias_from_poly(std::vector<double>(16, 0.0), 0.3, 32);
    for (double v : b) CHECK(v == 1.0);
}

TEST_CASE("bias fields: positive, in range, tissue mean one, low frequency") {
    Rng rng(203);
    const int m = 64;
    for (int trial = 0; trial < 1000; ++trial) {
        Rng r = rng.split(trial);
        auto b = gen_bias(r, m);
        double mean = 0.0;
        double lo = 1e9, hi = -1e9;
        for (double v : b) {
            mean += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        mean /= b.size();
        REQUIRE(lo > 0.0);
        REQUIRE(lo >= 0.6);
        REQUIRE(hi <= 1.5);
        REQUIRE(std::abs(mean - 1.0) < 1e-9);
        REQUIRE(low_sequency_energy_fraction(b, m, 8) >= 0.95);
    }
}

TEST_CASE("bias raises tissue CV on average") {
    const auto items = make_dataset(77, 200, 64);
    double cv_x = 0.0, cv_y = 0.0;
    for (const auto& item : items) {
        cv_x += cv_metric(item.phantom.biased, item.phantom.tissue_mask);
        cv_y += cv_metric(item.phantom.clean, item.phantom.tissue_mask);
    }
    CHECK(cv_x / items.size() > cv_y / items.size());
}

TEST_CASE("nifti round trip is bit exact") {
    TempDir tmp("hunet_nifti_test");
    Rng rng(204);
    Volume v = make_volume(64, 64, 4);
    for (auto& f : v.data) f = static_cast<float>(rng.uniform(-1.0, 1.0));
    const std::string path = (tmp.path / "vol.nii").string();
    write_nifti(path, v);
    Volume r = read_nifti(path);
    CHECK(r.nx == 64);
    CHECK(r.ny == 64);
    CHECK(r.nz == 4);
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
}

TEST_CASE("nifti rejects malformed files with precise errors") {
    TempDir tmp("hunet_nifti_bad");
    Volume v = make_volume(8, 8, 2);
    const std::string path = (tmp.path / "vol.nii").string();

    // unsupported datatype (int16 = code 4)
    write_nifti(path, v);
    const std::int16_t dt4 = 4;
    patch_file(path, 70, &dt4, 2);
    try {
        read_nifti(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.offset == 70);
        CHECK(e.field == "datatype");
    }

    // bad magic
    write_nifti(path, v);
    patch_file(path, 344, "XXX", 3);
    try {
        read_nifti(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.offset == 344);
        CHECK(e.field == "magic");
    }

    // shorter than the minimal header+offset
    {
        std::ofstream out(path, std::ios::binary);
        std::vector<char> junk(100, 7);
        out.write(junk.data(), 100);
    }
    try {
        read_nifti(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.field == "header");
    }

    // truncated payload
    write_nifti(path, v);
    fs::resize_file(path, 352 + 8 * 8 * 2 * 4 - 10);
    try {
        read_nifti(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.field == "data");
    }

    // wrong rank
    write_nifti(path, v);
    const std::int16_t dim0 = 4;
    patch_file(path, 40, &dim0, 2);
    CHECK_THROWS_AS(read_nifti(path), ParseError);
}

TEST_CASE("raw volume round trip and validation") {
    TempDir tmp("hunet_raw_test");
    Rng rng(205);
    Volume v = make_volume(16, 16, 3);
    v.seed = 12345;
    for (auto& f : v.data) f = static_cast<float>(rng.normal());
    const std::string base = (tmp.path / "vol").string();
    write_raw(base, v);
    Volume r = read_raw(base);
    CHECK(r.nx == 16);
    CHECK(r.seed.has_value());
    CHECK(*r.seed == 12345);
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);

    // via the generic dispatcher
    Volume g = read_volume(base + ".f32");
    CHECK(std::memcmp(g.data.data(), v.data.data(), v.data.size() * 4) == 0);

    // payload size mismatch
    fs::resize_file(base + ".f32", 16 * 16 * 3 * 4 - 4);
    CHECK_THROWS_AS(read_raw(base), ParseError);
    CHECK_THROWS_AS(read_raw((tmp.path / "missing").string()), IoError);
}

TEST_CASE("dataset writing, loading, and exact replay") {
    TempDir tmp("hunet_dataset_test");
    const std::string d1 = (tmp.path / "a").string();
    const std::string d2 = (tmp.path / "b").string();
    write_dataset(d1, 42, 3, 32);
    write_dataset(d2, 42, 3, 32);

    // identical bytes for every file
    for (const auto& entry : fs::directory_iterator(d1)) {
        const auto name = entry.path().filename();
        CHECK(file_bytes(entry.path()) == file_bytes(fs::path(d2) / name));
    }

    auto items = load_dataset(d1);
    REQUIRE(items.size() == 3);
    CHECK(items[0].id == "phantom_0000");

    // loaded content equals the generator output after f32 rounding
    auto fresh = make_dataset(42, 3, 32);
    for (std::size_t i = 0; i < items.size(); ++i) {
        REQUIRE(items[i].seed == fresh[i].seed);
        for (std::size_t p = 0; p < items[i].phantom.clean.size(); ++p) {
            CHECK(items[i].phantom.clean[p] == static_cast<double>(static_cast<float>(fresh[i].phantom.clean[p])));
            CHECK(items[i].phantom.tissue_mask[p] == fresh[i].phantom.tissue_mask[p]);
        }
    }

    CHECK_THROWS_AS(load_dataset((tmp.path / "nope").string()), IoError);
    CHECK_THROWS_AS(make_dataset(1, 0, 32), ContractError);
}
