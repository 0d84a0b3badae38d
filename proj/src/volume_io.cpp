#include "hunet/volume_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hunet/common.hpp"

static_assert(std::endian::native == std::endian::little, "volume formats assume a little-endian host");

namespace hunet {

std::vector<double> Volume::slice(int z) const {
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
    std::vector<double> out(plane);
    for (std::int64_t i = 0; i < plane; ++i) out[i] = data[z * plane + i];
    return out;
}

void Volume::set_slice(int z, const std::vector<double>& s) {
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
    if (static_cast<std::int64_t>(s.size()) != plane) throw DimensionError("set_slice: size mismatch");
    for (std::int64_t i = 0; i < plane; ++i) data[z * plane + i] = static_cast<float>(s[i]);
}

Volume make_volume(int nx, int ny, int nz) {
    if (nx < 1 || ny < 1 || nz < 1) throw DimensionError("volume extents must be positive");
    Volume v;
    v.nx = nx;
    v.ny = ny;
    v.nz = nz;
    v.data.assign(static_cast<std::size_t>(nx) * ny * nz, 0.0f);
    return v;
}

namespace {

constexpr std::int64_t kHeaderSize = 348;
constexpr std::int64_t kVoxOffset = 352;
constexpr std::int16_t kDtFloat32 = 16;

struct Header {
    // the handful of fields this subset reads/writes, at their byte offsets
    std::int32_t sizeof_hdr;  // 0
    std::int16_t dim[8];      // 40
    std::int16_t datatype;    // 70
    std::int16_t bitpix;      // 72
    float pixdim[8];          // 76
    float vox_offset;         // 108
    char magic[4];            // 344
};

} // namespace

Volume read_nifti(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open volume: " + path);
    const std::int64_t file_size = in.tellg();
    if (file_size < kVoxOffset)
        throw ParseError("file too short for a NIfTI-1 header (" + std::to_string(file_size) + " bytes)",
                         static_cast<std::uint64_t>(file_size), "header");
    in.seekg(0);
    std::vector<char> hdr(kHeaderSize);
    in.read(hdr.data(), kHeaderSize);

    auto rd_i32 = [&](std::int64_t off) {
        std::int32_t v;
        std::memcpy(&v, hdr.data() + off, 4);
        return v;
    };
    auto rd_i16 = [&](std::int64_t off) {
        std::int16_t v;
        std::memcpy(&v, hdr.data() + off, 2);
        return v;
    };
    auto rd_f32 = [&](std::int64_t off) {
        float v;
        std::memcpy(&v, hdr.data() + off, 4);
        return v;
    };

    if (rd_i32(0) != kHeaderSize)
        throw ParseError("sizeof_hdr is " + std::to_string(rd_i32(0)) + ", expected 348", 0, "sizeof_hdr");
    if (std::memcmp(hdr.data() + 344, "n+1\0", 4) != 0)
        throw ParseError("bad magic (expected 'n+1')", 344, "magic");
    const std::int16_t ndim = rd_i16(40);
    if (ndim != 3)
        throw ParseError("dim[0] is " + std::to_string(ndim) + ", only 3-D volumes are supported", 40, "dim[0]");
    const std::int16_t datatype = rd_i16(70);
    if (datatype != kDtFloat32)
        throw ParseError("unsupported datatype code " + std::to_string(datatype) + " (only 16/float32)",
                         70, "datatype");
    if (rd_i16(72) != 32) throw ParseError("bitpix must be 32 for float32 data", 72, "bitpix");

    Volume v;
    v.nx = rd_i16(42);
    v.ny = rd_i16(44);
    v.nz = rd_i16(46);
    if (v.nx < 1 || v.ny < 1 || v.nz < 1)
        throw ParseError("non-positive dimensions", 42, "dim[1..3]");

    const std::int64_t vox = static_cast<std::int64_t>(rd_f32(108));
    const std::int64_t data_off = vox >= kVoxOffset ? vox : kVoxOffset;
    const std::int64_t count = static_cast<std::int64_t>(v.nx) * v.ny * v.nz;
    if (file_size < data_off + count * 4)
        throw ParseError("payload truncated: need " + std::to_string(count * 4) + " bytes at offset " +
                             std::to_string(data_off),
                         static_cast<std::uint64_t>(file_size), "data");

    v.data.resize(count);
    in.seekg(data_off);
    in.read(reinterpret_cast<char*>(v.data.data()), count * 4);
    if (!in) throw ParseError("payload read failed", static_cast<std::uint64_t>(data_off), "data");
    return v;
}

void write_nifti(const std::string& path, const Volume& v) {
    std::vector<char> hdr(kVoxOffset, 0);
    auto wr_i32 = [&](std::int64_t off, std::int32_t val) { std::memcpy(hdr.data() + off, &val, 4); };
    auto wr_i16 = [&](std::int64_t off, std::int16_t val) { std::memcpy(hdr.data() + off, &val, 2); };
    auto wr_f32 = [&](std::int64_t off, float val) { std::memcpy(hdr.data() + off, &val, 4); };

    wr_i32(0, static_cast<std::int32_t>(kHeaderSize));
    wr_i16(40, 3);
    wr_i16(42, static_cast<std::int16_t>(v.nx));
    wr_i16(44, static_cast<std::int16_t>(v.ny));
    wr_i16(46, static_cast<std::int16_t>(v.nz));
    for (int i = 4; i < 8; ++i) wr_i16(40 + 2 * i, 1);
    wr_i16(70, kDtFloat32);
    wr_i16(72, 32);
    for (int i = 0; i < 4; ++i) wr_f32(76 + 4 * i, 1.0f);
    wr_f32(108, static_cast<float>(kVoxOffset));
    std::memcpy(hdr.data() + 344, "n+1\0", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.data.size() * 4));
    if (!out) throw IoError("write failed: " + path);
}

Volume read_raw(const std::string& base) {
    const std::string meta_path = base + ".json";
    std::ifstream meta(meta_path);
    if (!meta) throw IoError("cannot open sidecar: " + meta_path);
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("sidecar is not valid JSON: ") + e.what(), 0, "sidecar");
    }
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
        throw ParseError("sidecar missing 3-element dims", 0, "dims");
    if (j.value("dtype", "") != "f32le")
        throw ParseError("unsupported dtype '" + j.value("dtype", "") + "' (only f32le)", 0, "dtype");

    Volume v;
    v.nx = j["dims"][0].get<int>();
    v.ny = j["dims"][1].get<int>();
    v.nz = j["dims"][2].get<int>();
    if (j.contains("seed")) v.seed = j["seed"].get<std::uint64_t>();
    if (v.nx < 1 || v.ny < 1 || v.nz < 1) throw ParseError("non-positive dims in sidecar", 0, "dims");

    const std::string data_path = base + ".f32";
    std::ifstream in(data_path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open payload: " + data_path);
    const std::int64_t file_size = in.tellg();
    const std::int64_t count = static_cast<std::int64_t>(v.nx) * v.ny * v.nz;
    if (file_size != count * 4)
        throw ParseError("payload is " + std::to_string(file_size) + " bytes, expected " +
                             std::to_string(count * 4),
                         static_cast<std::uint64_t>(file_size), "data");
    v.data.resize(count);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(v.data.data()), count * 4);
    if (!in) throw ParseError("payload read failed", 0, "data");
    return v;
}

void write_raw(const std::string& base, const Volume& v) {
    nlohmann::json j;
    j["dims"] = {v.nx, v.ny, v.nz};
    j["dtype"] = "f32le";
    if (v.seed) j["seed"] = *v.seed;
    std::ofstream meta(base + ".json");
    if (!meta) throw IoError("cannot open for writing: " + base + ".json");
    meta << j.dump(2) << "\n";

    std::ofstream out(base + ".f32", std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + base + ".f32");
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.data.size() * 4));
    if (!out) throw IoError("write failed: " + base + ".f32");
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

Volume read_volume(const std::string& path) {
    if (ends_with(path, ".nii")) return read_nifti(path);
    if (ends_with(path, ".f32")) return read_raw(path.substr(0, path.size() - 4));
    if (std::filesystem::exists(path + ".f32")) return read_raw(path);
    throw IoError("unrecognized volume path (expect .nii or .f32): " + path);
}

void write_volume(const std::string& path, const Volume& v) {
    if (ends_with(path, ".nii")) {
        write_nifti(path, v);
        return;
    }
    if (ends_with(path, ".f32")) {
        write_raw(path.substr(0, path.size() - 4), v);
        return;
    }
    throw IoError("unrecognized volume path (expect .nii or .f32): " + path);
}

} // namespace hunet
