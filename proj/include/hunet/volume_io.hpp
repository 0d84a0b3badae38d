#pragma once

// Minimal volume I/O: a NIfTI-1 subset (little-endian, float32, 3D) and a
// raw f32 format with a JSON sidecar. Both round-trip bit-exactly.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hunet {

struct Volume {
    int nx = 0, ny = 0, nz = 0; // x fastest on disk and in memory
    std::vector<float> data;
    std::optional<std::uint64_t> seed; // carried by the raw sidecar when present

    std::vector<double> slice(int z) const;
    void set_slice(int z, const std::vector<double>& s);
};

Volume make_volume(int nx, int ny, int nz);

// NIfTI-1, single-file (.nii): 348-byte header + 4 padding bytes, datatype
// 16 (float32), dim[0] = 3. Anything else is rejected with a ParseError
// naming the offending offset and field.
Volume read_nifti(const std::string& path);
void write_nifti(const std::string& path, const Volume& v);

// Raw pair: {base}.f32 (payload) + {base}.json (dims, dtype, optional seed).
// `base` excludes the extension.
Volume read_raw(const std::string& base);
void write_raw(const std::string& base, const Volume& v);

// Dispatch by extension: .nii -> NIfTI, .f32 (or a bare sidecar base) -> raw.
Volume read_volume(const std::string& path);
void write_volume(const std::string& path, const Volume& v);

} // namespace hunet
