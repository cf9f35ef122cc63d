#pragma once

// Volume, label and displacement storage.
//
// Two formats, chosen by extension:
//   .nii  uncompressed single-file NIfTI-1, little-endian. Read: float32,
//         int16 and uint8 with scl_slope/scl_inter applied when slope != 0.
//         Write: float32 volumes, int16 labels. Orientation is ignored.
//   .bin  raw little-endian payload with a JSON sidecar of the same stem
//         (x.bin -> x.json):
//           {"dims":[nx,ny,nz], "spacing":[sx,sy,sz], "dtype":"f32"|"i32",
//            "components":1|3, "byte_order":"little-endian",
//            "layout":"x-fastest row-major"}
//         Vector payloads interleave the components per voxel.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "dare/core_types.hpp"

namespace dare {

enum class IoErrc {
    NotFound,
    BadMagic,
    UnsupportedVariant,
    UnsupportedDatatype,
    Truncated,
    BadHeader,
    ShapeMismatch,
    WriteFailed,
};

class IoError : public std::runtime_error {
public:
    IoError(IoErrc code, const std::string &what) : std::runtime_error(what), code_(code) {}
    IoErrc code() const { return code_; }

private:
    IoErrc code_;
};

Volume read_volume(const std::filesystem::path &path);
void write_volume(const std::filesystem::path &path, const Volume &v);

LabelMap read_labels(const std::filesystem::path &path);
void write_labels(const std::filesystem::path &path, const LabelMap &labels, const Spacing &spacing = {1.0, 1.0, 1.0});

// Stored as f32; in-memory doubles are rounded on write. The sidecar spacing
// is copied to *spacing when given.
DisplacementField read_displacement(const std::filesystem::path &path, Spacing *spacing = nullptr);
void write_displacement(const std::filesystem::path &path, const DisplacementField &u, const Spacing &spacing = {1.0, 1.0, 1.0});

// x.bin -> x.json
std::filesystem::path sidecar_path(const std::filesystem::path &payload);

} // namespace dare
