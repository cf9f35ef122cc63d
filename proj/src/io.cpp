#include "dare/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "dare I/O assumes a little-endian host");

namespace dare {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr std::int32_t kNiftiHeaderSize = 348;
constexpr std::int32_t kNifti2HeaderSize = 540;
constexpr std::size_t kNiftiVoxOffset = 352;

enum NiftiType : std::int16_t { kUint8 = 2, kInt16 = 4, kFloat32 = 16 };

std::vector<char> slurp(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(IoErrc::NotFound, "cannot open " + path.string());
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spill(const fs::path &path, const void *data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrc::WriteFailed, "cannot write " + path.string());
    }
    out.write(static_cast<const char *>(data), static_cast<std::streamsize>(bytes));
    if (!out) {
        throw IoError(IoErrc::WriteFailed, "short write to " + path.string());
    }
}

template <class T>
T get(const std::vector<char> &buf, std::size_t offset) {
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return v;
}

template <class T>
void put(std::vector<char> &buf, std::size_t offset, T v) {
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

bool has_suffix(const fs::path &p, const std::string &suffix) {
    const std::string s = p.string();
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

enum class Format { Nifti, Tensor };

Format detect(const fs::path &path) {
    if (has_suffix(path, ".nii.gz")) {
        throw IoError(IoErrc::UnsupportedVariant, "compressed NIfTI (.nii.gz) is not supported; decompress " + path.string());
    }
    if (has_suffix(path, ".nii")) return Format::Nifti;
    if (has_suffix(path, ".bin")) return Format::Tensor;
    throw IoError(IoErrc::UnsupportedVariant, "unknown file extension: " + path.string());
}

// ---- NIfTI-1 ----

struct NiftiImage {
    Dims dims;
    Spacing spacing;
    std::vector<double> values; // slope/intercept applied
};

NiftiImage read_nifti(const fs::path &path) {
    const std::vector<char> buf = slurp(path);
    if (buf.size() < static_cast<std::size_t>(kNiftiHeaderSize)) {
        throw IoError(IoErrc::Truncated, "truncated NIfTI header: " + path.string());
    }
    const std::int32_t hdr = get<std::int32_t>(buf, 0);
    if (hdr != kNiftiHeaderSize) {
        if (hdr == kNifti2HeaderSize) {
            throw IoError(IoErrc::UnsupportedVariant, "NIfTI-2 is not supported: " + path.string());
        }
        if (__builtin_bswap32(static_cast<std::uint32_t>(hdr)) == static_cast<std::uint32_t>(kNiftiHeaderSize)) {
            throw IoError(IoErrc::UnsupportedVariant, "big-endian NIfTI is not supported: " + path.string());
        }
        throw IoError(IoErrc::BadHeader, "bad NIfTI sizeof_hdr in " + path.string());
    }
    const char *magic = buf.data() + 344;
    if (std::memcmp(magic, "ni1\0", 4) == 0) {
        throw IoError(IoErrc::UnsupportedVariant, "unsupported NIfTI variant (detached .hdr/.img): " + path.string());
    }
    if (std::memcmp(magic, "n+1\0", 4) != 0) {
        throw IoError(IoErrc::BadMagic, "bad NIfTI magic in " + path.string());
    }
    const std::int16_t ndim = get<std::int16_t>(buf, 40);
    if (ndim != 3) {
        throw IoError(IoErrc::BadHeader, "only 3D NIfTI volumes are supported (dim[0] = " + std::to_string(ndim) + ")");
    }
    NiftiImage img;
    img.dims = {get<std::int16_t>(buf, 42), get<std::int16_t>(buf, 44), get<std::int16_t>(buf, 46)};
    if (img.dims.nx < 1 || img.dims.ny < 1 || img.dims.nz < 1) {
        throw IoError(IoErrc::BadHeader, "non-positive NIfTI dims in " + path.string());
    }
    for (int a = 0; a < 3; ++a) {
        const double s = std::abs(static_cast<double>(get<float>(buf, 76 + 4 * static_cast<std::size_t>(a + 1))));
        img.spacing[static_cast<std::size_t>(a)] = (s > 0.0 && std::isfinite(s)) ? s : 1.0;
    }
    const std::int16_t datatype = get<std::int16_t>(buf, 70);
    std::size_t elem = 0;
    switch (datatype) {
    case kUint8: elem = 1; break;
    case kInt16: elem = 2; break;
    case kFloat32: elem = 4; break;
    default:
        throw IoError(IoErrc::UnsupportedDatatype, "unsupported NIfTI datatype code " + std::to_string(datatype));
    }
    const float vox_offset = get<float>(buf, 108);
    if (!(vox_offset >= static_cast<float>(kNiftiHeaderSize))) {
        throw IoError(IoErrc::BadHeader, "bad vox_offset in " + path.string());
    }
    const std::size_t offset = static_cast<std::size_t>(vox_offset);
    const std::size_t n = img.dims.voxels();
    if (buf.size() < offset + n * elem) {
        throw IoError(IoErrc::Truncated, "truncated NIfTI payload: " + path.string());
    }
    const float slope = get<float>(buf, 112);
    const float inter = get<float>(buf, 116);
    const bool scale = slope != 0.0f && std::isfinite(slope);
    img.values.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t at = offset + v * elem;
        double raw = 0.0;
        switch (datatype) {
        case kUint8: raw = static_cast<double>(get<std::uint8_t>(buf, at)); break;
        case kInt16: raw = static_cast<double>(get<std::int16_t>(buf, at)); break;
        default: raw = static_cast<double>(get<float>(buf, at)); break;
        }
        img.values[v] = scale ? static_cast<double>(slope) * raw + static_cast<double>(inter) : raw;
    }
    return img;
}

std::vector<char> nifti_header(const Dims &dims, const Spacing &spacing, std::int16_t datatype, std::int16_t bitpix) {
    std::vector<char> buf(kNiftiVoxOffset, 0);
    put<std::int32_t>(buf, 0, kNiftiHeaderSize);
    put<std::int16_t>(buf, 40, 3);
    put<std::int16_t>(buf, 42, static_cast<std::int16_t>(dims.nx));
    put<std::int16_t>(buf, 44, static_cast<std::int16_t>(dims.ny));
    put<std::int16_t>(buf, 46, static_cast<std::int16_t>(dims.nz));
    for (std::size_t a = 4; a < 8; ++a) {
        put<std::int16_t>(buf, 40 + 2 * a, 1);
    }
    put<std::int16_t>(buf, 70, datatype);
    put<std::int16_t>(buf, 72, bitpix);
    put<float>(buf, 76, 1.0f); // qfac
    for (std::size_t a = 0; a < 3; ++a) {
        put<float>(buf, 80 + 4 * a, static_cast<float>(spacing[a]));
    }
    put<float>(buf, 108, static_cast<float>(kNiftiVoxOffset));
    put<float>(buf, 112, 0.0f);
    put<float>(buf, 116, 0.0f);
    buf[123] = 2; // xyzt_units: mm
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    return buf;
}

void check_nifti_dims(const Dims &d) {
    if (d.nx > 32767 || d.ny > 32767 || d.nz > 32767) {
        throw IoError(IoErrc::WriteFailed, "dims exceed NIfTI-1 limits");
    }
}

// ---- TensorFile ----

struct TensorHeader {
    Dims dims;
    Spacing spacing{1.0, 1.0, 1.0};
    std::string dtype;
    int components = 1;
};

TensorHeader read_tensor_header(const fs::path &payload) {
    const fs::path side = sidecar_path(payload);
    const std::vector<char> text = slurp(side);
    json j;
    try {
        j = json::parse(text.begin(), text.end());
        TensorHeader h;
        const auto dims = j.at("dims").get<std::vector<int>>();
        const auto spacing = j.at("spacing").get<std::vector<double>>();
        if (dims.size() != 3 || spacing.size() != 3) {
            throw IoError(IoErrc::BadHeader, "sidecar dims/spacing must have 3 entries: " + side.string());
        }
        h.dims = {dims[0], dims[1], dims[2]};
        h.spacing = {spacing[0], spacing[1], spacing[2]};
        h.dtype = j.at("dtype").get<std::string>();
        h.components = j.at("components").get<int>();
        if (j.at("byte_order").get<std::string>() != "little-endian") {
            throw IoError(IoErrc::UnsupportedVariant, "only little-endian payloads are supported: " + side.string());
        }
        if (j.at("layout").get<std::string>() != "x-fastest row-major") {
            throw IoError(IoErrc::UnsupportedVariant, "unsupported layout in " + side.string());
        }
        if (h.dtype != "f32" && h.dtype != "i32") {
            throw IoError(IoErrc::UnsupportedDatatype, "unsupported dtype '" + h.dtype + "' in " + side.string());
        }
        if (h.components != 1 && h.components != 3) {
            throw IoError(IoErrc::BadHeader, "components must be 1 or 3 in " + side.string());
        }
        return h;
    } catch (const json::exception &e) {
        throw IoError(IoErrc::BadHeader, "malformed sidecar " + side.string() + ": " + e.what());
    }
}

void write_tensor(const fs::path &payload, const Dims &dims, const Spacing &spacing, const std::string &dtype, int components,
                  const void *data, std::size_t bytes) {
    json j;
    j["dims"] = {dims.nx, dims.ny, dims.nz};
    j["spacing"] = {spacing[0], spacing[1], spacing[2]};
    j["dtype"] = dtype;
    j["components"] = components;
    j["byte_order"] = "little-endian";
    j["layout"] = "x-fastest row-major";
    const std::string text = j.dump(2) + "\n";
    spill(payload, data, bytes);
    spill(sidecar_path(payload), text.data(), text.size());
}

std::vector<char> read_tensor_payload(const fs::path &payload, const TensorHeader &h) {
    std::vector<char> buf = slurp(payload);
    const std::size_t expected = h.dims.voxels() * static_cast<std::size_t>(h.components) * 4;
    if (buf.size() < expected) {
        throw IoError(IoErrc::Truncated, "truncated payload " + payload.string());
    }
    if (buf.size() > expected) {
        throw IoError(IoErrc::ShapeMismatch, "payload size does not match sidecar dims: " + payload.string());
    }
    return buf;
}

std::vector<double> tensor_values(const std::vector<char> &buf, const TensorHeader &h) {
    const std::size_t n = buf.size() / 4;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = h.dtype == "f32" ? static_cast<double>(get<float>(buf, 4 * i)) : static_cast<double>(get<std::int32_t>(buf, 4 * i));
    }
    return out;
}

void require_components(const TensorHeader &h, int want, const fs::path &path) {
    if (h.components != want) {
        throw IoError(IoErrc::ShapeMismatch, "expected " + std::to_string(want) + " component(s) in " + path.string());
    }
}

Dims checked_dims(const Dims &d, const fs::path &path) {
    if (d.nx < 2 || d.ny < 2 || d.nz < 2) {
        throw IoError(IoErrc::BadHeader, "dims too small in " + path.string());
    }
    return d;
}

} // namespace

fs::path sidecar_path(const fs::path &payload) {
    fs::path p = payload;
    p.replace_extension(".json");
    return p;
}

Volume read_volume(const fs::path &path) {
    if (detect(path) == Format::Nifti) {
        NiftiImage img = read_nifti(path);
        return Volume(checked_dims(img.dims, path), img.spacing, std::move(img.values));
    }
    const TensorHeader h = read_tensor_header(path);
    require_components(h, 1, path);
    const std::vector<char> buf = read_tensor_payload(path, h);
    return Volume(checked_dims(h.dims, path), h.spacing, tensor_values(buf, h));
}

void write_volume(const fs::path &path, const Volume &v) {
    std::vector<float> data(v.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(v[i]);
    }
    if (detect(path) == Format::Nifti) {
        check_nifti_dims(v.dims());
        std::vector<char> buf = nifti_header(v.dims(), v.spacing(), kFloat32, 32);
        const std::size_t head = buf.size();
        buf.resize(head + data.size() * sizeof(float));
        std::memcpy(buf.data() + head, data.data(), data.size() * sizeof(float));
        spill(path, buf.data(), buf.size());
        return;
    }
    write_tensor(path, v.dims(), v.spacing(), "f32", 1, data.data(), data.size() * sizeof(float));
}

LabelMap read_labels(const fs::path &path) {
    std::vector<double> values;
    Dims dims;
    if (detect(path) == Format::Nifti) {
        NiftiImage img = read_nifti(path);
        dims = img.dims;
        values = std::move(img.values);
    } else {
        const TensorHeader h = read_tensor_header(path);
        require_components(h, 1, path);
        dims = h.dims;
        values = tensor_values(read_tensor_payload(path, h), h);
    }
    std::vector<std::int32_t> labels(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double r = std::round(values[i]);
        if (r != values[i] || r < 0.0 || r > 2147483647.0) {
            throw IoError(IoErrc::BadHeader, "label map holds a non-integer or negative value: " + path.string());
        }
        labels[i] = static_cast<std::int32_t>(r);
    }
    return LabelMap(checked_dims(dims, path), std::move(labels));
}

void write_labels(const fs::path &path, const LabelMap &labels, const Spacing &spacing) {
    if (detect(path) == Format::Nifti) {
        check_nifti_dims(labels.dims());
        std::vector<char> buf = nifti_header(labels.dims(), spacing, kInt16, 16);
        const std::size_t head = buf.size();
        buf.resize(head + labels.labels().size() * sizeof(std::int16_t));
        for (std::size_t i = 0; i < labels.labels().size(); ++i) {
            if (labels[i] > 32767) {
                throw IoError(IoErrc::WriteFailed, "label ID exceeds int16 range for NIfTI output");
            }
            put<std::int16_t>(buf, head + 2 * i, static_cast<std::int16_t>(labels[i]));
        }
        spill(path, buf.data(), buf.size());
        return;
    }
    write_tensor(path, labels.dims(), spacing, "i32", 1, labels.labels().data(), labels.labels().size() * sizeof(std::int32_t));
}

DisplacementField read_displacement(const fs::path &path, Spacing *spacing) {
    if (detect(path) != Format::Tensor) {
        throw IoError(IoErrc::UnsupportedVariant, "displacement fields are stored as .bin TensorFiles: " + path.string());
    }
    const TensorHeader h = read_tensor_header(path);
    require_components(h, 3, path);
    if (h.dtype != "f32") {
        throw IoError(IoErrc::UnsupportedDatatype, "displacement payload must be f32: " + path.string());
    }
    const std::vector<double> flat = tensor_values(read_tensor_payload(path, h), h);
    std::vector<Vec3> vec(flat.size() / 3);
    for (std::size_t v = 0; v < vec.size(); ++v) {
        vec[v] = {flat[3 * v], flat[3 * v + 1], flat[3 * v + 2]};
    }
    if (spacing != nullptr) {
        *spacing = h.spacing;
    }
    return DisplacementField(checked_dims(h.dims, path), std::move(vec));
}

void write_displacement(const fs::path &path, const DisplacementField &u, const Spacing &spacing) {
    if (detect(path) != Format::Tensor) {
        throw IoError(IoErrc::UnsupportedVariant, "displacement fields are stored as .bin TensorFiles: " + path.string());
    }
    std::vector<float> data(3 * u.size());
    for (std::size_t v = 0; v < u.size(); ++v) {
        for (std::size_t c = 0; c < 3; ++c) {
            data[3 * v + c] = static_cast<float>(u[v][c]);
        }
    }
    write_tensor(path, u.dims(), spacing, "f32", 3, data.data(), data.size() * sizeof(float));
}

} // namespace dare
