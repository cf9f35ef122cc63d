#include "doctest.h"

#include <cstring>
#include <fstream>
#include <functional>
#include <unistd.h>

#include "dare/io.hpp"
#include "support/oracles.hpp"

using namespace dare;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("dare_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string &name) const { return path / name; }
};

// Values exactly representable in f32 so round trips are bit exact.
Volume float_volume(const Dims &d, oracle::Rng &rng, Spacing sp = {1, 1, 1}) {
    std::vector<double> data(d.voxels());
    for (double &x : data) x = static_cast<double>(static_cast<float>(rng.uniform(-3, 3)));
    return Volume(d, sp, std::move(data));
}

template <class T>
void put(std::vector<char> &buf, std::size_t off, T v) {
    std::memcpy(buf.data() + off, &v, sizeof(T));
}

// Minimal single-file NIfTI-1 written byte by byte, independent of the writer.
std::vector<char> handmade_nifti(int n, std::int16_t datatype, std::int16_t bitpix, float slope, float inter) {
    std::vector<char> buf(352, 0);
    put<std::int32_t>(buf, 0, 348);
    put<std::int16_t>(buf, 40, 3);
    for (int a = 0; a < 3; ++a) put<std::int16_t>(buf, 42 + 2 * static_cast<std::size_t>(a), static_cast<std::int16_t>(n));
    put<std::int16_t>(buf, 70, datatype);
    put<std::int16_t>(buf, 72, bitpix);
    for (int a = 0; a < 3; ++a) put<float>(buf, 80 + 4 * static_cast<std::size_t>(a), 1.5f);
    put<float>(buf, 108, 352.0f);
    put<float>(buf, 112, slope);
    put<float>(buf, 116, inter);
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    return buf;
}

void dump(const fs::path &p, const std::vector<char> &buf) {
    std::ofstream out(p, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<char> bytes_of(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

IoErrc code_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const IoError &e) {
        return e.code();
    }
    FAIL("no IoError thrown");
    return IoErrc::WriteFailed;
}

} // namespace

TEST_CASE("volume round trips are bit exact in both formats") {
    TempDir tmp;
    oracle::Rng rng(1);
    for (const char *ext : {".bin", ".nii"}) {
        const Volume v = float_volume({5, 4, 3}, rng, {0.5, 1.25, 2.0});
        const fs::path p = tmp / (std::string("vol") + ext);
        write_volume(p, v);
        const Volume back = read_volume(p);
        CHECK(back.dims() == v.dims());
        CHECK(back.spacing() == v.spacing());
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == v[i]);
    }
    CHECK(fs::exists(tmp / "vol.json"));
}

TEST_CASE("label round trips are exact in both formats") {
    TempDir tmp;
    oracle::Rng rng(2);
    Dims d{4, 6, 3};
    std::vector<std::int32_t> raw(d.voxels());
    for (auto &x : raw) x = rng.integer(0, 300);
    const LabelMap l(d, raw);
    for (const char *ext : {".bin", ".nii"}) {
        const fs::path p = tmp / (std::string("lab") + ext);
        write_labels(p, l);
        CHECK(read_labels(p) == l);
    }
    // NIfTI labels are int16
    CHECK_THROWS_AS(write_labels(tmp / "big.nii", LabelMap({2, 2, 2}, std::vector<std::int32_t>(8, 40000))), IoError);
}

TEST_CASE("displacement round trip and f32 rounding") {
    TempDir tmp;
    oracle::Rng rng(3);
    Dims d{3, 4, 5};
    DisplacementField u = oracle::random_field(d, 2.0, rng);
    for (Vec3 &v : u.vectors())
        for (double &x : v) x = static_cast<double>(static_cast<float>(x));
    u[0] = {0.1, -0.1, 0.0};
    const fs::path p = tmp / "u.bin";
    write_displacement(p, u, {2, 2, 3});
    Spacing sp{};
    const DisplacementField back = read_displacement(p, &sp);
    CHECK(sp == Spacing{2, 2, 3});
    CHECK(back[0][0] == static_cast<double>(0.1f));
    CHECK(back[0][1] == static_cast<double>(-0.1f));
    for (std::size_t v = 1; v < u.size(); ++v) CHECK(back[v] == u[v]);
    CHECK(read_displacement(p).dims() == d);
    CHECK(bytes_of(p).size() == d.voxels() * 12);
    CHECK(code_of([&] { write_displacement(tmp / "u.nii", u); }) == IoErrc::UnsupportedVariant);
}

TEST_CASE("NIfTI scaling is applied on read") {
    TempDir tmp;
    std::vector<char> buf = handmade_nifti(8, 16, 32, 2.0f, 1.0f);
    const std::size_t head = buf.size();
    buf.resize(head + 512 * 4);
    for (std::size_t i = 0; i < 512; ++i) put<float>(buf, head + 4 * i, i == 0 ? 0.5f : 0.0f);
    dump(tmp / "s.nii", buf);
    const Volume v = read_volume(tmp / "s.nii");
    CHECK(v.dims() == Dims{8, 8, 8});
    CHECK(v.spacing() == Spacing{1.5, 1.5, 1.5});
    CHECK(v[0] == 2.0);
    CHECK(v[1] == 1.0);

    // slope 0 leaves raw values untouched
    buf = handmade_nifti(2, 4, 16, 0.0f, 7.0f);
    buf.resize(352 + 16);
    put<std::int16_t>(buf, 352, -5);
    dump(tmp / "i16.nii", buf);
    CHECK(read_volume(tmp / "i16.nii")[0] == -5.0);

    buf = handmade_nifti(2, 2, 8, 0.0f, 0.0f);
    buf.resize(352 + 8);
    buf[352 + 7] = static_cast<char>(200);
    dump(tmp / "u8.nii", buf);
    CHECK(read_labels(tmp / "u8.nii")[7] == 200);
}

TEST_CASE("malformed or unsupported files are rejected with a code") {
    TempDir tmp;
    const auto good = [] {
        std::vector<char> b = handmade_nifti(2, 16, 32, 0.0f, 0.0f);
        b.resize(352 + 32);
        return b;
    };
    const auto read = [&](const std::string &name, const std::vector<char> &buf) {
        dump(tmp / name, buf);
        return code_of([&] { read_volume(tmp / name); });
    };
    std::vector<char> b = good();
    std::memcpy(b.data() + 344, "ni1\0", 4);
    CHECK(read("pair.nii", b) == IoErrc::UnsupportedVariant);
    try {
        read_volume(tmp / "pair.nii");
    } catch (const IoError &e) {
        CHECK(std::string(e.what()).find("unsupported NIfTI variant") != std::string::npos);
    }
    b = good();
    std::memcpy(b.data() + 344, "xyz\0", 4);
    CHECK(read("magic.nii", b) == IoErrc::BadMagic);
    b = good();
    put<std::int16_t>(b, 70, 64);
    CHECK(read("f64.nii", b) == IoErrc::UnsupportedDatatype);
    b = good();
    b.resize(352 + 31);
    CHECK(read("short.nii", b) == IoErrc::Truncated);
    CHECK(read("tiny.nii", std::vector<char>(100, 0)) == IoErrc::Truncated);
    b = good();
    put<std::int32_t>(b, 0, static_cast<std::int32_t>(__builtin_bswap32(348)));
    CHECK(read("be.nii", b) == IoErrc::UnsupportedVariant);
    b = good();
    put<std::int32_t>(b, 0, 540);
    CHECK(read("n2.nii", b) == IoErrc::UnsupportedVariant);
    CHECK(read("c.nii.gz", good()) == IoErrc::UnsupportedVariant);
    CHECK(read("x.raw", good()) == IoErrc::UnsupportedVariant);
    CHECK(code_of([&] { read_volume(tmp / "absent.nii"); }) == IoErrc::NotFound);
}

TEST_CASE("a well-formed handmade header is accepted") {
    TempDir tmp;
    dump(tmp / "ok.nii", [] {
        std::vector<char> b = handmade_nifti(2, 16, 32, 0.0f, 0.0f);
        b.resize(352 + 32);
        return b;
    }());
    CHECK_NOTHROW(read_volume(tmp / "ok.nii"));
}

TEST_CASE("TensorFile sidecar checks") {
    TempDir tmp;
    oracle::Rng rng(4);
    const Volume v = float_volume({3, 3, 3}, rng);
    const fs::path p = tmp / "v.bin";
    write_volume(p, v);

    SUBCASE("payload longer than the sidecar dims") {
        std::vector<char> b = bytes_of(p);
        b.resize(b.size() + 4);
        dump(p, b);
        CHECK(code_of([&] { read_volume(p); }) == IoErrc::ShapeMismatch);
    }
    SUBCASE("payload shorter than the sidecar dims") {
        std::vector<char> b = bytes_of(p);
        b.resize(b.size() - 4);
        dump(p, b);
        CHECK(code_of([&] { read_volume(p); }) == IoErrc::Truncated);
    }
    SUBCASE("missing sidecar") {
        fs::remove(sidecar_path(p));
        CHECK(code_of([&] { read_volume(p); }) == IoErrc::NotFound);
    }
    SUBCASE("malformed sidecar") {
        dump(sidecar_path(p), std::vector<char>{'{', 'x'});
        CHECK(code_of([&] { read_volume(p); }) == IoErrc::BadHeader);
    }
    SUBCASE("volume read from a vector payload") {
        write_displacement(tmp / "u.bin", identity_displacement({3, 3, 3}));
        CHECK(code_of([&] { read_volume(tmp / "u.bin"); }) == IoErrc::ShapeMismatch);
        CHECK(code_of([&] { read_displacement(p); }) == IoErrc::ShapeMismatch);
    }
    CHECK(sidecar_path("a/b.bin") == fs::path("a/b.json"));
}
