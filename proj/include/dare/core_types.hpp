#pragma once

// Grid containers shared by every module. All grids use one memory order:
// row-major with x fastest, i.e. index = i + nx * (j + ny * k).

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dare {

// Raised when two grids that must share a shape do not.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string &what = "shape mismatch") : std::invalid_argument(what) {}
};

struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t voxels() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(k));
    }
    int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }

    friend bool operator==(const Dims &, const Dims &) = default;
};

// Throws std::invalid_argument("dims too small") unless every axis has >= 2 samples.
void require_valid_dims(const Dims &dims);
void require_same_dims(const Dims &a, const Dims &b);

using Spacing = std::array<double, 3>;
using Vec3 = std::array<double, 3>;

// Dense 3x3 matrix, row-major: (r, c) -> m[3 * r + c].
struct Mat3 {
    std::array<double, 9> m{};

    double &operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }

    static Mat3 identity() {
        Mat3 out;
        out(0, 0) = out(1, 1) = out(2, 2) = 1.0;
        return out;
    }
    static Mat3 diagonal(double a, double b, double c) {
        Mat3 out;
        out(0, 0) = a;
        out(1, 1) = b;
        out(2, 2) = c;
        return out;
    }

    Mat3 transposed() const;
    double trace() const { return m[0] + m[4] + m[8]; }
    double frobenius_sq() const;
    double determinant() const;
    // Matrix of cofactors C with C(r, c) = d det / d M(r, c).
    Mat3 cofactor() const;

    Mat3 &operator+=(const Mat3 &o);
    Mat3 &operator*=(double s);
    friend Mat3 operator+(Mat3 a, const Mat3 &b) { return a += b; }
    friend Mat3 operator*(Mat3 a, double s) { return a *= s; }
    friend Mat3 operator*(double s, Mat3 a) { return a *= s; }
    friend bool operator==(const Mat3 &, const Mat3 &) = default;
};

class Volume {
public:
    Volume() = default;
    Volume(Dims dims, Spacing spacing, std::vector<double> data);
    // Zero-filled.
    Volume(Dims dims, Spacing spacing);

    const Dims &dims() const { return dims_; }
    const Spacing &spacing() const { return spacing_; }
    std::span<const double> data() const { return data_; }
    std::size_t size() const { return data_.size(); }

    double operator[](std::size_t idx) const { return data_[idx]; }
    double at(int i, int j, int k) const { return data_[dims_.index(i, j, k)]; }

    double min() const;
    double max() const;

private:
    Dims dims_{};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<double> data_;
};

class LabelMap {
public:
    LabelMap() = default;
    LabelMap(Dims dims, std::vector<std::int32_t> labels, std::map<std::int32_t, std::string> names = {});

    const Dims &dims() const { return dims_; }
    std::span<const std::int32_t> labels() const { return labels_; }
    const std::map<std::int32_t, std::string> &names() const { return names_; }

    std::int32_t operator[](std::size_t idx) const { return labels_[idx]; }
    std::int32_t at(int i, int j, int k) const { return labels_[dims_.index(i, j, k)]; }

    friend bool operator==(const LabelMap &a, const LabelMap &b) {
        return a.dims_ == b.dims_ && a.labels_ == b.labels_;
    }

private:
    Dims dims_{};
    std::vector<std::int32_t> labels_;
    std::map<std::int32_t, std::string> names_;
};

// Per-voxel displacement in voxel units along (x, y, z). The deformation is
// phi(x) = x + u(x); the identity grid is implicit.
class DisplacementField {
public:
    DisplacementField() = default;
    explicit DisplacementField(Dims dims);
    DisplacementField(Dims dims, std::vector<Vec3> vectors);

    const Dims &dims() const { return dims_; }
    std::span<const Vec3> vectors() const { return vectors_; }
    std::span<Vec3> vectors() { return vectors_; }
    std::size_t size() const { return vectors_.size(); }

    Vec3 &operator[](std::size_t idx) { return vectors_[idx]; }
    const Vec3 &operator[](std::size_t idx) const { return vectors_[idx]; }
    const Vec3 &at(int i, int j, int k) const { return vectors_[dims_.index(i, j, k)]; }

    // Single displacement component as a flat scalar array.
    std::vector<double> component(int c) const;
    bool all_finite() const;

    friend bool operator==(const DisplacementField &, const DisplacementField &) = default;

private:
    Dims dims_{};
    std::vector<Vec3> vectors_;
};

DisplacementField identity_displacement(const Dims &dims);

enum class TensorKind { Jacobian, Strain };

class TensorField {
public:
    TensorField() = default;
    TensorField(Dims dims, TensorKind kind, std::vector<Mat3> matrices);

    const Dims &dims() const { return dims_; }
    TensorKind kind() const { return kind_; }
    std::span<const Mat3> matrices() const { return matrices_; }
    const Mat3 &operator[](std::size_t idx) const { return matrices_[idx]; }
    const Mat3 &at(int i, int j, int k) const { return matrices_[dims_.index(i, j, k)]; }
    std::size_t size() const { return matrices_.size(); }

private:
    Dims dims_{};
    TensorKind kind_ = TensorKind::Jacobian;
    std::vector<Mat3> matrices_;
};

class ScalarField {
public:
    ScalarField() = default;
    ScalarField(Dims dims, std::vector<double> values);

    const Dims &dims() const { return dims_; }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t idx) const { return values_[idx]; }
    double at(int i, int j, int k) const { return values_[dims_.index(i, j, k)]; }
    std::size_t size() const { return values_.size(); }

private:
    Dims dims_{};
    std::vector<double> values_;
};

// Affine min-max remap to [0, 1]. Throws std::invalid_argument("degenerate
// intensity range") for constant volumes.
Volume normalize_intensity(const Volume &v);

// True when the voxel touches one of the six faces (one-sided differences apply).
bool is_boundary_voxel(const Dims &dims, int i, int j, int k);

// Pairwise summation in a fixed order; the result depends only on the input.
double pairwise_sum(std::span<const double> values);
double mean_of(std::span<const double> values);

} // namespace dare
