#include "dare/core_types.hpp"

#include <algorithm>
#include <cmath>

namespace dare {

void require_valid_dims(const Dims &dims) {
    if (dims.nx < 2 || dims.ny < 2 || dims.nz < 2) {
        throw std::invalid_argument("dims too small");
    }
}

void require_same_dims(const Dims &a, const Dims &b) {
    if (!(a == b)) {
        throw ShapeError();
    }
}

Mat3 Mat3::transposed() const {
    Mat3 out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            out(c, r) = (*this)(r, c);
        }
    }
    return out;
}

double Mat3::frobenius_sq() const {
    double s = 0.0;
    for (double v : m) {
        s += v * v;
    }
    return s;
}

double Mat3::determinant() const {
    const Mat3 &a = *this;
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

Mat3 Mat3::cofactor() const {
    const Mat3 &a = *this;
    Mat3 c;
    c(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    c(0, 1) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
    c(0, 2) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
    c(1, 0) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
    c(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
    c(1, 2) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
    c(2, 0) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
    c(2, 1) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
    c(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    return c;
}

Mat3 &Mat3::operator+=(const Mat3 &o) {
    for (std::size_t i = 0; i < 9; ++i) {
        m[i] += o.m[i];
    }
    return *this;
}

Mat3 &Mat3::operator*=(double s) {
    for (double &v : m) {
        v *= s;
    }
    return *this;
}

namespace {

void require_finite(std::span<const double> values, const char *what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + " contains non-finite values");
        }
    }
}

} // namespace

Volume::Volume(Dims dims, Spacing spacing, std::vector<double> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    require_valid_dims(dims_);
    for (double s : spacing_) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw std::invalid_argument("spacing must be positive");
        }
    }
    if (data_.size() != dims_.voxels()) {
        throw ShapeError("volume data length does not match dims");
    }
    require_finite(data_, "volume");
}

Volume::Volume(Dims dims, Spacing spacing) : Volume(dims, spacing, std::vector<double>(dims.voxels(), 0.0)) {}

double Volume::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Volume::max() const { return *std::max_element(data_.begin(), data_.end()); }

LabelMap::LabelMap(Dims dims, std::vector<std::int32_t> labels, std::map<std::int32_t, std::string> names)
    : dims_(dims), labels_(std::move(labels)), names_(std::move(names)) {
    require_valid_dims(dims_);
    if (labels_.size() != dims_.voxels()) {
        throw ShapeError("label data length does not match dims");
    }
    if (std::any_of(labels_.begin(), labels_.end(), [](std::int32_t l) { return l < 0; })) {
        throw std::invalid_argument("label IDs must be non-negative");
    }
}

DisplacementField::DisplacementField(Dims dims) : DisplacementField(dims, std::vector<Vec3>(dims.voxels(), Vec3{0.0, 0.0, 0.0})) {}

DisplacementField::DisplacementField(Dims dims, std::vector<Vec3> vectors) : dims_(dims), vectors_(std::move(vectors)) {
    require_valid_dims(dims_);
    if (vectors_.size() != dims_.voxels()) {
        throw ShapeError("displacement length does not match dims");
    }
    if (!all_finite()) {
        throw std::invalid_argument("displacement contains non-finite values");
    }
}

std::vector<double> DisplacementField::component(int c) const {
    std::vector<double> out(vectors_.size());
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        out[i] = vectors_[i][static_cast<std::size_t>(c)];
    }
    return out;
}

bool DisplacementField::all_finite() const {
    return std::all_of(vectors_.begin(), vectors_.end(), [](const Vec3 &v) {
        return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
    });
}

DisplacementField identity_displacement(const Dims &dims) { return DisplacementField(dims); }

TensorField::TensorField(Dims dims, TensorKind kind, std::vector<Mat3> matrices)
    : dims_(dims), kind_(kind), matrices_(std::move(matrices)) {
    require_valid_dims(dims_);
    if (matrices_.size() != dims_.voxels()) {
        throw ShapeError("tensor field length does not match dims");
    }
    if (kind_ == TensorKind::Strain) {
        for (const Mat3 &m : matrices_) {
            for (int r = 0; r < 3; ++r) {
                for (int c = r + 1; c < 3; ++c) {
                    if (std::abs(m(r, c) - m(c, r)) > 1e-6) {
                        throw std::invalid_argument("strain tensor is not symmetric");
                    }
                }
            }
        }
    }
}

ScalarField::ScalarField(Dims dims, std::vector<double> values) : dims_(dims), values_(std::move(values)) {
    require_valid_dims(dims_);
    if (values_.size() != dims_.voxels()) {
        throw ShapeError("scalar field length does not match dims");
    }
    require_finite(values_, "scalar field");
}

Volume normalize_intensity(const Volume &v) {
    const double lo = v.min();
    const double hi = v.max();
    if (!(hi > lo)) {
        throw std::invalid_argument("degenerate intensity range");
    }
    // Already normalized: return unchanged so repeated normalization is exact.
    if (lo == 0.0 && hi == 1.0) {
        return v;
    }
    const double scale = 1.0 / (hi - lo);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp((v[i] - lo) * scale, 0.0, 1.0);
    }
    return Volume(v.dims(), v.spacing(), std::move(out));
}

bool is_boundary_voxel(const Dims &dims, int i, int j, int k) {
    return i == 0 || j == 0 || k == 0 || i == dims.nx - 1 || j == dims.ny - 1 || k == dims.nz - 1;
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 64) {
        double s = 0.0;
        for (double v : values) {
            s += v;
        }
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double mean_of(std::span<const double> values) {
    if (values.empty()) {
        return 0.0;
    }
    return pairwise_sum(values) / static_cast<double>(values.size());
}

} // namespace dare
