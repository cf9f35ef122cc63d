#include "dare/field_ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "dare/parallel.hpp"

namespace dare {

namespace {

struct Tap {
    int offset;
    double weight;
};

struct Taps {
    std::array<Tap, 3> tap{};
    int count = 0;
};

// Taps for output sample k on an axis of length n (n >= 2).
Taps stencil_taps(int k, int n, Stencil stencil) {
    Taps t;
    if (stencil == Stencil::FirstDerivative) {
        if (k == 0) {
            t.tap[0] = {0, -1.0};
            t.tap[1] = {1, 1.0};
        } else if (k == n - 1) {
            t.tap[0] = {n - 2, -1.0};
            t.tap[1] = {n - 1, 1.0};
        } else {
            t.tap[0] = {k - 1, -0.5};
            t.tap[1] = {k + 1, 0.5};
        }
        t.count = 2;
        return t;
    }
    const int lo = k > 0 ? k - 1 : 0;
    const int hi = k < n - 1 ? k + 1 : n - 1;
    t.tap[0] = {lo, 1.0};
    t.tap[1] = {k, -2.0};
    t.tap[2] = {hi, 1.0};
    t.count = 3;
    return t;
}

std::array<int, 3> coords(int i, int j, int k) { return {i, j, k}; }

} // namespace

std::vector<double> apply_axis(std::span<const double> in, const Dims &dims, int axis, Stencil stencil) {
    if (in.size() != dims.voxels()) {
        throw ShapeError();
    }
    const int n = dims[axis];
    std::vector<double> out(in.size(), 0.0);
    parallel_for(0, dims.nz, [&](int k) {
        for (int j = 0; j < dims.ny; ++j) {
            for (int i = 0; i < dims.nx; ++i) {
                auto c = coords(i, j, k);
                const Taps taps = stencil_taps(c[static_cast<std::size_t>(axis)], n, stencil);
                double acc = 0.0;
                for (int t = 0; t < taps.count; ++t) {
                    auto src = c;
                    src[static_cast<std::size_t>(axis)] = taps.tap[static_cast<std::size_t>(t)].offset;
                    acc += taps.tap[static_cast<std::size_t>(t)].weight * in[dims.index(src[0], src[1], src[2])];
                }
                out[dims.index(i, j, k)] = acc;
            }
        }
    });
    return out;
}

std::vector<double> apply_axis_transpose(std::span<const double> in, const Dims &dims, int axis, Stencil stencil) {
    if (in.size() != dims.voxels()) {
        throw ShapeError();
    }
    const int n = dims[axis];
    std::vector<double> out(in.size(), 0.0);
    // Gather form: output sample q collects weight(p -> q) * in[p] from every
    // output p of the forward operator whose stencil reads q. Those p lie
    // within distance 1 of q along the axis.
    parallel_for(0, dims.nz, [&](int k) {
        for (int j = 0; j < dims.ny; ++j) {
            for (int i = 0; i < dims.nx; ++i) {
                auto c = coords(i, j, k);
                const int q = c[static_cast<std::size_t>(axis)];
                double acc = 0.0;
                for (int p = std::max(0, q - 1); p <= std::min(n - 1, q + 1); ++p) {
                    const Taps taps = stencil_taps(p, n, stencil);
                    double w = 0.0;
                    for (int t = 0; t < taps.count; ++t) {
                        if (taps.tap[static_cast<std::size_t>(t)].offset == q) {
                            w += taps.tap[static_cast<std::size_t>(t)].weight;
                        }
                    }
                    if (w != 0.0) {
                        auto src = c;
                        src[static_cast<std::size_t>(axis)] = p;
                        acc += w * in[dims.index(src[0], src[1], src[2])];
                    }
                }
                out[dims.index(i, j, k)] = acc;
            }
        }
    });
    return out;
}

TensorField displacement_jacobian(const DisplacementField &u, const Spacing &spacing) {
    const Dims &d = u.dims();
    std::vector<Mat3> mats(d.voxels());
    for (int comp = 0; comp < 3; ++comp) {
        const std::vector<double> uc = u.component(comp);
        for (int axis = 0; axis < 3; ++axis) {
            const double scale = spacing[static_cast<std::size_t>(comp)] / spacing[static_cast<std::size_t>(axis)];
            const std::vector<double> deriv = apply_axis(uc, d, axis, Stencil::FirstDerivative);
            for (std::size_t v = 0; v < mats.size(); ++v) {
                mats[v](comp, axis) = scale * deriv[v];
            }
        }
    }
    return TensorField(d, TensorKind::Jacobian, std::move(mats));
}

std::vector<Vec3> jacobian_adjoint(std::span<const Mat3> g, const Dims &dims, const Spacing &spacing) {
    if (g.size() != dims.voxels()) {
        throw ShapeError();
    }
    std::vector<Vec3> out(dims.voxels(), Vec3{0.0, 0.0, 0.0});
    std::vector<double> entry(dims.voxels());
    for (int comp = 0; comp < 3; ++comp) {
        for (int axis = 0; axis < 3; ++axis) {
            const double scale = spacing[static_cast<std::size_t>(comp)] / spacing[static_cast<std::size_t>(axis)];
            for (std::size_t v = 0; v < entry.size(); ++v) {
                entry[v] = g[v](comp, axis);
            }
            const std::vector<double> back = apply_axis_transpose(entry, dims, axis, Stencil::FirstDerivative);
            for (std::size_t v = 0; v < out.size(); ++v) {
                out[v][static_cast<std::size_t>(comp)] += scale * back[v];
            }
        }
    }
    return out;
}

TensorField strain_tensor(const TensorField &jacobian) {
    std::vector<Mat3> mats(jacobian.size());
    for (std::size_t v = 0; v < mats.size(); ++v) {
        const Mat3 &j = jacobian[v];
        mats[v] = (j + j.transposed()) * 0.5;
    }
    return TensorField(jacobian.dims(), TensorKind::Strain, std::move(mats));
}

ScalarField gradient_norm(const TensorField &jacobian) {
    std::vector<double> out(jacobian.size());
    for (std::size_t v = 0; v < out.size(); ++v) {
        out[v] = std::sqrt(jacobian[v].frobenius_sq());
    }
    return ScalarField(jacobian.dims(), std::move(out));
}

EnergyDensities energy_densities(const TensorField &strain, const ScalarField &lambda, const ScalarField &mu) {
    require_same_dims(strain.dims(), lambda.dims());
    require_same_dims(strain.dims(), mu.dims());
    std::vector<double> es(strain.size());
    std::vector<double> eh(strain.size());
    for (std::size_t v = 0; v < es.size(); ++v) {
        if (lambda[v] < 0.0 || mu[v] < 0.0) {
            throw std::invalid_argument("invalid Lamé field");
        }
        const double tr = strain[v].trace();
        es[v] = lambda[v] * tr * tr;
        eh[v] = mu[v] * strain[v].frobenius_sq();
    }
    return {ScalarField(strain.dims(), std::move(es)), ScalarField(strain.dims(), std::move(eh))};
}

ScalarField deformation_jacobian_det(const TensorField &jacobian) {
    std::vector<double> out(jacobian.size());
    for (std::size_t v = 0; v < out.size(); ++v) {
        out[v] = (Mat3::identity() + jacobian[v]).determinant();
    }
    return ScalarField(jacobian.dims(), std::move(out));
}

} // namespace dare
