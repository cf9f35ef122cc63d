#include "dare/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dare/field_ops.hpp"
#include "dare/warp.hpp"

namespace dare {

void SynthSpec::validate() const {
    require_valid_dims(dims);
    if (max_amplitude < 0.0) throw std::invalid_argument("max_amplitude must be >= 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    if (bump_count < 1) throw std::invalid_argument("bump count must be >= 1");
    if (n_blobs < 1) throw std::invalid_argument("blob count must be >= 1");
    if (checker_period < 1) throw std::invalid_argument("checker period must be >= 1");
    if (label_spheres < 1) throw std::invalid_argument("label sphere count must be >= 1");
}

namespace {

constexpr int kMaxAttempts = 20;

Vec3 centre_of(const Dims &d) {
    return {0.5 * (d.nx - 1), 0.5 * (d.ny - 1), 0.5 * (d.nz - 1)};
}

double radius_scale(const Dims &d) { return 0.5 * std::min({d.nx, d.ny, d.nz}); }

Volume make_texture(const SynthSpec &spec, std::mt19937_64 &rng) {
    const Dims &d = spec.dims;
    std::vector<double> data(d.voxels(), 0.0);
    const Vec3 c = centre_of(d);
    switch (spec.texture) {
    case TextureKind::Ramp:
        for (int k = 0; k < d.nz; ++k)
            for (int j = 0; j < d.ny; ++j)
                for (int i = 0; i < d.nx; ++i)
                    data[d.index(i, j, k)] = static_cast<double>(i + j + k) / static_cast<double>(d.nx + d.ny + d.nz - 3);
        break;
    case TextureKind::Checkerboard:
        for (int k = 0; k < d.nz; ++k)
            for (int j = 0; j < d.ny; ++j)
                for (int i = 0; i < d.nx; ++i)
                    data[d.index(i, j, k)] = ((i / spec.checker_period + j / spec.checker_period + k / spec.checker_period) % 2) ? 1.0 : 0.0;
        break;
    case TextureKind::BlobPhantom: {
        // A soft-edged body with Gaussian blobs of random size and contrast.
        const double body_r = 0.9 * radius_scale(d);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        struct Blob {
            Vec3 p;
            double sigma;
            double amp;
        };
        std::vector<Blob> blobs;
        while (static_cast<int>(blobs.size()) < spec.n_blobs) {
            Vec3 p{(2.0 * unit(rng) - 1.0) * body_r, (2.0 * unit(rng) - 1.0) * body_r, (2.0 * unit(rng) - 1.0) * body_r};
            if (std::hypot(p[0], p[1], p[2]) > 0.85 * body_r) {
                continue;
            }
            const double sigma = 1.5 + 1.5 * unit(rng);
            const double amp = 0.3 + 0.7 * unit(rng);
            blobs.push_back({{p[0] + c[0], p[1] + c[1], p[2] + c[2]}, sigma, unit(rng) < 0.5 ? -amp : amp});
        }
        for (int k = 0; k < d.nz; ++k) {
            for (int j = 0; j < d.ny; ++j) {
                for (int i = 0; i < d.nx; ++i) {
                    const double r = std::hypot(i - c[0], j - c[1], k - c[2]);
                    double v = 1.0 / (1.0 + std::exp((r - body_r) / 1.0));
                    for (const Blob &b : blobs) {
                        const double dx = i - b.p[0], dy = j - b.p[1], dz = k - b.p[2];
                        v += 0.6 * b.amp * std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * b.sigma * b.sigma));
                    }
                    data[d.index(i, j, k)] = v;
                }
            }
        }
        break;
    }
    }
    return normalize_intensity(Volume(d, {1.0, 1.0, 1.0}, std::move(data)));
}

LabelMap make_labels(const SynthSpec &spec) {
    const Dims &d = spec.dims;
    const Vec3 c = centre_of(d);
    const double outer = 0.8 * radius_scale(d);
    std::vector<std::int32_t> labels(d.voxels(), 0);
    for (int k = 0; k < d.nz; ++k) {
        for (int j = 0; j < d.ny; ++j) {
            for (int i = 0; i < d.nx; ++i) {
                const double r = std::hypot(i - c[0], j - c[1], k - c[2]);
                for (int s = 0; s < spec.label_spheres; ++s) {
                    if (r <= outer * static_cast<double>(s + 1) / spec.label_spheres) {
                        labels[d.index(i, j, k)] = s + 1;
                        break;
                    }
                }
            }
        }
    }
    return LabelMap(d, std::move(labels));
}

DisplacementField make_bumps(const SynthSpec &spec, std::mt19937_64 &rng) {
    const Dims &d = spec.dims;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    struct Bump {
        Vec3 centre;
        Vec3 dir;
    };
    std::vector<Bump> bumps;
    for (int b = 0; b < spec.bump_count; ++b) {
        Bump bump;
        for (int a = 0; a < 3; ++a) {
            bump.centre[static_cast<std::size_t>(a)] = (0.25 + 0.5 * unit(rng)) * (d[a] - 1);
        }
        Vec3 dir{normal(rng), normal(rng), normal(rng)};
        const double n = std::max(1e-12, std::hypot(dir[0], dir[1], dir[2]));
        bump.dir = {dir[0] / n, dir[1] / n, dir[2] / n};
        bumps.push_back(bump);
    }
    std::vector<Vec3> vec(d.voxels(), Vec3{0.0, 0.0, 0.0});
    const double two_s2 = 2.0 * spec.sigma * spec.sigma;
    double max_norm = 0.0;
    for (int k = 0; k < d.nz; ++k) {
        for (int j = 0; j < d.ny; ++j) {
            for (int i = 0; i < d.nx; ++i) {
                // Vanishes on the boundary faces.
                const double taper = std::sin(std::numbers::pi * i / (d.nx - 1)) * std::sin(std::numbers::pi * j / (d.ny - 1)) *
                                     std::sin(std::numbers::pi * k / (d.nz - 1));
                Vec3 u{0.0, 0.0, 0.0};
                for (const Bump &b : bumps) {
                    const double dx = i - b.centre[0], dy = j - b.centre[1], dz = k - b.centre[2];
                    const double w = taper * std::exp(-(dx * dx + dy * dy + dz * dz) / two_s2);
                    for (std::size_t a = 0; a < 3; ++a) {
                        u[a] += w * b.dir[a];
                    }
                }
                vec[d.index(i, j, k)] = u;
                max_norm = std::max(max_norm, std::hypot(u[0], u[1], u[2]));
            }
        }
    }
    const double scale = max_norm > 0.0 ? spec.max_amplitude / max_norm : 0.0;
    for (Vec3 &u : vec) {
        for (double &x : u) {
            x *= scale;
        }
    }
    return DisplacementField(d, std::move(vec));
}

DisplacementField make_deformation(const SynthSpec &spec, std::mt19937_64 &rng) {
    const Dims &d = spec.dims;
    switch (spec.deformation) {
    case DeformationKind::GaussianBumps:
        return make_bumps(spec, rng);
    case DeformationKind::Translation:
        return DisplacementField(d, std::vector<Vec3>(d.voxels(), spec.translation));
    case DeformationKind::Dilation: {
        const Vec3 c = centre_of(d);
        std::vector<Vec3> vec(d.voxels());
        for (int k = 0; k < d.nz; ++k)
            for (int j = 0; j < d.ny; ++j)
                for (int i = 0; i < d.nx; ++i)
                    vec[d.index(i, j, k)] = {spec.dilation * (i - c[0]), spec.dilation * (j - c[1]), spec.dilation * (k - c[2])};
        return DisplacementField(d, std::move(vec));
    }
    }
    throw std::invalid_argument("unknown deformation kind");
}

double min_det(const DisplacementField &u) {
    const ScalarField det = deformation_jacobian_det(displacement_jacobian(u));
    return *std::min_element(det.values().begin(), det.values().end());
}

} // namespace

SynthPair make_pair(const SynthSpec &spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const Volume moving = make_texture(spec, rng);
    const LabelMap labels_moving = make_labels(spec);

    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        DisplacementField u = make_deformation(spec, rng);
        if (!(min_det(u) > kFoldFreeBound)) {
            continue;
        }
        Volume fixed = warp_trilinear(moving, u);
        LabelMap labels_fixed = warp_labels(labels_moving, u);
        return SynthPair{std::move(fixed), moving, std::move(u), std::move(labels_fixed), labels_moving};
    }
    throw SynthError("could not satisfy fold-free bound; reduce amplitude");
}

EndpointError endpoint_error(const DisplacementField &u_est, const DisplacementField &u_gt, std::span<const std::uint8_t> mask) {
    require_same_dims(u_est.dims(), u_gt.dims());
    if (!mask.empty() && mask.size() != u_est.size()) {
        throw ShapeError("mask length does not match field");
    }
    std::vector<double> errs;
    errs.reserve(u_est.size());
    EndpointError out;
    for (std::size_t v = 0; v < u_est.size(); ++v) {
        if (!mask.empty() && mask[v] == 0) {
            continue;
        }
        const double e = std::hypot(u_est[v][0] - u_gt[v][0], u_est[v][1] - u_gt[v][1], u_est[v][2] - u_gt[v][2]);
        errs.push_back(e);
        out.max = std::max(out.max, e);
    }
    out.mean = mean_of(errs);
    return out;
}

std::vector<std::uint8_t> foreground_mask(const LabelMap &labels) {
    std::vector<std::uint8_t> mask(labels.labels().size());
    for (std::size_t v = 0; v < mask.size(); ++v) {
        mask[v] = labels[v] != 0 ? 1 : 0;
    }
    return mask;
}

} // namespace dare
