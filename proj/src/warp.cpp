#include "dare/warp.hpp"

#include <algorithm>
#include <cmath>

#include "dare/parallel.hpp"

namespace dare {

namespace {

struct AxisSample {
    int i0;
    double t;      // weight of sample i0 + 1
    bool clamped;
};

AxisSample locate(double p, int n) {
    AxisSample s{};
    s.clamped = p < 0.0 || p > static_cast<double>(n - 1);
    p = std::clamp(p, 0.0, static_cast<double>(n - 1));
    s.i0 = std::min(static_cast<int>(std::floor(p)), n - 2);
    s.t = p - static_cast<double>(s.i0);
    return s;
}

template <bool WithGradient>
void warp_impl(const Volume &m, const DisplacementField &u, std::vector<double> &out, std::vector<Vec3> *grad) {
    const Dims &d = m.dims();
    parallel_for(0, d.nz, [&](int k) {
        for (int j = 0; j < d.ny; ++j) {
            for (int i = 0; i < d.nx; ++i) {
                const std::size_t idx = d.index(i, j, k);
                const Vec3 &disp = u[idx];
                const AxisSample sx = locate(i + disp[0], d.nx);
                const AxisSample sy = locate(j + disp[1], d.ny);
                const AxisSample sz = locate(k + disp[2], d.nz);

                double c[2][2][2];
                for (int dz = 0; dz < 2; ++dz) {
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            c[dz][dy][dx] = m.at(sx.i0 + dx, sy.i0 + dy, sz.i0 + dz);
                        }
                    }
                }
                const double wx[2] = {1.0 - sx.t, sx.t};
                const double wy[2] = {1.0 - sy.t, sy.t};
                const double wz[2] = {1.0 - sz.t, sz.t};

                double value = 0.0;
                for (int dz = 0; dz < 2; ++dz) {
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            value += wz[dz] * wy[dy] * wx[dx] * c[dz][dy][dx];
                        }
                    }
                }
                out[idx] = value;

                if constexpr (WithGradient) {
                    Vec3 g{0.0, 0.0, 0.0};
                    const double sgn[2] = {-1.0, 1.0};
                    for (int dz = 0; dz < 2; ++dz) {
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const double v = c[dz][dy][dx];
                                g[0] += sgn[dx] * wy[dy] * wz[dz] * v;
                                g[1] += wx[dx] * sgn[dy] * wz[dz] * v;
                                g[2] += wx[dx] * wy[dy] * sgn[dz] * v;
                            }
                        }
                    }
                    if (sx.clamped) g[0] = 0.0;
                    if (sy.clamped) g[1] = 0.0;
                    if (sz.clamped) g[2] = 0.0;
                    (*grad)[idx] = g;
                }
            }
        }
    });
}

} // namespace

Volume warp_trilinear(const Volume &m, const DisplacementField &u) {
    require_same_dims(m.dims(), u.dims());
    std::vector<double> out(m.size());
    warp_impl<false>(m, u, out, nullptr);
    return Volume(m.dims(), m.spacing(), std::move(out));
}

WarpWithGradient warp_trilinear_with_gradient(const Volume &m, const DisplacementField &u) {
    require_same_dims(m.dims(), u.dims());
    std::vector<double> out(m.size());
    std::vector<Vec3> grad(m.size());
    warp_impl<true>(m, u, out, &grad);
    return {Volume(m.dims(), m.spacing(), std::move(out)), std::move(grad)};
}

LabelMap warp_labels(const LabelMap &labels, const DisplacementField &u) {
    require_same_dims(labels.dims(), u.dims());
    const Dims &d = labels.dims();
    auto nearest = [](double p, int n) {
        return std::clamp(static_cast<int>(std::floor(p + 0.5)), 0, n - 1);
    };
    std::vector<std::int32_t> out(labels.labels().size());
    parallel_for(0, d.nz, [&](int k) {
        for (int j = 0; j < d.ny; ++j) {
            for (int i = 0; i < d.nx; ++i) {
                const std::size_t idx = d.index(i, j, k);
                const Vec3 &disp = u[idx];
                out[idx] = labels.at(nearest(i + disp[0], d.nx), nearest(j + disp[1], d.ny), nearest(k + disp[2], d.nz));
            }
        }
    });
    return LabelMap(d, std::move(out), labels.names());
}

} // namespace dare
