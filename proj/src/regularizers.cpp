#include "dare/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dare/field_ops.hpp"

namespace dare {

void AdaptiveParams::validate() const {
    if (!(lambda0 > 0.0)) throw std::invalid_argument("lambda0 must be > 0");
    if (!(mu0 > 0.0)) throw std::invalid_argument("mu0 must be > 0");
    if (!(c > 0.0)) throw std::invalid_argument("c must be > 0");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
    if (!(theta > 0.0)) throw std::invalid_argument("theta must be > 0");
    if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
    if (!(beta0 >= 0.0)) throw std::invalid_argument("beta0 must be >= 0");
    if (!std::isfinite(tau)) throw std::invalid_argument("tau must be finite");
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

ScalarField map_field(const ScalarField &g, double (*fn)(double, const AdaptiveParams &), const AdaptiveParams &p) {
    std::vector<double> out(g.size());
    for (std::size_t v = 0; v < out.size(); ++v) {
        out[v] = fn(g[v], p);
    }
    return ScalarField(g.dims(), std::move(out));
}

constexpr double kNormFloor = 1e-12;

} // namespace

double lambda_hat(double g, const AdaptiveParams &p) { return p.lambda0 * (1.0 + p.delta * std::exp(-g / p.theta)); }

double mu_hat(double g, const AdaptiveParams &p) { return p.mu0 * (1.0 + p.delta * sigmoid(-(g - p.tau) / p.kappa)); }

double alpha_hat(double g, const AdaptiveParams &p) { return 1.0 + p.beta0 * std::exp(-g); }

double lambda_hat_adjustment(double g, const AdaptiveParams &p) { return p.lambda0 * p.delta * std::exp(-g / p.theta); }

double mu_hat_adjustment(double g, const AdaptiveParams &p) { return p.mu0 * p.delta * sigmoid(-(g - p.tau) / p.kappa); }

double lambda_hat_derivative(double g, const AdaptiveParams &p) {
    return -p.lambda0 * p.delta / p.theta * std::exp(-g / p.theta);
}

double mu_hat_derivative(double g, const AdaptiveParams &p) {
    const double s = sigmoid(-(g - p.tau) / p.kappa);
    return -p.mu0 * p.delta * s * (1.0 - s) / p.kappa;
}

double alpha_hat_derivative(double g, const AdaptiveParams &p) { return -p.beta0 * std::exp(-g); }

ScalarField lambda_hat(const ScalarField &g, const AdaptiveParams &p) {
    return map_field(g, static_cast<double (*)(double, const AdaptiveParams &)>(&lambda_hat), p);
}
ScalarField mu_hat(const ScalarField &g, const AdaptiveParams &p) {
    return map_field(g, static_cast<double (*)(double, const AdaptiveParams &)>(&mu_hat), p);
}
ScalarField alpha_hat(const ScalarField &g, const AdaptiveParams &p) {
    return map_field(g, static_cast<double (*)(double, const AdaptiveParams &)>(&alpha_hat), p);
}

double RegularizerConfig::effective_folding_weight() const {
    if (folding_weight) {
        return *folding_weight;
    }
    return kind == RegularizerKind::DARE ? adaptive.c : 0.0;
}

void RegularizerConfig::validate() const {
    if (kind == RegularizerKind::DARE) {
        adaptive.validate();
    }
    if (kind == RegularizerKind::Elastic && (lambda < 0.0 || mu < 0.0)) {
        throw std::invalid_argument("invalid Lamé field");
    }
    if (!(tv_eps > 0.0)) throw std::invalid_argument("tv_eps must be > 0");
    if (!(weight >= 0.0)) throw std::invalid_argument("regularizer weight must be >= 0");
    if (folding_weight && !(*folding_weight >= 0.0)) throw std::invalid_argument("folding weight must be >= 0");
}

namespace {

// Per-voxel energy of a first-order regularizer and its derivative with
// respect to J.
struct VoxelTerms {
    double strain = 0.0;
    double shear = 0.0;
    double value = 0.0;
    Mat3 d_value_dj;
};

VoxelTerms dare_voxel(const Mat3 &j, const AdaptiveParams &p, bool frozen, bool with_gradient) {
    VoxelTerms out;
    const double g = std::sqrt(j.frobenius_sq());
    const Mat3 eta = (j + j.transposed()) * 0.5;
    const double tr = eta.trace();
    const double q = eta.frobenius_sq();
    const double lam = lambda_hat(g, p);
    const double mu = mu_hat(g, p);
    const double alpha = alpha_hat(g, p);
    out.strain = alpha * lam * tr * tr;
    out.shear = alpha * mu * q;
    out.value = out.strain + out.shear;
    if (with_gradient) {
        Mat3 d = eta * (2.0 * alpha * mu);
        for (int r = 0; r < 3; ++r) {
            d(r, r) += 2.0 * alpha * lam * tr;
        }
        if (!frozen) {
            const double d_dg = alpha_hat_derivative(g, p) * (lam * tr * tr + mu * q) +
                                alpha * (lambda_hat_derivative(g, p) * tr * tr + mu_hat_derivative(g, p) * q);
            d += j * (d_dg / std::max(g, kNormFloor));
        }
        out.d_value_dj = d;
    }
    return out;
}

VoxelTerms elastic_voxel(const Mat3 &j, double lambda, double mu, bool with_gradient) {
    VoxelTerms out;
    const Mat3 eta = (j + j.transposed()) * 0.5;
    const double tr = eta.trace();
    out.strain = lambda * tr * tr;
    out.shear = mu * eta.frobenius_sq();
    out.value = out.strain + out.shear;
    if (with_gradient) {
        Mat3 d = eta * (2.0 * mu);
        for (int r = 0; r < 3; ++r) {
            d(r, r) += 2.0 * lambda * tr;
        }
        out.d_value_dj = d;
    }
    return out;
}

VoxelTerms diffusion_voxel(const Mat3 &j, bool with_gradient) {
    VoxelTerms out;
    out.value = j.frobenius_sq();
    if (with_gradient) {
        out.d_value_dj = j * 2.0;
    }
    return out;
}

VoxelTerms tv_voxel(const Mat3 &j, double eps, bool with_gradient) {
    VoxelTerms out;
    out.value = std::sqrt(j.frobenius_sq() + eps * eps);
    if (with_gradient) {
        out.d_value_dj = j * (1.0 / out.value);
    }
    return out;
}

// Second-derivative operators L_ij applied to one displacement component.
std::vector<double> second_derivative(std::span<const double> uc, const Dims &d, int a, int b) {
    if (a == b) {
        return apply_axis(uc, d, a, Stencil::SecondDerivative);
    }
    return apply_axis(apply_axis(uc, d, b, Stencil::FirstDerivative), d, a, Stencil::FirstDerivative);
}

std::vector<double> second_derivative_transpose(std::span<const double> h, const Dims &d, int a, int b) {
    if (a == b) {
        return apply_axis_transpose(h, d, a, Stencil::SecondDerivative);
    }
    return apply_axis_transpose(apply_axis_transpose(h, d, a, Stencil::FirstDerivative), d, b, Stencil::FirstDerivative);
}

RegularizerTerms bending_terms(const DisplacementField &u, double weight, bool with_gradient) {
    const Dims &d = u.dims();
    const std::size_t nvox = d.voxels();
    std::vector<double> density(nvox, 0.0);
    RegularizerTerms out;
    if (with_gradient) {
        out.grad.assign(nvox, Vec3{0.0, 0.0, 0.0});
    }
    const double gscale = 2.0 * weight / static_cast<double>(nvox);
    for (int comp = 0; comp < 3; ++comp) {
        const std::vector<double> uc = u.component(comp);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const std::vector<double> h = second_derivative(uc, d, a, b);
                for (std::size_t v = 0; v < nvox; ++v) {
                    density[v] += h[v] * h[v];
                }
                if (with_gradient) {
                    const std::vector<double> back = second_derivative_transpose(h, d, a, b);
                    for (std::size_t v = 0; v < nvox; ++v) {
                        out.grad[v][static_cast<std::size_t>(comp)] += gscale * back[v];
                    }
                }
            }
        }
    }
    out.value = mean_of(density);
    return out;
}

struct FirstOrderResult {
    RegularizerTerms terms;
    std::optional<DensityMaps> maps;
};

FirstOrderResult first_order_terms(const DisplacementField &u, const RegularizerConfig &cfg, bool with_gradient,
                                   bool with_maps, const Spacing &spacing) {
    const Dims &d = u.dims();
    const std::size_t nvox = d.voxels();
    const TensorField jac = displacement_jacobian(u, spacing);
    const double c = cfg.effective_folding_weight();
    const double inv_n = 1.0 / static_cast<double>(nvox);

    std::vector<double> strain(nvox), shear(nvox), value(nvox), fold(nvox);
    std::vector<Mat3> dj;
    if (with_gradient) {
        dj.resize(nvox);
    }
    std::size_t singular = 0;
    for (std::size_t v = 0; v < nvox; ++v) {
        const Mat3 &j = jac[v];
        VoxelTerms t;
        switch (cfg.kind) {
        case RegularizerKind::DARE:
            t = dare_voxel(j, cfg.adaptive, cfg.frozen_coefficients, with_gradient);
            break;
        case RegularizerKind::Elastic:
            t = elastic_voxel(j, cfg.lambda, cfg.mu, with_gradient);
            break;
        case RegularizerKind::Diffusion:
            t = diffusion_voxel(j, with_gradient);
            break;
        case RegularizerKind::TV:
            t = tv_voxel(j, cfg.tv_eps, with_gradient);
            break;
        case RegularizerKind::Bending:
            break;
        }
        strain[v] = t.strain;
        shear[v] = t.shear;
        value[v] = t.value;

        const Mat3 phi_grad = Mat3::identity() + j;
        const double det = phi_grad.determinant();
        if (det == 0.0) {
            ++singular;
        }
        const double neg = std::max(0.0, -det);
        fold[v] = c * neg * neg;
        if (with_gradient) {
            Mat3 g = t.d_value_dj * (cfg.weight * inv_n);
            if (neg > 0.0 && c > 0.0) {
                // d det(I + J) / dJ is the cofactor matrix of I + J.
                g += phi_grad.cofactor() * (-2.0 * c * neg * inv_n);
            }
            dj[v] = g;
        }
    }

    FirstOrderResult out;
    out.terms.strain_part = mean_of(strain);
    out.terms.shear_part = mean_of(shear);
    out.terms.value = mean_of(value);
    out.terms.folding = mean_of(fold);
    out.terms.singular_voxels = singular;
    if (with_gradient) {
        out.terms.grad = jacobian_adjoint(dj, d, spacing);
    }
    if (with_maps) {
        out.maps = DensityMaps{ScalarField(d, std::move(strain)), ScalarField(d, std::move(shear)),
                               ScalarField(d, std::move(fold))};
    }
    return out;
}

} // namespace

RegularizerTerms evaluate_regularizer(const DisplacementField &u, const RegularizerConfig &cfg, bool with_gradient,
                                      const Spacing &spacing) {
    cfg.validate();
    if (cfg.kind != RegularizerKind::Bending) {
        return first_order_terms(u, cfg, with_gradient, false, spacing).terms;
    }
    RegularizerTerms bend = bending_terms(u, cfg.weight, with_gradient);
    if (cfg.effective_folding_weight() > 0.0) {
        // Folding still comes from the first-order Jacobian.
        RegularizerConfig fold_cfg = cfg;
        fold_cfg.kind = RegularizerKind::Diffusion;
        fold_cfg.weight = 0.0;
        fold_cfg.folding_weight = cfg.effective_folding_weight();
        RegularizerTerms fold = first_order_terms(u, fold_cfg, with_gradient, false, spacing).terms;
        bend.folding = fold.folding;
        bend.singular_voxels = fold.singular_voxels;
        if (with_gradient) {
            for (std::size_t v = 0; v < bend.grad.size(); ++v) {
                for (std::size_t c = 0; c < 3; ++c) {
                    bend.grad[v][c] += fold.grad[v][c];
                }
            }
        }
    }
    return bend;
}

RegularizerReport dare_regularizer(const DisplacementField &u, const AdaptiveParams &p, bool with_maps, const Spacing &spacing) {
    RegularizerConfig cfg;
    cfg.kind = RegularizerKind::DARE;
    cfg.adaptive = p;
    cfg.validate();
    FirstOrderResult r = first_order_terms(u, cfg, false, with_maps, spacing);
    RegularizerReport rep;
    rep.strain_part = r.terms.strain_part;
    rep.shear_part = r.terms.shear_part;
    rep.total = rep.strain_part + rep.shear_part;
    rep.folding_part = r.terms.folding;
    rep.density_maps = std::move(r.maps);
    return rep;
}

RegularizerReport elastic_regularizer(const DisplacementField &u, double lambda, double mu, bool with_maps, const Spacing &spacing) {
    RegularizerConfig cfg;
    cfg.kind = RegularizerKind::Elastic;
    cfg.lambda = lambda;
    cfg.mu = mu;
    cfg.folding_weight = 0.0;
    cfg.validate();
    FirstOrderResult r = first_order_terms(u, cfg, false, with_maps, spacing);
    RegularizerReport rep;
    rep.strain_part = r.terms.strain_part;
    rep.shear_part = r.terms.shear_part;
    rep.total = rep.strain_part + rep.shear_part;
    rep.density_maps = std::move(r.maps);
    return rep;
}

double folding_penalty(const DisplacementField &u, double c, const Spacing &spacing) {
    if (c < 0.0) {
        throw std::invalid_argument("folding weight must be >= 0");
    }
    RegularizerConfig cfg;
    cfg.kind = RegularizerKind::Diffusion;
    cfg.weight = 0.0;
    cfg.folding_weight = c;
    return first_order_terms(u, cfg, false, false, spacing).terms.folding;
}

double diffusion_regularizer(const DisplacementField &u, const Spacing &spacing) {
    RegularizerConfig cfg;
    cfg.kind = RegularizerKind::Diffusion;
    return first_order_terms(u, cfg, false, false, spacing).terms.value;
}

double tv_regularizer(const DisplacementField &u, double eps, const Spacing &spacing) {
    RegularizerConfig cfg;
    cfg.kind = RegularizerKind::TV;
    cfg.tv_eps = eps;
    cfg.validate();
    return first_order_terms(u, cfg, false, false, spacing).terms.value;
}

double bending_regularizer(const DisplacementField &u) { return bending_terms(u, 1.0, false).value; }

} // namespace dare
