#pragma once

// Deformation regularizers. Integrals over the domain are discretized as means
// over voxels so energies do not depend on grid resolution.

#include <optional>
#include <vector>

#include "dare/core_types.hpp"

namespace dare {

// Hyperparameters of the adaptive elastic regularizer.
struct AdaptiveParams {
    double lambda0 = 1.0; // base first Lamé parameter
    double mu0 = 0.5;     // base shear modulus
    double c = 10.0;      // folding penalty weight
    double delta = 1.0;   // gradient-adjustment magnitude for lambda and mu
    double beta0 = 1.0;   // sensitivity of the adaptive weight alpha
    double tau = 0.05;    // sigmoid centre of mu
    double kappa = 0.01;  // sigmoid scale of mu
    double theta = 0.1;   // exponential sensitivity of lambda

    void validate() const;
};

// Adaptive coefficients as functions of the gradient norm g = |grad u|_F.
//   lambda(g) = lambda0 * (1 + delta * exp(-g / theta))
//   mu(g)     = mu0 * (1 + delta * sigmoid(-(g - tau) / kappa))
//   alpha(g)  = 1 + beta0 * exp(-g)
double lambda_hat(double g, const AdaptiveParams &p);
double mu_hat(double g, const AdaptiveParams &p);
double alpha_hat(double g, const AdaptiveParams &p);
// The g-dependent terms alone (lambda - lambda0, mu - mu0). They stay
// representable where mu itself rounds to mu0 (g above about 0.42 with the
// defaults), so monotonicity can be checked on them at full precision.
double lambda_hat_adjustment(double g, const AdaptiveParams &p);
double mu_hat_adjustment(double g, const AdaptiveParams &p);
double lambda_hat_derivative(double g, const AdaptiveParams &p);
double mu_hat_derivative(double g, const AdaptiveParams &p);
double alpha_hat_derivative(double g, const AdaptiveParams &p);

ScalarField lambda_hat(const ScalarField &g, const AdaptiveParams &p);
ScalarField mu_hat(const ScalarField &g, const AdaptiveParams &p);
ScalarField alpha_hat(const ScalarField &g, const AdaptiveParams &p);

struct DensityMaps {
    ScalarField strain;  // alpha * lambda * trace(eta)^2
    ScalarField shear;   // alpha * mu * |eta|_F^2
    ScalarField folding; // c * max(0, -det(I + J))^2
};

struct RegularizerReport {
    double total = 0.0; // strain_part + shear_part
    double strain_part = 0.0;
    double shear_part = 0.0;
    double folding_part = 0.0; // reported separately, not part of total
    std::optional<DensityMaps> density_maps;
};

RegularizerReport dare_regularizer(const DisplacementField &u, const AdaptiveParams &p, bool with_maps = false,
                                   const Spacing &spacing = {1.0, 1.0, 1.0});
// Constant Lamé coefficients, alpha = 1. Folding part uses weight 0.
RegularizerReport elastic_regularizer(const DisplacementField &u, double lambda, double mu, bool with_maps = false,
                                      const Spacing &spacing = {1.0, 1.0, 1.0});

// c * mean_v max(0, -det(I + J(v)))^2
double folding_penalty(const DisplacementField &u, double c, const Spacing &spacing = {1.0, 1.0, 1.0});

double diffusion_regularizer(const DisplacementField &u, const Spacing &spacing = {1.0, 1.0, 1.0});
// mean sqrt(|J|_F^2 + eps^2)
double tv_regularizer(const DisplacementField &u, double eps = 1e-6, const Spacing &spacing = {1.0, 1.0, 1.0});
// mean over voxels of sum_d sum_ij (d^2 u_d / dx_i dx_j)^2, in voxel units.
double bending_regularizer(const DisplacementField &u);

enum class RegularizerKind { DARE, Elastic, Diffusion, TV, Bending };

struct RegularizerConfig {
    RegularizerKind kind = RegularizerKind::DARE;
    AdaptiveParams adaptive;
    double lambda = 1.0; // Elastic only
    double mu = 1.0;     // Elastic only
    double tv_eps = 1e-6;
    double weight = 1.0; // overall weight on the regularizer (not on folding)
    // Unset: DARE uses adaptive.c, every other kind uses 0.
    std::optional<double> folding_weight;
    // Treat lambda/mu/alpha as constants when differentiating (ablation only;
    // the gradient is then not the gradient of the energy).
    bool frozen_coefficients = false;

    double effective_folding_weight() const;
    void validate() const;
};

struct RegularizerTerms {
    double value = 0.0; // unweighted regularizer energy
    double strain_part = 0.0;
    double shear_part = 0.0;
    double folding = 0.0; // already multiplied by the folding weight
    std::size_t singular_voxels = 0; // voxels with det(I + J) exactly 0
    std::vector<Vec3> grad; // d(weight * value + folding)/du, empty unless requested
};

RegularizerTerms evaluate_regularizer(const DisplacementField &u, const RegularizerConfig &cfg, bool with_gradient,
                                      const Spacing &spacing = {1.0, 1.0, 1.0});

} // namespace dare
