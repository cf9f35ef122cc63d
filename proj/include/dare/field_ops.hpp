#pragma once

// Finite-difference operators on displacement fields.
//
// First derivatives along an axis use central differences in the interior and
// first-order one-sided differences on the two boundary faces. Displacements
// are in voxel units, so the Jacobian entry J(i, j) = du_i/dx_j is scaled by
// spacing[i] / spacing[j]; it is dimensionless and equals the plain index
// derivative for isotropic grids.

#include <span>
#include <vector>

#include "dare/core_types.hpp"

namespace dare {

struct EnergyDensities {
    ScalarField strain_density; // lambda * trace(eta)^2
    ScalarField shear_density;  // mu * |eta|_F^2
};

TensorField displacement_jacobian(const DisplacementField &u, const Spacing &spacing = {1.0, 1.0, 1.0});

// eta = (J + J^T) / 2, tagged symmetric.
TensorField strain_tensor(const TensorField &jacobian);

// Per-voxel Frobenius norm of J.
ScalarField gradient_norm(const TensorField &jacobian);

// Throws std::invalid_argument("invalid Lamé field") on negative coefficients.
EnergyDensities energy_densities(const TensorField &strain, const ScalarField &lambda, const ScalarField &mu);

// det(I + J) per voxel.
ScalarField deformation_jacobian_det(const TensorField &jacobian);

// One-dimensional stencils used by the operators above and by the bending
// regularizer. SecondDerivative is u[k+1] - 2u[k] + u[k-1] with indices
// clamped to the grid.
enum class Stencil { FirstDerivative, SecondDerivative };

std::vector<double> apply_axis(std::span<const double> in, const Dims &dims, int axis, Stencil stencil);
// Exact transpose of apply_axis for the same (axis, stencil).
std::vector<double> apply_axis_transpose(std::span<const double> in, const Dims &dims, int axis, Stencil stencil);

// Gradient with respect to u of sum_v <G(v), J(v)> where J = displacement_jacobian(u, spacing).
std::vector<Vec3> jacobian_adjoint(std::span<const Mat3> g, const Dims &dims, const Spacing &spacing = {1.0, 1.0, 1.0});

} // namespace dare
