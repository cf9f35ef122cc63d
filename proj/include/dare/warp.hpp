#pragma once

// Resampling through phi(x) = x + u(x). Sample positions outside the grid are
// clamped to the boundary along each axis.

#include <vector>

#include "dare/core_types.hpp"

namespace dare {

// Trilinear; output keeps the dims and spacing of m.
Volume warp_trilinear(const Volume &m, const DisplacementField &u);

struct WarpWithGradient {
    Volume warped;
    // d warped(x) / d u(x) per voxel. Zero along any axis whose sample position
    // is clamped.
    std::vector<Vec3> d_warped_du;
};

WarpWithGradient warp_trilinear_with_gradient(const Volume &m, const DisplacementField &u);

// Nearest neighbour; half-voxel ties round toward the larger index.
LabelMap warp_labels(const LabelMap &labels, const DisplacementField &u);

} // namespace dare
