#pragma once

// Synthetic registration problems with known ground-truth deformation.
//
// Convention: the moving volume carries the procedural texture and
// fixed = warp_trilinear(moving, u_gt), so registering moving onto fixed
// should return approximately u_gt.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dare/core_types.hpp"

namespace dare {

class SynthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DeformationKind { GaussianBumps, Dilation, Translation };
enum class TextureKind { BlobPhantom, Ramp, Checkerboard };

struct SynthSpec {
    Dims dims{32, 32, 32};
    std::uint64_t seed = 7;

    DeformationKind deformation = DeformationKind::GaussianBumps;
    int bump_count = 6;
    double max_amplitude = 3.0; // voxels; the generated field reaches exactly this max norm
    double sigma = 6.0;         // voxels
    double dilation = 0.0;
    Vec3 translation{0.0, 0.0, 0.0};

    TextureKind texture = TextureKind::BlobPhantom;
    int n_blobs = 80;
    int checker_period = 4;

    int label_spheres = 3;

    void validate() const;
};

struct SynthPair {
    Volume fixed;
    Volume moving;
    DisplacementField u_gt;
    LabelMap labels_fixed;
    LabelMap labels_moving;
};

// Minimum det(I + grad u_gt) every emitted ground truth satisfies.
inline constexpr double kFoldFreeBound = 0.2;

// Throws SynthError("could not satisfy fold-free bound; reduce amplitude")
// after 20 rejected draws.
SynthPair make_pair(const SynthSpec &spec);

struct EndpointError {
    double mean = 0.0;
    double max = 0.0;
};

// Euclidean error in voxels over voxels where mask != 0 (all voxels when the
// mask is empty).
EndpointError endpoint_error(const DisplacementField &u_est, const DisplacementField &u_gt, std::span<const std::uint8_t> mask = {});

// Non-background voxels of a label map.
std::vector<std::uint8_t> foreground_mask(const LabelMap &labels);

} // namespace dare
