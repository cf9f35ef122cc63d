#pragma once

// Evaluation quantities: Dice overlap, Jacobian determinant statistics, strain
// energy, strain distributions, structure volume changes and the per-voxel
// adaptive-parameter records used for scatter analysis.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "dare/core_types.hpp"
#include "dare/regularizers.hpp"

namespace dare {

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts; // uniform bins over [lo, hi]

    std::size_t total() const;
};

struct DiceResult {
    std::map<std::int32_t, double> per_label; // every non-background label in either map
    double mean = 0.0;                        // over labels present in the fixed map
};

// a is the fixed (reference) map. Label 0 is background and excluded.
DiceResult dice(const LabelMap &a, const LabelMap &b);

struct JacobianStats {
    double pct_ge1 = 0.0; // det >= 1
    double pct_in_0_1 = 0.0;
    double pct_le0 = 0.0; // det <= 0
    double min_det = 0.0;
    Histogram neg_histogram; // 64 bins over [min_det, 0); empty when no det < 0
};

JacobianStats jacobian_stats(const DisplacementField &u, const Spacing &spacing = {1.0, 1.0, 1.0});

// mean over voxels of trace(eta)^2 + |eta|_F^2.
double strain_energy_metric(const DisplacementField &u, const Spacing &spacing = {1.0, 1.0, 1.0});

struct StrainDistribution {
    Histogram histogram; // 64 bins of |eta|_F over the observed range
    std::vector<std::uint8_t> exceed_mask; // 1 where |eta|_F > threshold
    std::size_t exceed_count = 0;
};

StrainDistribution strain_distribution(const DisplacementField &u, double threshold = 1.0,
                                       const Spacing &spacing = {1.0, 1.0, 1.0});

struct VolumeChange {
    std::size_t moving_voxels = 0;
    std::size_t warped_voxels = 0;
    std::optional<double> percent; // empty when the structure is absent from the moving map
};

// 100 * |V_warped - V_moving| / V_moving per structure, by nearest-neighbour
// label warping and voxel counting.
std::map<std::int32_t, VolumeChange> volume_change(const LabelMap &moving_labels, const DisplacementField &u,
                                                   const std::vector<std::int32_t> &structures);

struct ParameterRecord {
    double g = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
    double alpha = 0.0;
    double e_strain = 0.0; // lambda * trace(eta)^2
    double e_shear = 0.0;  // mu * |eta|_F^2
    double e_total = 0.0;  // e_strain + e_shear
    double folding = 0.0;  // c * max(0, -det)^2
};

struct CurvePoint {
    double g = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
    double alpha = 0.0;
};

// Analytic lambda/mu/alpha response on `points` evenly spaced g in [0, g_max].
std::vector<CurvePoint> parameter_curves(const AdaptiveParams &p, double g_max = 1.0, int points = 200);

struct ParameterEnergyTable {
    std::vector<ParameterRecord> records; // one per voxel
    std::vector<CurvePoint> curves;
};

ParameterEnergyTable parameter_energy_table(const DisplacementField &u, const AdaptiveParams &p, double g_max = 1.0,
                                            const Spacing &spacing = {1.0, 1.0, 1.0});

struct MetricsReport {
    DiceResult dice;
    JacobianStats jacobian;
    double strain_energy = 0.0;
    StrainDistribution strain;
    std::map<std::int32_t, VolumeChange> volume_changes;
};

MetricsReport evaluate_registration(const LabelMap &fixed_labels, const LabelMap &moving_labels, const DisplacementField &u,
                                    const std::vector<std::int32_t> &structures, const Spacing &spacing = {1.0, 1.0, 1.0});

} // namespace dare
