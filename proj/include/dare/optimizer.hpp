#pragma once

// Per-pair minimization of
//   E(u) = sim(f, m o (Id + u)) + weight * R(u) + c * mean max(0, -det(I + grad u))^2
// by first-order updates on a coarse-to-fine pyramid.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dare/core_types.hpp"
#include "dare/regularizers.hpp"
#include "dare/similarity.hpp"

namespace dare {

enum class StepRule {
    Adam,                     // moment estimates, constant step
    GradientDescentLineSearch // backtracking (Armijo); energy never increases
};

struct RegistrationConfig {
    SimilarityConfig similarity;
    RegularizerConfig regularizer;
    int pyramid_levels = 3;
    int iters_per_level = 200;
    StepRule step_rule = StepRule::Adam;
    double step_size = 0.1; // voxels
    // Stop a level when max_v |N * dE/du(v)| falls below this (N = voxel count),
    // i.e. the gradient of the per-voxel energy density.
    double grad_tol = 1e-4;
    std::uint64_t seed = 0;
    // Called with every evaluated iterate (level in execution order). For
    // diagnostics; must not retain the reference.
    std::function<void(int level, int iteration, const DisplacementField &u)> observer;

    void validate() const;
};

struct EnergyBreakdown {
    double sim = 0.0;
    double reg = 0.0; // unweighted regularizer energy
    double strain = 0.0;
    double shear = 0.0;
    double folding = 0.0;
    double total = 0.0; // sim + weight * reg + folding
};

struct TraceRecord {
    int level = 0; // execution order: 0 is the coarsest level
    int iteration = 0;
    EnergyBreakdown energy;
};

struct LevelSummary {
    int level = 0;
    Dims dims;
    int iterations = 0;
    bool converged = false;
    double pct_jac_le0 = 0.0;
    std::size_t singular_voxels = 0; // voxels where det(I + J) hit exactly 0
};

struct OptimizationTrace {
    std::vector<TraceRecord> records;
    std::vector<LevelSummary> levels;
};

class RegistrationError : public std::runtime_error {
public:
    RegistrationError(const std::string &what, OptimizationTrace trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const OptimizationTrace &trace() const { return trace_; }

private:
    OptimizationTrace trace_;
};

EnergyBreakdown total_energy(const Volume &f, const Volume &m, const DisplacementField &u, const RegistrationConfig &cfg);

struct EnergyAndGradient {
    EnergyBreakdown energy;
    std::vector<Vec3> gradient;
    std::size_t singular_voxels = 0;
};

EnergyAndGradient energy_gradient(const Volume &f, const Volume &m, const DisplacementField &u, const RegistrationConfig &cfg);

struct RegistrationResult {
    DisplacementField u;
    OptimizationTrace trace;
};

// Registers m onto f: the result satisfies m(x + u(x)) ~ f(x).
RegistrationResult register_volumes(const Volume &f, const Volume &m, const RegistrationConfig &cfg);

// 2x box-mean downsampling; an odd trailing sample forms its own cell, so the
// output has ceil(n / 2) samples per axis. Spacing doubles. Throws when any
// input axis has fewer than 4 samples.
Volume pyramid_downsample(const Volume &v, int factor = 2);

// Trilinear upsampling of each component onto a grid with `target` dims
// (cell-centre aligned with pyramid_downsample); vectors are scaled by factor.
DisplacementField upsample_displacement(const DisplacementField &u, const Dims &target, int factor = 2);
DisplacementField upsample_displacement(const DisplacementField &u, int factor = 2);

} // namespace dare
