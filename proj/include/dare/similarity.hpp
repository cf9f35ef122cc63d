#pragma once

// Similarity energies between the fixed volume f and the warped moving volume
// w. Every loss is "lower is better" and can return its gradient with respect
// to the samples of w.

#include <span>
#include <vector>

#include "dare/core_types.hpp"

namespace dare {

enum class SimilarityKind { LNCC, LocalMI, SSD };

struct SimilarityConfig {
    SimilarityKind kind = SimilarityKind::LNCC;
    int window_radius = 3;
    int mi_bins = 32;
    double epsilon = 1e-5;

    // Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

// Kind-specific defaults: LNCC radius 3, LocalMI radius 8 with 32 bins.
SimilarityConfig default_similarity_config(SimilarityKind kind);

struct SimilarityResult {
    double value = 0.0;
    std::vector<double> grad_w; // empty unless requested
};

// 1 - mean_x NCC(x)^2 over cubic windows truncated at the grid boundary.
// Window statistics are centred sums (n * variance), each regularised by
// epsilon.
double lncc_loss(const Volume &f, const Volume &w, const SimilarityConfig &cfg);
// -mean over half-overlapping blocks of the Parzen (linear binning) mutual information.
double local_mi_loss(const Volume &f, const Volume &w, const SimilarityConfig &cfg);
double ssd_loss(const Volume &f, const Volume &w);

SimilarityResult evaluate_similarity(const Volume &f, const Volume &w, const SimilarityConfig &cfg, bool with_gradient);

// Sum over the cubic window of radius r around every voxel, truncated at the
// boundary. Exposed for tests.
std::vector<double> box_sum(std::span<const double> values, const Dims &dims, int radius);

} // namespace dare
