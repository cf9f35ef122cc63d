#include "dare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dare/field_ops.hpp"
#include "dare/warp.hpp"

namespace dare {

namespace {

constexpr int kHistogramBins = 64;

std::size_t bin_index(double v, double lo, double hi, int bins) {
    if (!(hi > lo)) {
        return 0;
    }
    const double t = (v - lo) / (hi - lo) * bins;
    return static_cast<std::size_t>(std::clamp(static_cast<int>(std::floor(t)), 0, bins - 1));
}

} // namespace

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

DiceResult dice(const LabelMap &a, const LabelMap &b) {
    require_same_dims(a.dims(), b.dims());
    std::map<std::int32_t, std::size_t> count_a, count_b, overlap;
    for (std::size_t v = 0; v < a.labels().size(); ++v) {
        const std::int32_t la = a[v];
        const std::int32_t lb = b[v];
        if (la != 0) ++count_a[la];
        if (lb != 0) ++count_b[lb];
        if (la != 0 && la == lb) ++overlap[la];
    }
    std::set<std::int32_t> labels;
    for (const auto &[l, n] : count_a) labels.insert(l);
    for (const auto &[l, n] : count_b) labels.insert(l);

    DiceResult res;
    double sum = 0.0;
    std::size_t present = 0;
    for (std::int32_t l : labels) {
        const double na = static_cast<double>(count_a[l]);
        const double nb = static_cast<double>(count_b[l]);
        const double d = 2.0 * static_cast<double>(overlap[l]) / (na + nb);
        res.per_label[l] = d;
        if (count_a[l] > 0) {
            sum += d;
            ++present;
        }
    }
    res.mean = present > 0 ? sum / static_cast<double>(present) : 0.0;
    return res;
}

JacobianStats jacobian_stats(const DisplacementField &u, const Spacing &spacing) {
    const ScalarField det = deformation_jacobian_det(displacement_jacobian(u, spacing));
    std::size_t ge1 = 0, le0 = 0, mid = 0;
    double min_det = det[0];
    for (double d : det.values()) {
        if (d >= 1.0) {
            ++ge1;
        } else if (d <= 0.0) {
            ++le0;
        } else {
            ++mid;
        }
        min_det = std::min(min_det, d);
    }
    const double n = static_cast<double>(det.size());
    JacobianStats s;
    s.pct_ge1 = 100.0 * static_cast<double>(ge1) / n;
    s.pct_le0 = 100.0 * static_cast<double>(le0) / n;
    s.pct_in_0_1 = 100.0 * static_cast<double>(mid) / n;
    s.min_det = min_det;
    if (min_det < 0.0) {
        s.neg_histogram.lo = min_det;
        s.neg_histogram.hi = 0.0;
        s.neg_histogram.counts.assign(kHistogramBins, 0);
        for (double d : det.values()) {
            if (d < 0.0) {
                ++s.neg_histogram.counts[bin_index(d, min_det, 0.0, kHistogramBins)];
            }
        }
    }
    return s;
}

double strain_energy_metric(const DisplacementField &u, const Spacing &spacing) {
    const TensorField eta = strain_tensor(displacement_jacobian(u, spacing));
    std::vector<double> density(eta.size());
    for (std::size_t v = 0; v < density.size(); ++v) {
        const double tr = eta[v].trace();
        density[v] = tr * tr + eta[v].frobenius_sq();
    }
    return mean_of(density);
}

StrainDistribution strain_distribution(const DisplacementField &u, double threshold, const Spacing &spacing) {
    const TensorField eta = strain_tensor(displacement_jacobian(u, spacing));
    std::vector<double> mag(eta.size());
    for (std::size_t v = 0; v < mag.size(); ++v) {
        mag[v] = std::sqrt(eta[v].frobenius_sq());
    }
    StrainDistribution out;
    const auto [lo, hi] = std::minmax_element(mag.begin(), mag.end());
    out.histogram.lo = *lo;
    out.histogram.hi = *hi;
    out.histogram.counts.assign(kHistogramBins, 0);
    out.exceed_mask.assign(mag.size(), 0);
    for (std::size_t v = 0; v < mag.size(); ++v) {
        ++out.histogram.counts[bin_index(mag[v], *lo, *hi, kHistogramBins)];
        if (mag[v] > threshold) {
            out.exceed_mask[v] = 1;
            ++out.exceed_count;
        }
    }
    return out;
}

std::map<std::int32_t, VolumeChange> volume_change(const LabelMap &moving_labels, const DisplacementField &u,
                                                   const std::vector<std::int32_t> &structures) {
    const LabelMap warped = warp_labels(moving_labels, u);
    std::map<std::int32_t, std::size_t> before, after;
    for (std::size_t v = 0; v < warped.labels().size(); ++v) {
        ++before[moving_labels[v]];
        ++after[warped[v]];
    }
    std::map<std::int32_t, VolumeChange> out;
    for (std::int32_t s : structures) {
        VolumeChange vc;
        vc.moving_voxels = before.count(s) ? before[s] : 0;
        vc.warped_voxels = after.count(s) ? after[s] : 0;
        if (vc.moving_voxels > 0) {
            const double vm = static_cast<double>(vc.moving_voxels);
            vc.percent = 100.0 * std::abs(static_cast<double>(vc.warped_voxels) - vm) / vm;
        }
        out[s] = vc;
    }
    return out;
}

std::vector<CurvePoint> parameter_curves(const AdaptiveParams &p, double g_max, int points) {
    if (points < 2) {
        throw std::invalid_argument("curve needs at least 2 points");
    }
    std::vector<CurvePoint> out;
    out.reserve(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) {
        const double g = g_max * static_cast<double>(k) / static_cast<double>(points - 1);
        out.push_back({g, lambda_hat(g, p), mu_hat(g, p), alpha_hat(g, p)});
    }
    return out;
}

ParameterEnergyTable parameter_energy_table(const DisplacementField &u, const AdaptiveParams &p, double g_max,
                                            const Spacing &spacing) {
    p.validate();
    const TensorField jac = displacement_jacobian(u, spacing);
    ParameterEnergyTable table;
    table.records.reserve(jac.size());
    for (std::size_t v = 0; v < jac.size(); ++v) {
        const Mat3 &j = jac[v];
        const Mat3 eta = (j + j.transposed()) * 0.5;
        const double tr = eta.trace();
        ParameterRecord r;
        r.g = std::sqrt(j.frobenius_sq());
        r.lambda = lambda_hat(r.g, p);
        r.mu = mu_hat(r.g, p);
        r.alpha = alpha_hat(r.g, p);
        r.e_strain = r.lambda * tr * tr;
        r.e_shear = r.mu * eta.frobenius_sq();
        r.e_total = r.e_strain + r.e_shear;
        const double neg = std::max(0.0, -(Mat3::identity() + j).determinant());
        r.folding = p.c * neg * neg;
        table.records.push_back(r);
    }
    table.curves = parameter_curves(p, g_max);
    return table;
}

MetricsReport evaluate_registration(const LabelMap &fixed_labels, const LabelMap &moving_labels, const DisplacementField &u,
                                    const std::vector<std::int32_t> &structures, const Spacing &spacing) {
    require_same_dims(fixed_labels.dims(), moving_labels.dims());
    require_same_dims(fixed_labels.dims(), u.dims());
    MetricsReport r;
    r.dice = dice(fixed_labels, warp_labels(moving_labels, u));
    r.jacobian = jacobian_stats(u, spacing);
    r.strain_energy = strain_energy_metric(u, spacing);
    r.strain = strain_distribution(u, 1.0, spacing);
    r.volume_changes = volume_change(moving_labels, u, structures);
    return r;
}

} // namespace dare
