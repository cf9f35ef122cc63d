#include "dare/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "dare/field_ops.hpp"
#include "dare/warp.hpp"

namespace dare {

void RegistrationConfig::validate() const {
    similarity.validate();
    regularizer.validate();
    if (pyramid_levels < 1) throw std::invalid_argument("pyramid_levels must be >= 1");
    if (iters_per_level < 0) throw std::invalid_argument("iters_per_level must be >= 0");
    if (!(step_size > 0.0)) throw std::invalid_argument("step size must be > 0");
    if (!(grad_tol >= 0.0)) throw std::invalid_argument("grad_tol must be >= 0");
}

namespace {

EnergyBreakdown combine(double sim, const RegularizerTerms &reg, const RegistrationConfig &cfg) {
    EnergyBreakdown e;
    e.sim = sim;
    e.reg = reg.value;
    e.strain = reg.strain_part;
    e.shear = reg.shear_part;
    e.folding = reg.folding;
    e.total = sim + cfg.regularizer.weight * reg.value + reg.folding;
    return e;
}

bool finite(const EnergyBreakdown &e) {
    return std::isfinite(e.sim) && std::isfinite(e.reg) && std::isfinite(e.folding) && std::isfinite(e.total);
}

double scaled_max_norm(const std::vector<Vec3> &g) {
    double mx = 0.0;
    for (const Vec3 &v : g) {
        for (double c : v) {
            mx = std::max(mx, std::abs(c));
        }
    }
    return mx * static_cast<double>(g.size());
}

double pct_folded(const DisplacementField &u, const Spacing &spacing) {
    const ScalarField det = deformation_jacobian_det(displacement_jacobian(u, spacing));
    std::size_t count = 0;
    for (double d : det.values()) {
        if (d <= 0.0) {
            ++count;
        }
    }
    return 100.0 * static_cast<double>(count) / static_cast<double>(det.size());
}

struct AdamState {
    std::vector<Vec3> m1;
    std::vector<Vec3> m2;
    int t = 0;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_step(DisplacementField &u, const std::vector<Vec3> &grad, AdamState &st, double lr) {
    const double n = static_cast<double>(grad.size());
    ++st.t;
    const double c1 = 1.0 - std::pow(kBeta1, st.t);
    const double c2 = 1.0 - std::pow(kBeta2, st.t);
    for (std::size_t v = 0; v < grad.size(); ++v) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double g = grad[v][c] * n;
            st.m1[v][c] = kBeta1 * st.m1[v][c] + (1.0 - kBeta1) * g;
            st.m2[v][c] = kBeta2 * st.m2[v][c] + (1.0 - kBeta2) * g * g;
            const double mh = st.m1[v][c] / c1;
            const double vh = st.m2[v][c] / c2;
            u[v][c] -= lr * mh / (std::sqrt(vh) + kAdamEps);
        }
    }
}

DisplacementField stepped(const DisplacementField &u, const std::vector<Vec3> &dir, double t) {
    DisplacementField out = u;
    for (std::size_t v = 0; v < out.size(); ++v) {
        for (std::size_t c = 0; c < 3; ++c) {
            out[v][c] -= t * dir[v][c];
        }
    }
    return out;
}

struct LevelResult {
    DisplacementField u;
    int iterations = 0;
    bool converged = false;
    std::size_t singular = 0;
};

LevelResult optimize_level(const Volume &f, const Volume &m, DisplacementField u, const RegistrationConfig &cfg, int level,
                           OptimizationTrace &trace) {
    LevelResult res;
    AdamState adam;
    adam.m1.assign(u.size(), Vec3{0.0, 0.0, 0.0});
    adam.m2.assign(u.size(), Vec3{0.0, 0.0, 0.0});

    DisplacementField best = u;
    double best_total = 0.0;
    bool have_best = false;

    for (int it = 0;; ++it) {
        EnergyAndGradient eg = energy_gradient(f, m, u, cfg);
        if (!finite(eg.energy)) {
            throw RegistrationError("non-finite energy at level " + std::to_string(level) + ", iteration " + std::to_string(it),
                                    trace);
        }
        trace.records.push_back({level, it, eg.energy});
        if (cfg.observer) {
            cfg.observer(level, it, u);
        }
        res.singular = std::max(res.singular, eg.singular_voxels);
        if (!have_best || eg.energy.total < best_total) {
            best = u;
            best_total = eg.energy.total;
            have_best = true;
        }
        if (scaled_max_norm(eg.gradient) < cfg.grad_tol) {
            res.converged = true;
            break;
        }
        if (it >= cfg.iters_per_level) {
            break;
        }
        res.iterations = it + 1;

        if (cfg.step_rule == StepRule::Adam) {
            adam_step(u, eg.gradient, adam, cfg.step_size);
            continue;
        }

        // Armijo backtracking along the per-voxel scaled negative gradient.
        const double n = static_cast<double>(u.size());
        std::vector<Vec3> dir = eg.gradient;
        double slope = 0.0;
        for (auto &v : dir) {
            for (double &c : v) {
                slope += c * c * n;
                c *= n;
            }
        }
        double t = cfg.step_size;
        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries, t *= 0.5) {
            DisplacementField trial = stepped(u, dir, t);
            const EnergyBreakdown e = total_energy(f, m, trial, cfg);
            if (finite(e) && e.total <= eg.energy.total - 1e-4 * t * slope / n) {
                u = std::move(trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.converged = true;
            break;
        }
    }
    res.u = std::move(best);
    return res;
}

} // namespace

EnergyBreakdown total_energy(const Volume &f, const Volume &m, const DisplacementField &u, const RegistrationConfig &cfg) {
    require_same_dims(f.dims(), m.dims());
    require_same_dims(f.dims(), u.dims());
    const Volume w = warp_trilinear(m, u);
    const SimilarityResult sim = evaluate_similarity(f, w, cfg.similarity, false);
    const RegularizerTerms reg = evaluate_regularizer(u, cfg.regularizer, false, f.spacing());
    return combine(sim.value, reg, cfg);
}

EnergyAndGradient energy_gradient(const Volume &f, const Volume &m, const DisplacementField &u, const RegistrationConfig &cfg) {
    require_same_dims(f.dims(), m.dims());
    require_same_dims(f.dims(), u.dims());
    const WarpWithGradient wg = warp_trilinear_with_gradient(m, u);
    const SimilarityResult sim = evaluate_similarity(f, wg.warped, cfg.similarity, true);
    RegularizerTerms reg = evaluate_regularizer(u, cfg.regularizer, true, f.spacing());

    EnergyAndGradient out;
    out.energy = combine(sim.value, reg, cfg);
    out.singular_voxels = reg.singular_voxels;
    out.gradient = std::move(reg.grad);
    for (std::size_t v = 0; v < out.gradient.size(); ++v) {
        for (std::size_t c = 0; c < 3; ++c) {
            out.gradient[v][c] += sim.grad_w[v] * wg.d_warped_du[v][c];
        }
    }
    return out;
}

Volume pyramid_downsample(const Volume &v, int factor) {
    if (factor != 2) {
        throw std::invalid_argument("only factor 2 downsampling is supported");
    }
    const Dims &d = v.dims();
    if (d.nx < 4 || d.ny < 4 || d.nz < 4) {
        throw std::invalid_argument("dims too small for downsampling");
    }
    const Dims out_dims{(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2};
    std::vector<double> out(out_dims.voxels());
    for (int k = 0; k < out_dims.nz; ++k) {
        for (int j = 0; j < out_dims.ny; ++j) {
            for (int i = 0; i < out_dims.nx; ++i) {
                double sum = 0.0;
                int count = 0;
                for (int z = 2 * k; z <= std::min(2 * k + 1, d.nz - 1); ++z) {
                    for (int y = 2 * j; y <= std::min(2 * j + 1, d.ny - 1); ++y) {
                        for (int x = 2 * i; x <= std::min(2 * i + 1, d.nx - 1); ++x) {
                            sum += v.at(x, y, z);
                            ++count;
                        }
                    }
                }
                out[out_dims.index(i, j, k)] = sum / count;
            }
        }
    }
    const Spacing &s = v.spacing();
    return Volume(out_dims, {2.0 * s[0], 2.0 * s[1], 2.0 * s[2]}, std::move(out));
}

DisplacementField upsample_displacement(const DisplacementField &u, const Dims &target, int factor) {
    if (factor < 1) {
        throw std::invalid_argument("upsampling factor must be >= 1");
    }
    require_valid_dims(target);
    const Dims &d = u.dims();
    const double f = static_cast<double>(factor);
    // Fine sample k sits at coarse coordinate (k + 0.5) / factor - 0.5.
    auto to_coarse = [f](int k) { return (static_cast<double>(k) + 0.5) / f - 0.5; };
    std::vector<Vec3> out(target.voxels());
    for (int k = 0; k < target.nz; ++k) {
        for (int j = 0; j < target.ny; ++j) {
            for (int i = 0; i < target.nx; ++i) {
                const double p[3] = {to_coarse(i), to_coarse(j), to_coarse(k)};
                int i0[3];
                double t[3];
                for (int a = 0; a < 3; ++a) {
                    const int n = d[a];
                    const double q = std::clamp(p[a], 0.0, static_cast<double>(n - 1));
                    i0[a] = std::min(static_cast<int>(std::floor(q)), n - 2);
                    t[a] = q - i0[a];
                }
                Vec3 val{0.0, 0.0, 0.0};
                for (int dz = 0; dz < 2; ++dz) {
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const double w = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) * (dz ? t[2] : 1.0 - t[2]);
                            const Vec3 &src = u.at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                            for (std::size_t c = 0; c < 3; ++c) {
                                val[c] += w * src[c];
                            }
                        }
                    }
                }
                for (double &c : val) {
                    c *= f;
                }
                out[target.index(i, j, k)] = val;
            }
        }
    }
    return DisplacementField(target, std::move(out));
}

DisplacementField upsample_displacement(const DisplacementField &u, int factor) {
    const Dims &d = u.dims();
    return upsample_displacement(u, Dims{d.nx * factor, d.ny * factor, d.nz * factor}, factor);
}

RegistrationResult register_volumes(const Volume &f, const Volume &m, const RegistrationConfig &cfg) {
    cfg.validate();
    require_same_dims(f.dims(), m.dims());

    std::vector<Volume> fixed_pyr{f};
    std::vector<Volume> moving_pyr{m};
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        fixed_pyr.push_back(pyramid_downsample(fixed_pyr.back()));
        moving_pyr.push_back(pyramid_downsample(moving_pyr.back()));
    }

    RegistrationResult result;
    DisplacementField u = identity_displacement(fixed_pyr.back().dims());
    const int levels = cfg.pyramid_levels;
    for (int stage = 0; stage < levels; ++stage) {
        const std::size_t idx = static_cast<std::size_t>(levels - 1 - stage);
        const Volume &fl = fixed_pyr[idx];
        const Volume &ml = moving_pyr[idx];
        if (!(u.dims() == fl.dims())) {
            u = upsample_displacement(u, fl.dims(), 2);
        }
        LevelResult lr = optimize_level(fl, ml, std::move(u), cfg, stage, result.trace);
        u = std::move(lr.u);
        LevelSummary summary;
        summary.level = stage;
        summary.dims = fl.dims();
        summary.iterations = lr.iterations;
        summary.converged = lr.converged;
        summary.pct_jac_le0 = pct_folded(u, fl.spacing());
        summary.singular_voxels = lr.singular;
        result.trace.levels.push_back(summary);
    }
    result.u = std::move(u);
    return result;
}

} // namespace dare
