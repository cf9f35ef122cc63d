#include "dare/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dare/parallel.hpp"

namespace dare {

void SimilarityConfig::validate() const {
    if (window_radius < 1) {
        throw std::invalid_argument("window_radius must be >= 1");
    }
    if (mi_bins < 4) {
        throw std::invalid_argument("mi_bins must be >= 4");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("epsilon must be > 0");
    }
}

SimilarityConfig default_similarity_config(SimilarityKind kind) {
    SimilarityConfig cfg;
    cfg.kind = kind;
    if (kind == SimilarityKind::LocalMI) {
        cfg.window_radius = 8;
    }
    return cfg;
}

std::vector<double> box_sum(std::span<const double> values, const Dims &dims, int radius) {
    std::vector<double> cur(values.begin(), values.end());
    std::vector<double> next(cur.size());
    for (int axis = 0; axis < 3; ++axis) {
        const int n = dims[axis];
        const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.nx)
                                                              : static_cast<std::size_t>(dims.nx) * static_cast<std::size_t>(dims.ny));
        // Enumerate line starts: all voxels whose coordinate along axis is 0.
        const int lines_a = axis == 0 ? dims.ny : dims.nx;
        const int lines_b = axis == 2 ? dims.ny : dims.nz;
        parallel_for(0, lines_b, [&](int b) {
            std::vector<double> prefix(static_cast<std::size_t>(n) + 1);
            for (int a = 0; a < lines_a; ++a) {
                std::size_t start = 0;
                if (axis == 0) start = dims.index(0, a, b);
                if (axis == 1) start = dims.index(a, 0, b);
                if (axis == 2) start = dims.index(a, b, 0);
                prefix[0] = 0.0;
                for (int t = 0; t < n; ++t) {
                    prefix[static_cast<std::size_t>(t) + 1] = prefix[static_cast<std::size_t>(t)] + cur[start + static_cast<std::size_t>(t) * stride];
                }
                for (int t = 0; t < n; ++t) {
                    const int lo = std::max(0, t - radius);
                    const int hi = std::min(n - 1, t + radius);
                    next[start + static_cast<std::size_t>(t) * stride] =
                        prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)];
                }
            }
        });
        std::swap(cur, next);
    }
    return cur;
}

namespace {

int window_count(int t, int n, int r) { return std::min(n - 1, t + r) - std::max(0, t - r) + 1; }

SimilarityResult lncc_impl(const Volume &f, const Volume &w, const SimilarityConfig &cfg, bool with_gradient) {
    const Dims &d = f.dims();
    const std::size_t nvox = d.voxels();
    const int r = cfg.window_radius;
    const double eps = cfg.epsilon;

    std::vector<double> ff(nvox), ww(nvox), fw(nvox);
    for (std::size_t v = 0; v < nvox; ++v) {
        ff[v] = f[v] * f[v];
        ww[v] = w[v] * w[v];
        fw[v] = f[v] * w[v];
    }
    const std::vector<double> sf = box_sum(f.data(), d, r);
    const std::vector<double> sw = box_sum(w.data(), d, r);
    const std::vector<double> sff = box_sum(ff, d, r);
    const std::vector<double> sww = box_sum(ww, d, r);
    const std::vector<double> sfw = box_sum(fw, d, r);

    std::vector<double> cc(nvox);
    std::vector<double> a_coef, b_coef, c_coef;
    if (with_gradient) {
        a_coef.resize(nvox);
        b_coef.resize(nvox);
        c_coef.resize(nvox);
    }
    for (int k = 0; k < d.nz; ++k) {
        const int ck = window_count(k, d.nz, r);
        for (int j = 0; j < d.ny; ++j) {
            const int cj = window_count(j, d.ny, r);
            for (int i = 0; i < d.nx; ++i) {
                const std::size_t v = d.index(i, j, k);
                const double n = static_cast<double>(window_count(i, d.nx, r) * cj * ck);
                const double cross = sfw[v] - sf[v] * sw[v] / n;
                const double vf = sff[v] - sf[v] * sf[v] / n + eps;
                const double vw = sww[v] - sw[v] * sw[v] / n + eps;
                const double denom = vf * vw;
                const double value = cross * cross / denom;
                cc[v] = value;
                if (with_gradient) {
                    a_coef[v] = -2.0 * cross * sf[v] / (n * denom) + 2.0 * value * sw[v] / (n * vw);
                    b_coef[v] = -value / vw;
                    c_coef[v] = 2.0 * cross / denom;
                }
            }
        }
    }

    SimilarityResult res;
    res.value = 1.0 - mean_of(cc);
    if (with_gradient) {
        const std::vector<double> ba = box_sum(a_coef, d, r);
        const std::vector<double> bb = box_sum(b_coef, d, r);
        const std::vector<double> bc = box_sum(c_coef, d, r);
        res.grad_w.resize(nvox);
        const double scale = -1.0 / static_cast<double>(nvox);
        for (std::size_t v = 0; v < nvox; ++v) {
            res.grad_w[v] = scale * (ba[v] + 2.0 * w[v] * bb[v] + f[v] * bc[v]);
        }
    }
    return res;
}

// Block start positions along one axis: 0, r, 2r, ... until a block of
// extent 2r + 1 reaches the last sample.
std::vector<int> block_starts(int n, int r) {
    std::vector<int> starts;
    for (int s = 0;; s += r) {
        starts.push_back(s);
        if (s + 2 * r >= n - 1) {
            break;
        }
    }
    return starts;
}

struct BinWeights {
    int b0;
    double w0;
    double w1;
};

BinWeights bin_of(double value, int bins) {
    const double t = std::clamp(value, 0.0, 1.0) * static_cast<double>(bins - 1);
    const int b0 = std::min(static_cast<int>(std::floor(t)), bins - 2);
    const double frac = t - static_cast<double>(b0);
    return {b0, 1.0 - frac, frac};
}

SimilarityResult local_mi_impl(const Volume &f, const Volume &w, const SimilarityConfig &cfg, bool with_gradient) {
    const Dims &d = f.dims();
    const int r = cfg.window_radius;
    const int bins = cfg.mi_bins;
    const std::size_t nb = static_cast<std::size_t>(bins);

    const std::vector<int> sx = block_starts(d.nx, r);
    const std::vector<int> sy = block_starts(d.ny, r);
    const std::vector<int> sz = block_starts(d.nz, r);
    const double block_count = static_cast<double>(sx.size() * sy.size() * sz.size());

    SimilarityResult res;
    if (with_gradient) {
        res.grad_w.assign(d.voxels(), 0.0);
    }

    std::vector<double> mi_values;
    std::vector<double> joint(nb * nb);
    std::vector<double> pa(nb), pb(nb), log_ratio(nb * nb);
    std::vector<std::size_t> members;

    for (int z0 : sz) {
        for (int y0 : sy) {
            for (int x0 : sx) {
                members.clear();
                for (int k = z0; k <= std::min(d.nz - 1, z0 + 2 * r); ++k) {
                    for (int j = y0; j <= std::min(d.ny - 1, y0 + 2 * r); ++j) {
                        for (int i = x0; i <= std::min(d.nx - 1, x0 + 2 * r); ++i) {
                            members.push_back(d.index(i, j, k));
                        }
                    }
                }
                const double n = static_cast<double>(members.size());
                std::fill(joint.begin(), joint.end(), 0.0);
                for (std::size_t v : members) {
                    const BinWeights a = bin_of(f[v], bins);
                    const BinWeights b = bin_of(w[v], bins);
                    const std::size_t a0 = static_cast<std::size_t>(a.b0), b0 = static_cast<std::size_t>(b.b0);
                    joint[a0 * nb + b0] += a.w0 * b.w0;
                    joint[a0 * nb + b0 + 1] += a.w0 * b.w1;
                    joint[(a0 + 1) * nb + b0] += a.w1 * b.w0;
                    joint[(a0 + 1) * nb + b0 + 1] += a.w1 * b.w1;
                }
                std::fill(pa.begin(), pa.end(), 0.0);
                std::fill(pb.begin(), pb.end(), 0.0);
                for (std::size_t x = 0; x < nb; ++x) {
                    for (std::size_t y = 0; y < nb; ++y) {
                        joint[x * nb + y] /= n;
                        pa[x] += joint[x * nb + y];
                        pb[y] += joint[x * nb + y];
                    }
                }
                double mi = 0.0;
                for (std::size_t x = 0; x < nb; ++x) {
                    for (std::size_t y = 0; y < nb; ++y) {
                        const double p = joint[x * nb + y];
                        log_ratio[x * nb + y] = p > 0.0 ? std::log(p / (pa[x] * pb[y])) : 0.0;
                        mi += p * log_ratio[x * nb + y];
                    }
                }
                mi_values.push_back(mi);

                if (with_gradient) {
                    // d MI / d p_ab = log(p_ab / (p_a p_b)) - 1; the constant
                    // cancels because moving a sample between bins preserves mass.
                    const double scale = -static_cast<double>(bins - 1) / (n * block_count);
                    for (std::size_t v : members) {
                        const BinWeights a = bin_of(f[v], bins);
                        const BinWeights b = bin_of(w[v], bins);
                        const std::size_t a0 = static_cast<std::size_t>(a.b0), b0 = static_cast<std::size_t>(b.b0);
                        const double row0 = log_ratio[a0 * nb + b0 + 1] - log_ratio[a0 * nb + b0];
                        const double row1 = log_ratio[(a0 + 1) * nb + b0 + 1] - log_ratio[(a0 + 1) * nb + b0];
                        double g = a.w0 * row0 + a.w1 * row1;
                        if (w[v] < 0.0 || w[v] > 1.0) {
                            g = 0.0;
                        }
                        res.grad_w[v] += scale * g;
                    }
                }
            }
        }
    }
    res.value = -mean_of(mi_values);
    return res;
}

SimilarityResult ssd_impl(const Volume &f, const Volume &w, bool with_gradient) {
    const std::size_t nvox = f.size();
    std::vector<double> sq(nvox);
    for (std::size_t v = 0; v < nvox; ++v) {
        const double diff = w[v] - f[v];
        sq[v] = diff * diff;
    }
    SimilarityResult res;
    res.value = mean_of(sq);
    if (with_gradient) {
        res.grad_w.resize(nvox);
        const double scale = 2.0 / static_cast<double>(nvox);
        for (std::size_t v = 0; v < nvox; ++v) {
            res.grad_w[v] = scale * (w[v] - f[v]);
        }
    }
    return res;
}

} // namespace

SimilarityResult evaluate_similarity(const Volume &f, const Volume &w, const SimilarityConfig &cfg, bool with_gradient) {
    require_same_dims(f.dims(), w.dims());
    cfg.validate();
    switch (cfg.kind) {
    case SimilarityKind::LNCC:
        return lncc_impl(f, w, cfg, with_gradient);
    case SimilarityKind::LocalMI:
        return local_mi_impl(f, w, cfg, with_gradient);
    case SimilarityKind::SSD:
        return ssd_impl(f, w, with_gradient);
    }
    throw std::invalid_argument("unknown similarity kind");
}

double lncc_loss(const Volume &f, const Volume &w, const SimilarityConfig &cfg) {
    SimilarityConfig c = cfg;
    c.kind = SimilarityKind::LNCC;
    return evaluate_similarity(f, w, c, false).value;
}

double local_mi_loss(const Volume &f, const Volume &w, const SimilarityConfig &cfg) {
    SimilarityConfig c = cfg;
    c.kind = SimilarityKind::LocalMI;
    return evaluate_similarity(f, w, c, false).value;
}

double ssd_loss(const Volume &f, const Volume &w) {
    SimilarityConfig c;
    c.kind = SimilarityKind::SSD;
    return evaluate_similarity(f, w, c, false).value;
}

} // namespace dare
