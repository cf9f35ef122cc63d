#include "doctest.h"

#include <cmath>

#include "dare/similarity.hpp"
#include "support/oracles.hpp"

using namespace dare;

namespace {

SimilarityConfig lncc_cfg(int r = 3) {
    SimilarityConfig c = default_similarity_config(SimilarityKind::LNCC);
    c.window_radius = r;
    return c;
}

SimilarityConfig mi_cfg(int r, int bins) {
    SimilarityConfig c = default_similarity_config(SimilarityKind::LocalMI);
    c.window_radius = r;
    c.mi_bins = bins;
    return c;
}

Volume map_values(const Volume &v, double (*fn)(double)) {
    std::vector<double> data(v.data().begin(), v.data().end());
    for (double &x : data) x = fn(x);
    return Volume(v.dims(), v.spacing(), std::move(data));
}

Volume ramp(const Dims &d) {
    std::vector<double> data(d.voxels());
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) data[d.index(i, j, k)] = double(i + j + k) / (d.nx + d.ny + d.nz - 3);
    return Volume(d, {1, 1, 1}, std::move(data));
}

} // namespace

TEST_CASE("config defaults and validation") {
    CHECK(default_similarity_config(SimilarityKind::LNCC).window_radius == 3);
    const SimilarityConfig mi = default_similarity_config(SimilarityKind::LocalMI);
    CHECK(mi.window_radius == 8);
    CHECK(mi.mi_bins == 32);
    CHECK(mi.epsilon == 1e-5);
    SimilarityConfig bad;
    bad.window_radius = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = SimilarityConfig{};
    bad.mi_bins = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = SimilarityConfig{};
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("box_sum equals direct window sums") {
    oracle::Rng rng(1);
    Dims d{6, 5, 7};
    const Volume v = oracle::random_volume(d, rng);
    for (int r : {1, 2, 4}) {
        const std::vector<double> s = box_sum(v.data(), d, r);
        for (int k = 0; k < d.nz; ++k)
            for (int j = 0; j < d.ny; ++j)
                for (int i = 0; i < d.nx; ++i) {
                    double ref = 0;
                    for (int c = std::max(0, k - r); c <= std::min(d.nz - 1, k + r); ++c)
                        for (int b = std::max(0, j - r); b <= std::min(d.ny - 1, j + r); ++b)
                            for (int a = std::max(0, i - r); a <= std::min(d.nx - 1, i + r); ++a) ref += v.at(a, b, c);
                    CHECK(s[d.index(i, j, k)] == doctest::Approx(ref).epsilon(1e-12));
                }
    }
}

TEST_CASE("LNCC matches the direct windowed-statistics oracle") {
    oracle::Rng rng(2);
    Dims d{7, 6, 8};
    for (int trial = 0; trial < 4; ++trial) {
        const Volume f = oracle::smooth_volume(d, rng);
        const Volume w = oracle::random_volume(d, rng);
        for (int r : {1, 3}) {
            CHECK(lncc_loss(f, w, lncc_cfg(r)) == doctest::Approx(oracle::lncc(f, w, r, 1e-5)).epsilon(1e-10));
        }
    }
}

TEST_CASE("LNCC of a volume with itself or its negative is ~0") {
    oracle::Rng rng(3);
    Dims d{10, 9, 8};
    for (int trial = 0; trial < 5; ++trial) {
        const Volume f = oracle::smooth_volume(d, rng);
        const Volume neg = map_values(f, [](double x) { return 1.0 - x; });
        // With eps on each windowed variance S the self loss is
        // mean(1 - (S / (S + eps))^2), about 2 eps / S: small but not zero.
        const double self = lncc_loss(f, f, lncc_cfg());
        CHECK(self == doctest::Approx(oracle::lncc(f, f, 3, 1e-5)).epsilon(1e-10));
        CHECK(self >= 0.0);
        CHECK(self <= 1e-5);
        CHECK(std::abs(lncc_loss(f, neg, lncc_cfg()) - self) <= 1e-12);
        SimilarityConfig tight = lncc_cfg();
        tight.epsilon = 1e-8;
        CHECK(lncc_loss(f, f, tight) <= 1e-6);
        CHECK(lncc_loss(f, neg, tight) <= 1e-6);
    }
    // well-textured input reaches the bound at the default eps
    const Volume noise = oracle::random_volume({32, 32, 32}, rng);
    CHECK(lncc_loss(noise, noise, lncc_cfg()) <= 1e-6);
}

TEST_CASE("LNCC of a ramp against uniform noise lies in (0.5, 1]") {
    oracle::Rng rng(4);
    Dims d{16, 16, 16};
    const Volume f = ramp(d);
    const Volume w = oracle::random_volume(d, rng);
    const double loss = lncc_loss(f, w, lncc_cfg(3));
    CHECK(loss == doctest::Approx(oracle::lncc(f, w, 3, 1e-5)).epsilon(1e-10));
    CHECK(loss > 0.5);
    CHECK(loss <= 1.0);
}

TEST_CASE("LNCC is invariant to positive affine remaps of w") {
    oracle::Rng rng(5);
    Dims d{9, 8, 7};
    for (int trial = 0; trial < 5; ++trial) {
        const Volume f = oracle::smooth_volume(d, rng);
        const Volume w = oracle::smooth_volume(d, rng);
        const double a = rng.uniform(0.3, 1.0), b = rng.uniform(0.0, 1.0 - a);
        std::vector<double> remapped(w.data().begin(), w.data().end());
        for (double &x : remapped) x = b + a * x;
        // the remap is undone by min-max normalization
        const Volume w2 = normalize_intensity(Volume(d, {1, 1, 1}, remapped));
        CHECK(std::abs(lncc_loss(f, w2, lncc_cfg()) - lncc_loss(f, w, lncc_cfg())) <= 1e-6);
    }
}

TEST_CASE("SSD examples") {
    Dims d{2, 2, 2};
    const Volume zero(d, {1, 1, 1});
    const Volume one(d, {1, 1, 1}, std::vector<double>(8, 1.0));
    std::vector<double> spike(8, 0.0);
    spike[5] = 1.0;
    CHECK(ssd_loss(one, one) == 0.0);
    CHECK(ssd_loss(zero, one) == 1.0);
    CHECK(ssd_loss(zero, Volume(d, {1, 1, 1}, spike)) == 0.125);
}

TEST_CASE("SSD is non-negative and zero only for equal volumes") {
    oracle::Rng rng(6);
    Dims d{4, 4, 4};
    for (int trial = 0; trial < 20; ++trial) {
        const Volume f = oracle::random_volume(d, rng);
        const Volume w = oracle::random_volume(d, rng);
        CHECK(ssd_loss(f, w) > 0.0);
        CHECK(ssd_loss(f, f) == 0.0);
    }
}

TEST_CASE("local MI matches the kernel-form Parzen oracle") {
    oracle::Rng rng(7);
    Dims d{9, 8, 10};
    for (int trial = 0; trial < 3; ++trial) {
        const Volume f = oracle::smooth_volume(d, rng);
        const Volume w = oracle::random_volume(d, rng);
        for (auto [r, bins] : {std::pair{2, 8}, std::pair{3, 16}}) {
            CHECK(local_mi_loss(f, w, mi_cfg(r, bins)) == doctest::Approx(oracle::local_mi(f, w, r, bins)).epsilon(1e-10));
        }
    }
}

TEST_CASE("local MI examples") {
    Dims d{16, 16, 16};
    oracle::Rng rng(8);
    const Volume f = oracle::random_volume(d, rng);
    const SimilarityConfig cfg = mi_cfg(4, 16);
    CHECK(local_mi_loss(f, f, cfg) < 0.0);

    const Volume constant(d, {1, 1, 1}, std::vector<double>(d.voxels(), 0.37));
    CHECK(std::abs(local_mi_loss(f, constant, cfg)) <= 1e-12);
}

TEST_CASE("local MI of a squared smooth volume is within 5% of self-MI") {
    // f^2 crowds low intensities into fewer bins, so the binned MI loses a
    // few percent; one excursion in 20 is tolerated, none beyond 10%.
    Dims d{16, 16, 16};
    const SimilarityConfig cfg = default_similarity_config(SimilarityKind::LocalMI);
    int outside = 0;
    for (std::uint64_t seed = 20; seed < 40; ++seed) {
        oracle::Rng rng(seed);
        const Volume f = oracle::smooth_volume(d, rng);
        const Volume squared = map_values(f, [](double x) { return x * x; });
        const double self = local_mi_loss(f, f, cfg);
        const double remap = local_mi_loss(f, squared, cfg);
        CHECK(remap == doctest::Approx(oracle::local_mi(f, squared, cfg.window_radius, cfg.mi_bins)).epsilon(1e-10));
        CAPTURE(seed);
        CHECK(std::abs(remap - self) <= 0.10 * std::abs(self));
        if (std::abs(remap - self) > 0.05 * std::abs(self)) ++outside;
    }
    CHECK(outside <= 1);
}

TEST_CASE("local MI of independent volumes is not below self-MI") {
    Dims d{16, 16, 16};
    const SimilarityConfig cfg = default_similarity_config(SimilarityKind::LocalMI);
    int failures = 0;
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        oracle::Rng rng(seed);
        const Volume f = oracle::random_volume(d, rng);
        const Volume w = oracle::random_volume(d, rng);
        if (!(local_mi_loss(f, w, cfg) >= local_mi_loss(f, f, cfg))) ++failures;
        CHECK(local_mi_loss(f, w, cfg) <= 0.0);
    }
    CHECK(failures <= 1);
}

TEST_CASE("similarity gradients match finite differences") {
    oracle::Rng rng(9);
    Dims d{6, 5, 7};
    const Volume f = oracle::smooth_volume(d, rng);
    const Volume w = oracle::smooth_volume(d, rng);
    for (SimilarityConfig cfg : {lncc_cfg(2), mi_cfg(2, 8), default_similarity_config(SimilarityKind::SSD)}) {
        const SimilarityResult res = evaluate_similarity(f, w, cfg, true);
        CHECK(res.value == doctest::Approx(evaluate_similarity(f, w, cfg, false).value));
        REQUIRE(res.grad_w.size() == w.size());
        const double h = 1e-6;
        for (std::size_t v = 0; v < w.size(); v += 11) {
            std::vector<double> p(w.data().begin(), w.data().end()), q = p;
            p[v] += h;
            q[v] -= h;
            const double fd = (evaluate_similarity(f, Volume(d, {1, 1, 1}, p), cfg, false).value -
                               evaluate_similarity(f, Volume(d, {1, 1, 1}, q), cfg, false).value) /
                              (2 * h);
            CHECK(oracle::rel_err(res.grad_w[v], fd) <= 1e-4);
        }
    }
}

TEST_CASE("dims mismatch is rejected") {
    const Volume a({3, 3, 3}, {1, 1, 1}), b({3, 4, 3}, {1, 1, 1});
    CHECK_THROWS_AS(lncc_loss(a, b, lncc_cfg()), ShapeError);
    CHECK_THROWS_AS(local_mi_loss(a, b, mi_cfg(2, 8)), ShapeError);
    CHECK_THROWS_AS(ssd_loss(a, b), ShapeError);
}
