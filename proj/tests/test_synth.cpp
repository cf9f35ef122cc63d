#include "doctest.h"

#include <cmath>
#include <set>

#include "dare/field_ops.hpp"
#include "dare/synth.hpp"
#include "dare/warp.hpp"
#include "support/oracles.hpp"

using namespace dare;

namespace {

double min_det_oracle(const DisplacementField &u) {
    const Dims &d = u.dims();
    double out = 1e300;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i)
                out = std::min(out, oracle::det3(Mat3::identity() + oracle::jacobian_at(u, i, j, k)));
    return out;
}

double max_norm(const DisplacementField &u) {
    double m = 0;
    for (const Vec3 &v : u.vectors()) m = std::max(m, std::hypot(v[0], v[1], v[2]));
    return m;
}

} // namespace

TEST_CASE("zero amplitude gives identical volumes and a zero field") {
    SynthSpec s;
    s.dims = {12, 12, 12};
    s.max_amplitude = 0.0;
    const SynthPair p = make_pair(s);
    for (std::size_t v = 0; v < p.fixed.size(); ++v) CHECK(p.fixed[v] == p.moving[v]);
    CHECK(p.u_gt == identity_displacement(s.dims));
    CHECK(p.labels_fixed == p.labels_moving);
}

TEST_CASE("translation by one voxel shifts the fixed volume in the interior") {
    SynthSpec s;
    s.dims = {12, 10, 8};
    s.deformation = DeformationKind::Translation;
    s.translation = {1, 0, 0};
    const SynthPair p = make_pair(s);
    for (const Vec3 &v : p.u_gt.vectors()) CHECK(v == Vec3{1, 0, 0});
    for (int k = 0; k < s.dims.nz; ++k)
        for (int j = 0; j < s.dims.ny; ++j)
            for (int i = 0; i + 1 < s.dims.nx; ++i) CHECK(p.fixed.at(i, j, k) == doctest::Approx(p.moving.at(i + 1, j, k)));
}

TEST_CASE("default pair: fold-free, bounded amplitude, normalized moving texture") {
    const SynthSpec s;
    const SynthPair p = make_pair(s);
    CHECK(p.fixed.dims() == Dims{32, 32, 32});
    CHECK(min_det_oracle(p.u_gt) > kFoldFreeBound);
    CHECK(max_norm(p.u_gt) <= 3.0 + 1e-12);
    CHECK(max_norm(p.u_gt) == doctest::Approx(3.0));
    CHECK(p.moving.min() == 0.0);
    CHECK(p.moving.max() == 1.0);
    const std::set<std::int32_t> labels(p.labels_moving.labels().begin(), p.labels_moving.labels().end());
    CHECK(labels == std::set<std::int32_t>{0, 1, 2, 3});
}

TEST_CASE("same seed reproduces every array; different seeds differ") {
    SynthSpec s;
    s.dims = {16, 16, 16};
    s.seed = 42;
    const SynthPair a = make_pair(s), b = make_pair(s);
    CHECK(a.u_gt == b.u_gt);
    CHECK(a.labels_fixed == b.labels_fixed);
    for (std::size_t v = 0; v < a.fixed.size(); ++v) {
        CHECK(a.fixed[v] == b.fixed[v]);
        CHECK(a.moving[v] == b.moving[v]);
    }
    s.seed = 43;
    CHECK_FALSE(make_pair(s).u_gt == a.u_gt);
}

TEST_CASE("every emitted ground truth is fold-free and generates the fixed volume") {
    oracle::Rng rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        SynthSpec s;
        s.dims = {rng.integer(10, 18), rng.integer(10, 18), rng.integer(10, 18)};
        s.seed = static_cast<std::uint64_t>(rng.integer(0, 1 << 30));
        s.max_amplitude = rng.uniform(0.2, 2.0);
        s.sigma = rng.uniform(3.0, 6.0);
        s.bump_count = rng.integer(1, 6);
        s.texture = static_cast<TextureKind>(rng.integer(0, 2));
        SynthPair p;
        try {
            p = make_pair(s);
        } catch (const SynthError &) {
            continue;
        }
        CHECK(min_det_oracle(p.u_gt) > kFoldFreeBound);
        const Volume w = warp_trilinear(p.moving, p.u_gt);
        for (std::size_t v = 0; v < w.size(); ++v) CHECK(p.fixed[v] == w[v]);
        CHECK(warp_labels(p.labels_moving, p.u_gt) == p.labels_fixed);
    }
}

TEST_CASE("an unattainable amplitude is refused") {
    SynthSpec s;
    s.dims = {16, 16, 16};
    s.max_amplitude = 40.0;
    CHECK_THROWS_WITH_AS(make_pair(s), "could not satisfy fold-free bound; reduce amplitude", SynthError);
    s = SynthSpec{};
    s.deformation = DeformationKind::Dilation;
    s.dilation = -0.9;
    CHECK_THROWS_AS(make_pair(s), SynthError);
}

TEST_CASE("synth parameter validation") {
    SynthSpec s;
    s.sigma = 0.0;
    CHECK_THROWS_AS(make_pair(s), std::invalid_argument);
    s = SynthSpec{};
    s.max_amplitude = -1.0;
    CHECK_THROWS_AS(make_pair(s), std::invalid_argument);
    s = SynthSpec{};
    s.dims = {1, 8, 8};
    CHECK_THROWS_AS(make_pair(s), std::invalid_argument);
}

TEST_CASE("endpoint error examples") {
    Dims d{4, 4, 4};
    const DisplacementField z = identity_displacement(d);
    EndpointError e = endpoint_error(z, z);
    CHECK(e.mean == 0.0);
    CHECK(e.max == 0.0);
    e = endpoint_error(oracle::constant_field(d, {3, 4, 0}), z);
    CHECK(e.mean == doctest::Approx(5.0));
    CHECK(e.max == doctest::Approx(5.0));

    DisplacementField one = z;
    one[0] = {0, 0, 2};
    std::vector<std::uint8_t> mask(d.voxels(), 0);
    mask[0] = mask[1] = 1;
    e = endpoint_error(one, z, mask);
    CHECK(e.mean == doctest::Approx(1.0));
    CHECK(e.max == doctest::Approx(2.0));
    CHECK(endpoint_error(one, z).mean == doctest::Approx(2.0 / 64));
    CHECK_THROWS_AS(endpoint_error(one, z, std::vector<std::uint8_t>(3, 1)), ShapeError);
}

TEST_CASE("foreground mask marks non-background labels") {
    const LabelMap l({2, 2, 2}, {0, 3, 0, 1, 0, 0, 2, 0});
    CHECK(foreground_mask(l) == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 0, 1, 0});
}
