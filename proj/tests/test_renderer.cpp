#include <gtest/gtest.h>

#include <sstream>

#include "rmap/bvh.hpp"
#include "rmap/errors.hpp"
#include "rmap/metrics.hpp"
#include "rmap/parallel.hpp"
#include "rmap/renderer.hpp"
#include "test_util.hpp"

using namespace rmap;

namespace {

Camera front_camera(int w = 64, int h = 64, double dist = 4.0) {
    return Camera::orbit({0.0, 0.0, dist, {}}, 35.0 * kPi / 180.0, w, h);
}

double mean_abs_co_occupied(const ReflectanceMap &a, const ReflectanceMap &b, int &n) {
    double s = 0;
    n = 0;
    for (const auto &cell : a.cells()) {
        Texel t = a.texel_of(cell);
        if (b.count(t) == 0)
            continue;
        Rgb d = a.mean(t) - b.mean(t);
        s += std::abs(d.r) + std::abs(d.g) + std::abs(d.b);
        n += 3;
    }
    return n ? s / n : 0.0;
}

} // namespace

TEST(Camera, CenterAndAxes) {
    Camera c = Camera::orbit({kPi / 3, kPi / 4, 5.0, {0.1, 0.2, 0.3}}, 0.6, 32, 24);
    Vec3 expected = Vec3{0.1, 0.2, 0.3} +
                    Vec3{std::sin(kPi / 3) * std::cos(kPi / 4), std::sin(kPi / 3) * std::sin(kPi / 4), std::cos(kPi / 3)} *
                        5.0;
    EXPECT_LT(length(c.center() - expected), 1e-12);
    EXPECT_LT(length(c.forward() - normalize(Vec3{0.1, 0.2, 0.3} - expected)), 1e-12);
    // Projection of the look-at point lands at the image center.
    auto p = c.project({0.1, 0.2, 0.3});
    ASSERT_TRUE(p);
    EXPECT_NEAR((*p)[0], 16.0, 1e-9);
    EXPECT_NEAR((*p)[1], 12.0, 1e-9);
    EXPECT_THROW(Camera::orbit({0, 0, 0.0, {}}, 0.6, 32, 32), std::invalid_argument);
    EXPECT_THROW(Camera::orbit({0, 0, 1.0, {}}, 0.0, 32, 32), std::invalid_argument);
    EXPECT_THROW(Camera::orbit({0, 0, 1.0, {}}, 0.6, 0, 32), std::invalid_argument);
}

TEST(Camera, RayProjectRoundTrip) {
    Camera c = Camera::orbit({1.1, 2.0, 3.0, {}}, 0.7, 40, 30);
    for (int y = 0; y < 30; y += 7)
        for (int x = 0; x < 40; x += 9) {
            Ray r = c.generate_ray(x, y);
            EXPECT_NEAR(length(r.dir), 1.0, 1e-12);
            auto p = c.project(r.origin + r.dir * 2.5);
            ASSERT_TRUE(p);
            EXPECT_NEAR((*p)[0], x + 0.5, 1e-9);
            EXPECT_NEAR((*p)[1], y + 0.5, 1e-9);
        }
}

TEST(Mesh, ObjRoundTripAndErrors) {
    TriangleMesh m = make_icosphere(1);
    std::stringstream ss;
    write_obj(ss, m);
    EXPECT_EQ(read_obj(ss), m);
    std::stringstream quad("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    try {
        read_obj(quad, "quad.obj");
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 5);
    }
    std::stringstream bad("v 0 0 0\nv 1 0 0\nf 1 2 9\n");
    EXPECT_THROW(read_obj(bad), ParseError);
    std::stringstream slashes("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//2 -1\n");
    TriangleMesh s = read_obj(slashes);
    ASSERT_EQ(s.face_count(), 1u);
    EXPECT_EQ(s.faces()[0], (Face{0, 1, 2}));
}

TEST(Mesh, DegenerateFacesDropped) {
    TriangleMesh m({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 1, 3}});
    EXPECT_EQ(m.face_count(), 1u);
    EXPECT_EQ(m.dropped_faces(), 1u);
    EXPECT_THROW(TriangleMesh({{0, 0, 0}}, {{0, 0, 3}}), std::invalid_argument);
}

TEST(Mesh, IcosphereOutwardAndCounts) {
    for (int s = 0; s < 4; ++s) {
        TriangleMesh m = make_icosphere(s);
        EXPECT_EQ(m.face_count(), 20u * (1u << (2 * s)));
        for (std::uint32_t f = 0; f < m.face_count(); ++f)
            EXPECT_GT(dot(m.normal(f), m.centroid(f)), 0.0);
        for (const Vec3 &v : m.vertices())
            EXPECT_NEAR(length(v), 1.0, 1e-12);
    }
}

TEST(Bvh, MatchesBruteForceOnRandomMeshes) {
    test::Rng rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Vec3> v;
        std::vector<Face> f;
        int nf = 1 + int(rng() % 50);
        for (int i = 0; i < nf; ++i) {
            Vec3 c{u(rng), u(rng), u(rng)};
            for (int k = 0; k < 3; ++k)
                v.push_back(c + Vec3{u(rng), u(rng), u(rng)} * 0.4);
            f.push_back({std::uint32_t(3 * i), std::uint32_t(3 * i + 1), std::uint32_t(3 * i + 2)});
        }
        // Duplicate a face to exercise equal-t ties.
        if (nf > 2)
            f.push_back(f[1]);
        TriangleMesh mesh(v, f);
        Bvh bvh(mesh);
        Camera cam = Camera::orbit({0.3 + trial * 0.05, trial * 0.4, 4.0, {}}, 0.8, 24, 24);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) {
                Ray r = cam.generate_ray(x, y);
                auto a = bvh.intersect(r), b = intersect_brute_force(mesh, r);
                ASSERT_EQ(a.has_value(), b.has_value());
                if (a) {
                    EXPECT_EQ(a->face, b->face);
                    EXPECT_EQ(a->t, b->t);
                }
            }
    }
    TriangleMesh empty;
    EXPECT_THROW(Bvh{empty}, std::invalid_argument);
}

TEST(RenderSphere, NullMaterialIsBlack) {
    LinearImage img = render_sphere({Rgb(), Rgb(), 0.5}, front_camera(), {0, 0, -1});
    for (const Rgb &p : img.pixels())
        EXPECT_EQ(p, Rgb());
}

TEST(RenderSphere, CenterPixelLambertian) {
    // Odd size puts a pixel center exactly on the optical axis.
    LinearImage img = render_sphere({Rgb::gray(1), Rgb(), 0.5}, front_camera(65, 65), {0, 0, -1});
    EXPECT_NEAR(img.at(32, 32).r, 1.0 / kPi, 1e-4);
    EXPECT_NEAR(img.at(32, 32).b, 1.0 / kPi, 1e-4);
}

TEST(RenderSphere, DiscCoverageMatchesProjectedArea) {
    for (int res : {128, 256}) {
        Camera cam = front_camera(res, res);
        LinearImage img = render_sphere({Rgb::gray(1), Rgb(), 0.5}, cam, {0, 0, -1});
        int hits = 0;
        for (const Rgb &p : img.pixels())
            hits += p.r > 0;
        // Silhouette of a unit sphere at distance d subtends half-angle asin(1/d).
        double d = 4.0, half = std::asin(1.0 / d);
        double f = (res / 2.0) / std::tan(cam.fov_y() / 2);
        double radius_px = f * std::tan(half);
        EXPECT_NEAR(hits, kPi * radius_px * radius_px, 0.02 * kPi * radius_px * radius_px) << res;
    }
}

TEST(RenderSphere, DiffuseEnergySanity) {
    test::Rng rng(3);
    for (int i = 0; i < 5; ++i) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        ReflectanceParams p(Rgb(u(rng), u(rng), u(rng)), Rgb(), u(rng));
        LinearImage img = render_sphere(p, front_camera(48, 48), -test::random_unit(rng));
        for (const Rgb &px : img.pixels())
            EXPECT_LE(px.max_component(), 1.0);
    }
}

TEST(SphereMap, OccupancyAtMostVisibleHemisphere) {
    test::Rng rng(5);
    for (int i = 0; i < 10; ++i) {
        auto p = test::random_params(rng);
        Camera cam = Camera::orbit({0.3 * i, 0.6 * i, 4.0, {}}, 0.6, 32, 32);
        auto m = sphere_map(p, cam, -test::random_unit(rng));
        EXPECT_LE(resolve(m).occupancy, 0.5 + 0.02);
    }
}

TEST(SphereMap, AgreesWithRenderThenUnwrap) {
    test::Rng rng(13);
    for (int i = 0; i < 4; ++i) {
        ReflectanceParams p = test::random_params(rng, 0.3, 1.0);
        Camera cam = Camera::orbit({kPi / 3, 0.7 * i, 4.0, {}}, 35.0 * kPi / 180.0, 512, 512);
        Vec3 light = cam.to_world_dir(normalize(Vec3{0.5, 0.5, 1.0}));
        auto analytic = sphere_map(p, cam, light);
        auto unwrapped = test::unwrap_sphere_render(render_sphere(p, cam, light), cam);
        int n = 0;
        double mae = mean_abs_co_occupied(analytic, unwrapped, n);
        EXPECT_GT(n, 1000);
        EXPECT_LE(mae, 5e-3) << p;
    }
}

TEST(SphereMap, AzimuthRotationShiftsColumns) {
    ReflectanceParams p(Rgb(0.6, 0.3, 0.2), Rgb::gray(0.8), 0.3);
    const Vec3 light_cam = normalize(Vec3{0.5, 0.5, 1.0});
    Camera c0 = Camera::orbit({kPi / 3, 0.0, 4.0, {}}, 0.6, 32, 32);
    auto m0 = sphere_map(p, c0, c0.to_world_dir(light_cam));
    for (int shift : {10, 30, 45}) {
        Camera c1 = Camera::orbit({kPi / 3, shift * kTwoPi / 120.0, 4.0, {}}, 0.6, 32, 32);
        auto m1 = sphere_map(p, c1, c1.to_world_dir(light_cam));
        EXPECT_EQ(m0.occupied(), m1.occupied());
        for (const auto &cell : m0.cells()) {
            Texel t = m0.texel_of(cell);
            Texel s{t.row, (t.col + shift) % 120};
            ASSERT_EQ(m1.count(s), 1u);
            for (int c = 0; c < 3; ++c)
                EXPECT_NEAR(m1.mean(s)[c], m0.mean(t)[c], 1e-9);
        }
    }
}

TEST(GBuffer, SingleTriangleAndClosestHit) {
    Camera cam = front_camera(32, 32);
    TriangleMesh one({{-5, -5, 0}, {5, -5, 0}, {0, 5, 0}}, {{0, 1, 2}});
    GBuffer g = trace_gbuffer(one, cam);
    EXPECT_EQ(g.width, 32);
    EXPECT_EQ(g.height, 32);
    EXPECT_EQ(g.at(16, 16).triangle, 0u);
    EXPECT_EQ(g.at(16, 16).u, 16);
    EXPECT_EQ(g.at(16, 16).v, 16);
    // Two coaxial triangles: the one nearer the camera wins.
    TriangleMesh two({{-5, -5, 0}, {5, -5, 0}, {0, 5, 0}, {-5, -5, 0.5}, {5, -5, 0.5}, {0, 5, 0.5}},
                     {{0, 1, 2}, {3, 4, 5}});
    GBuffer g2 = trace_gbuffer(two, cam);
    for (const auto &px : g2.pixels)
        if (px.hit()) {
            EXPECT_EQ(px.triangle, 1u);
            EXPECT_NEAR(px.point.z, 0.5, 1e-4);
        }
    EXPECT_GT(g2.hit_count(), 0u);
}

TEST(GBuffer, PointsOnTrianglePlanesAndDeterministic) {
    TriangleMesh m = make_icosphere(3);
    Bvh bvh(m);
    Camera cam = Camera::orbit({1.0, 0.5, 3.5, {}}, 0.7, 80, 60);
    GBuffer g = trace_gbuffer(bvh, cam);
    EXPECT_EQ(g.pixels.size(), 80u * 60u);
    for (const auto &px : g.pixels)
        if (px.hit())
            EXPECT_LT(std::abs(dot(px.point - m.vertex(px.triangle, 0), m.normal(px.triangle))), 1e-4);
    set_thread_count(1);
    GBuffer g1 = trace_gbuffer(bvh, cam);
    set_thread_count(0);
    EXPECT_EQ(g, g1);
}

TEST(RenderMesh, BlackMaterialsAndLengthMismatch) {
    TriangleMesh m = make_icosphere(2);
    std::vector<ReflectanceParams> black(m.face_count(), ReflectanceParams(Rgb(), Rgb(), 0.5));
    LinearImage img = render_mesh(m, black, front_camera(32, 32), {0, 0, -1});
    for (const Rgb &p : img.pixels())
        EXPECT_EQ(p, Rgb());
    black.pop_back();
    EXPECT_THROW(render_mesh(m, black, front_camera(32, 32), {0, 0, -1}), std::invalid_argument);
}

TEST(RenderMesh, NoSeamAcrossCoplanarSquare) {
    TriangleMesh sq({{-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0}}, {{0, 1, 2}, {0, 2, 3}});
    std::vector<ReflectanceParams> p(2, ReflectanceParams(Rgb(0.5, 0.4, 0.3), Rgb::gray(0.5), 0.4));
    // Orthogonal-ish view with the light along the axis keeps shading constant per plane direction.
    Camera cam = front_camera(48, 48, 8.0);
    LinearImage img = render_mesh(sq, p, cam, {0, 0, -1});
    GBuffer g = trace_gbuffer(sq, cam);
    // Pixels mirrored across the diagonal see mirrored geometry and must match.
    int compared = 0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            if (!g.at(x, y).hit() || !g.at(y, x).hit() || g.at(x, y).triangle == g.at(y, x).triangle)
                continue;
            for (int c = 0; c < 3; ++c)
                EXPECT_NEAR(img.at(x, y)[c], img.at(y, x)[c], 1e-12);
            ++compared;
        }
    EXPECT_GT(compared, 50);
}

TEST(RenderMesh, IcosphereMatchesAnalyticSphere) {
    TriangleMesh m = make_icosphere(4);
    ASSERT_GE(m.face_count(), 5000u);
    ReflectanceParams p(Rgb(0.6, 0.3, 0.2), Rgb::gray(0.3), 0.5);
    std::vector<ReflectanceParams> per_face(m.face_count(), p);
    Camera cam = front_camera(256, 256);
    Vec3 light = cam.to_world_dir(normalize(Vec3{-0.5, -0.5, 1.0}));
    LinearImage a = render_sphere(p, cam, light), b = render_mesh(m, per_face, cam, light);
    EXPECT_GE(psnr(clamp_unit(a), clamp_unit(b)), 35.0);
}

TEST(RenderMesh, ShadowsDarkenOccludedFaces) {
    // A small occluder floating above a ground quad, light from straight above.
    TriangleMesh m({{-2, -2, 0}, {2, -2, 0}, {2, 2, 0}, {-2, 2, 0}, {-0.5, -0.5, 1}, {0.5, -0.5, 1}, {0, 0.5, 1}},
                   {{0, 1, 2}, {0, 2, 3}, {4, 5, 6}});
    std::vector<ReflectanceParams> p(3, ReflectanceParams(Rgb::gray(0.8), Rgb(), 0.5));
    Camera cam = Camera::orbit({0.4, 0.3, 6.0, {}}, 0.8, 64, 64);
    LinearImage lit = render_mesh(m, p, cam, {0, 0, -1});
    LinearImage shadowed = render_mesh(m, p, cam, {0, 0, -1}, {.shadows = true});
    int darker = 0;
    for (std::size_t i = 0; i < lit.pixel_count(); ++i) {
        EXPECT_LE(shadowed[i].r, lit[i].r);
        darker += shadowed[i].r < lit[i].r;
    }
    EXPECT_GT(darker, 10);
}

TEST(Render, ThreadCountIndependent) {
    ReflectanceParams p(Rgb(0.6, 0.3, 0.2), Rgb::gray(0.8), 0.15);
    Camera cam = front_camera(64, 48);
    set_thread_count(1);
    LinearImage a = render_sphere(p, cam, normalize(Vec3{0.3, 0.2, -0.9}));
    set_thread_count(3);
    LinearImage b = render_sphere(p, cam, normalize(Vec3{0.3, 0.2, -0.9}));
    set_thread_count(0);
    EXPECT_EQ(a, b);
}
