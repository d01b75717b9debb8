#include <gtest/gtest.h>

#include <random>

#include "rmap/brdf.hpp"
#include "rmap/errors.hpp"
#include "test_util.hpp"

using namespace rmap;

TEST(ReflectanceParams, RejectsOutOfRange) {
    EXPECT_THROW(ReflectanceParams(Rgb(1.1, 0, 0), Rgb(), 0.5), std::invalid_argument);
    EXPECT_THROW(ReflectanceParams(Rgb(), Rgb(0, -0.01, 0), 0.5), std::invalid_argument);
    EXPECT_THROW(ReflectanceParams(Rgb(), Rgb(), 1.0001), std::invalid_argument);
    EXPECT_THROW(ReflectanceParams(Rgb(), Rgb(), std::nan("")), std::invalid_argument);
    EXPECT_NO_THROW(ReflectanceParams(Rgb(0, 1, 0), Rgb(1, 0, 1), 0.0));
    EXPECT_THROW(ReflectanceParams::from_array(std::vector<double>(6, 0.5)), std::invalid_argument);
}

TEST(ShadingGeometry, RejectsNonUnit) {
    EXPECT_THROW(ShadingGeometry({0, 0, 1.01}, {0, 0, 1}, {0, 0, 1}), std::invalid_argument);
    EXPECT_NO_THROW(ShadingGeometry({0, 0, 1}, {0, 0, 1}, {0, 0, 1 + 5e-7}));
}

TEST(Lambertian, Examples) {
    Rgb v = eval_lambertian({Rgb::gray(1), Rgb(), 0.5});
    EXPECT_NEAR(v.r, 0.3183098861837907, 1e-15);
    EXPECT_EQ(v.r, v.g);
    EXPECT_EQ(v.g, v.b);
    EXPECT_EQ(eval_lambertian({Rgb(), Rgb(), 0.5}), Rgb());
    Rgb w = eval_lambertian({Rgb(0.5, 0.2, 0.9), Rgb(), 0.5});
    EXPECT_DOUBLE_EQ(w.r, 0.5 / kPi);
    EXPECT_DOUBLE_EQ(w.g, 0.2 / kPi);
    EXPECT_DOUBLE_EQ(w.b, 0.9 / kPi);
}

TEST(MicrofacetD, HalfVectorAlongNormal) {
    ShadingGeometry g({0, 0, 1}, normalize(Vec3{0.3, 0, 1}), normalize(Vec3{-0.3, 0, 1}));
    for (double alpha : {0.01, 0.2, 0.7}) {
        EXPECT_NEAR(microfacet_d(g, alpha), 1.0 / (kPi * alpha * alpha), 1e-9 / (alpha * alpha));
    }
}

TEST(MicrofacetD, UnitAlphaIsUniform) {
    test::Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        auto g = test::random_lit_geometry(rng);
        EXPECT_NEAR(microfacet_d(g, 1.0), kInvPi, 1e-14);
    }
}

TEST(MicrofacetD, MatchesScalarReevaluation) {
    // Oracle: build the geometry from angles and evaluate the closed form with
    // the half-vector cosine computed from scalar trigonometry.
    test::Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        double ti = 0.45 * kPi * u(rng), pi_ = kTwoPi * u(rng);
        double to = 0.45 * kPi * u(rng), po = kTwoPi * u(rng);
        Vec3 wi{std::sin(ti) * std::cos(pi_), std::sin(ti) * std::sin(pi_), std::cos(ti)};
        Vec3 wo{std::sin(to) * std::cos(po), std::sin(to) * std::sin(po), std::cos(to)};
        double hx = wi.x + wo.x, hy = wi.y + wo.y, hz = wi.z + wo.z;
        double cos_h = hz / std::sqrt(hx * hx + hy * hy + hz * hz);
        const double alpha = 0.3, a2 = alpha * alpha;
        double denom = cos_h * cos_h * (a2 - 1.0) + 1.0;
        double expected = a2 / (kPi * denom * denom);
        ShadingGeometry g({0, 0, 1}, wi, wo);
        EXPECT_NEAR(microfacet_d(g, alpha), expected, 1e-12 * std::max(1.0, expected));
    }
}

TEST(MicrofacetD, DegenerateHalfVectorThrows) {
    ShadingGeometry g({0, 0, 1}, {1, 0, 0}, {-1, 0, 0});
    EXPECT_THROW(microfacet_d(g, 0.3), InvalidGeometry);
    EXPECT_THROW(microfacet_d(ShadingGeometry({0, 0, 1}, {0, 0, 1}, {0, 0, 1}), 0.0), std::invalid_argument);
}

TEST(TorranceSparrow, ZeroSpecularScale) {
    test::Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        auto g = test::random_lit_geometry(rng);
        EXPECT_EQ(eval_torrance_sparrow({Rgb::gray(0.7), Rgb(), 0.3}, g), Rgb());
    }
}

TEST(TorranceSparrow, ReciprocityOnRandomGeometries) {
    test::Rng rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        auto g = test::random_lit_geometry(rng);
        ReflectanceParams p(Rgb(u(rng), u(rng), u(rng)), Rgb(u(rng), u(rng), u(rng)), u(rng));
        Rgb a = eval_torrance_sparrow(p, g);
        Rgb b = eval_torrance_sparrow(p, ShadingGeometry(g.n(), g.omega_o(), g.omega_i()));
        for (int c = 0; c < 3; ++c)
            EXPECT_NEAR(a[c], b[c], 1e-6 * std::max(1.0, std::abs(a[c])));
    }
}

TEST(TorranceSparrow, NormalIncidenceTermByTerm) {
    const double r = 0.2, alpha = r * r;
    ReflectanceParams p(Rgb(), Rgb::gray(1), r);
    ShadingGeometry g({0, 0, 1}, {0, 0, 1}, {0, 0, 1});
    // D(n) = 1/(pi a^2); G1(1) = 2/(1 + sqrt(a^2 + 1 - a^2)) = 1; F(1) = F0.
    double d = 1.0 / (kPi * alpha * alpha);
    double g1 = 2.0 * 1.0 / (1.0 + std::sqrt(alpha * alpha + (1 - alpha * alpha)));
    double f = 0.04;
    double expected = d * g1 * g1 * f / 4.0;
    Rgb v = eval_torrance_sparrow(p, g);
    EXPECT_NEAR(v.r, expected, 1e-12 * expected);
    EXPECT_EQ(v.r, v.g);
}

TEST(TorranceSparrow, RequiresLitAndVisible) {
    ReflectanceParams p(Rgb::gray(0.5), Rgb::gray(0.5), 0.3);
    EXPECT_THROW(eval_torrance_sparrow(p, ShadingGeometry({0, 0, 1}, {1, 0, 0}, {0, 0, 1})), InvalidGeometry);
    EXPECT_THROW(eval_torrance_sparrow(p, ShadingGeometry({0, 0, 1}, {0, 0, 1}, normalize(Vec3{0, 1, -0.1}))),
                 InvalidGeometry);
}

TEST(Shade, GrazingLightIsBlack) {
    ReflectanceParams p(Rgb::gray(0.8), Rgb::gray(0.8), 0.3);
    EXPECT_EQ(shade(p, ShadingGeometry({0, 0, 1}, {1, 0, 0}, {0, 0, 1})), Rgb());
    EXPECT_EQ(shade(p, ShadingGeometry({0, 0, 1}, normalize(Vec3{1, 0, -1}), {0, 0, 1})), Rgb());
}

TEST(Shade, LambertianAtNormalIncidence) {
    ReflectanceParams p(Rgb(0.2, 0.5, 0.9), Rgb(), 0.4);
    Rgb v = shade(p, ShadingGeometry({0, 0, 1}, {0, 0, 1}, normalize(Vec3{0.2, 0.1, 1})), Rgb::gray(1));
    EXPECT_DOUBLE_EQ(v.r, 0.2 / kPi);
    EXPECT_DOUBLE_EQ(v.g, 0.5 / kPi);
    EXPECT_DOUBLE_EQ(v.b, 0.9 / kPi);
}

TEST(Shade, LinearInIncomingRadiance) {
    test::Rng rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        auto g = test::random_geometry(rng);
        ReflectanceParams p(Rgb(u(rng), u(rng), u(rng)), Rgb(u(rng), u(rng), u(rng)), u(rng));
        Rgb li(u(rng), u(rng), u(rng));
        Rgb once = shade(p, g, li), twice = shade(p, g, li * 2.0);
        for (int c = 0; c < 3; ++c) {
            EXPECT_EQ(twice[c], 2.0 * once[c]); // power-of-two scaling is exact
            EXPECT_GE(once[c], 0.0);
        }
        double s = 3.7 * u(rng);
        Rgb scaled = shade(p, g, li * s);
        for (int c = 0; c < 3; ++c)
            EXPECT_NEAR(scaled[c], s * once[c], 1e-12 * std::max(1.0, scaled[c]));
    }
}

TEST(Shade, ContinuousInRoughness) {
    // Sweep r in small steps on a fixed geometry set; adjacent values must stay close.
    test::Rng rng(29);
    std::vector<ShadingGeometry> geoms;
    for (int i = 0; i < 64; ++i)
        geoms.push_back(test::random_lit_geometry(rng));
    for (const auto &g : geoms) {
        double prev = shade({Rgb::gray(0.5), Rgb::gray(0.5), 0.05}, g).r;
        for (double r = 0.051; r <= 1.0; r += 1e-3) {
            double cur = shade({Rgb::gray(0.5), Rgb::gray(0.5), r}, g).r;
            // Relative bound: the specular peak scales like 1/alpha^2, so allow 10% per step.
            EXPECT_LE(std::abs(cur - prev), 0.1 * std::max({1.0, cur, prev})) << "r=" << r;
            prev = cur;
        }
    }
}
