#include "rmap/brdf.hpp"

#include <sstream>
#include <stdexcept>

#include "rmap/errors.hpp"

namespace rmap {

namespace {

void check_unit_interval(double v, const char *name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        std::ostringstream msg;
        msg << "reflectance parameter " << name << " = " << v << " is outside [0,1]";
        throw std::invalid_argument(msg.str());
    }
}

} // namespace

ReflectanceParams::ReflectanceParams(const Rgb &kd, const Rgb &ks, double roughness)
    : kd_(kd), ks_(ks), roughness_(roughness) {
    static const char *kdNames[] = {"kd.r", "kd.g", "kd.b"};
    static const char *ksNames[] = {"ks.r", "ks.g", "ks.b"};
    for (int c = 0; c < 3; ++c) {
        check_unit_interval(kd[c], kdNames[c]);
        check_unit_interval(ks[c], ksNames[c]);
    }
    check_unit_interval(roughness, "roughness");
}

ReflectanceParams ReflectanceParams::from_array(std::span<const double> v) {
    if (v.size() != kSize)
        throw std::invalid_argument("reflectance parameter vector must have 7 components");
    return {Rgb(v[0], v[1], v[2]), Rgb(v[3], v[4], v[5]), v[6]};
}

std::array<double, ReflectanceParams::kSize> ReflectanceParams::to_array() const {
    return {kd_.r, kd_.g, kd_.b, ks_.r, ks_.g, ks_.b, roughness_};
}

double ReflectanceParams::alpha() const { return roughness_to_alpha(roughness_); }

std::ostream &operator<<(std::ostream &os, const ReflectanceParams &p) {
    return os << "{kd=" << p.kd() << ", ks=" << p.ks() << ", r=" << p.roughness() << '}';
}

ShadingGeometry::ShadingGeometry(const Vec3 &n, const Vec3 &omega_i, const Vec3 &omega_o)
    : n_(n), omega_i_(omega_i), omega_o_(omega_o) {
    if (!is_unit(n) || !is_unit(omega_i) || !is_unit(omega_o))
        throw std::invalid_argument("shading geometry directions must be unit vectors");
    cos_i_ = dot(n, omega_i);
    cos_o_ = dot(n, omega_o);
}

ShadingGeometry ShadingGeometry::trusted(const Vec3 &n, const Vec3 &omega_i, const Vec3 &omega_o) {
    ShadingGeometry g;
    g.n_ = n;
    g.omega_i_ = omega_i;
    g.omega_o_ = omega_o;
    g.cos_i_ = dot(n, omega_i);
    g.cos_o_ = dot(n, omega_o);
    return g;
}

Vec3 ShadingGeometry::half_vector() const {
    Vec3 h = omega_i_ + omega_o_;
    double len = length(h);
    if (len < 1e-12)
        throw InvalidGeometry("half vector is undefined for opposite incoming and outgoing directions");
    return h / len;
}

double roughness_to_alpha(double r) { return std::max(r * r, kMinAlpha); }

Rgb eval_lambertian(const ReflectanceParams &params) { return params.kd() * kInvPi; }

double microfacet_d(const ShadingGeometry &geom, double alpha) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("microfacet width alpha must be positive");
    double cos_h = dot(geom.n(), geom.half_vector());
    double a2 = alpha * alpha;
    double denom = cos_h * cos_h * (a2 - 1.0) + 1.0;
    return a2 / (kPi * denom * denom);
}

double smith_g1(double cos_theta, double alpha) {
    double a2 = alpha * alpha;
    return 2.0 * cos_theta / (cos_theta + std::sqrt(a2 + (1.0 - a2) * cos_theta * cos_theta));
}

double smith_g(const ShadingGeometry &geom, double alpha) {
    return smith_g1(geom.cos_theta_i(), alpha) * smith_g1(geom.cos_theta_o(), alpha);
}

double fresnel_schlick(double cos_h_o, double f0) {
    double m = std::clamp(1.0 - cos_h_o, 0.0, 1.0);
    double m2 = m * m;
    return f0 + (1.0 - f0) * m2 * m2 * m;
}

Rgb eval_torrance_sparrow(const ReflectanceParams &params, const ShadingGeometry &geom) {
    if (!geom.lit_and_visible())
        throw InvalidGeometry("Torrance-Sparrow lobe requires cos_theta_i > 0 and cos_theta_o > 0");
    const double alpha = params.alpha();
    const Vec3 h = geom.half_vector();
    const double d = microfacet_d(geom, alpha);
    const double g = smith_g(geom, alpha);
    const double f = fresnel_schlick(dot(h, geom.omega_o()));
    const double lobe = d * g * f / (4.0 * geom.cos_theta_o() * geom.cos_theta_i());
    return params.ks() * lobe;
}

Rgb shade(const ReflectanceParams &params, const ShadingGeometry &geom, const Rgb &radiance_in) {
    if (!geom.lit_and_visible())
        return {};
    Rgb f = eval_lambertian(params) + eval_torrance_sparrow(params, geom);
    return f * radiance_in * geom.cos_theta_i();
}

} // namespace rmap
