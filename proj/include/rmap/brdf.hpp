#pragma once

// Combined Lambertian + Torrance-Sparrow reflection model lit by a single
// directional source.
//
//   f = k_d / pi + k_s * D(h) G(o, i) F(o) / (4 cos_o cos_i)
//   L_o = f * L_i * cos_i
//
// D is the Trowbridge-Reitz (GGX) distribution, G the separable Smith-GGX
// masking-shadowing term and F Schlick's approximation with F0 = 0.04.
// Roughness r in [0,1] maps to the distribution width alpha = max(r^2, 1e-3).

#include <array>
#include <span>

#include "rmap/vec.hpp"

namespace rmap {

/// The 7-vector (k_d RGB, k_s RGB, roughness), every component in [0,1].
class ReflectanceParams {
  public:
    static constexpr int kSize = 7;

    /// Throws std::invalid_argument if any component is outside [0,1] or not finite.
    ReflectanceParams(const Rgb &kd, const Rgb &ks, double roughness);
    ReflectanceParams() : ReflectanceParams(Rgb::gray(0.5), Rgb::gray(0.0), 0.5) {}

    static ReflectanceParams from_array(std::span<const double> v);
    std::array<double, kSize> to_array() const;

    const Rgb &kd() const { return kd_; }
    const Rgb &ks() const { return ks_; }
    double roughness() const { return roughness_; }
    double alpha() const;

    bool operator==(const ReflectanceParams &) const = default;

  private:
    Rgb kd_, ks_;
    double roughness_;
};

std::ostream &operator<<(std::ostream &os, const ReflectanceParams &p);

/// Shading configuration at a surface point. All directions point away from the surface.
class ShadingGeometry {
  public:
    /// Throws std::invalid_argument unless all three vectors have unit length within 1e-6.
    ShadingGeometry(const Vec3 &n, const Vec3 &omega_i, const Vec3 &omega_o);

    /// Skips the unit-length validation; for hot loops whose inputs are normalized by construction.
    static ShadingGeometry trusted(const Vec3 &n, const Vec3 &omega_i, const Vec3 &omega_o);

    const Vec3 &n() const { return n_; }
    const Vec3 &omega_i() const { return omega_i_; }
    const Vec3 &omega_o() const { return omega_o_; }
    double cos_theta_i() const { return cos_i_; }
    double cos_theta_o() const { return cos_o_; }
    bool lit_and_visible() const { return cos_i_ > 0.0 && cos_o_ > 0.0; }

    /// normalize(omega_i + omega_o); throws InvalidGeometry when omega_i = -omega_o.
    Vec3 half_vector() const;

  private:
    ShadingGeometry() = default;
    Vec3 n_, omega_i_, omega_o_;
    double cos_i_ = 0, cos_o_ = 0;
};

inline constexpr double kFresnelF0 = 0.04;
inline constexpr double kMinAlpha = 1e-3;

double roughness_to_alpha(double r);

Rgb eval_lambertian(const ReflectanceParams &params);

/// Trowbridge-Reitz density of the half vector. Requires alpha > 0.
double microfacet_d(const ShadingGeometry &geom, double alpha);
/// Smith-GGX single-direction masking for a direction with cosine `cos_theta` to the normal.
double smith_g1(double cos_theta, double alpha);
double smith_g(const ShadingGeometry &geom, double alpha);
/// Schlick Fresnel evaluated with the half-vector cosine h.o.
double fresnel_schlick(double cos_h_o, double f0 = kFresnelF0);

/// Specular lobe per channel. Throws InvalidGeometry unless the geometry is lit and visible.
Rgb eval_torrance_sparrow(const ReflectanceParams &params, const ShadingGeometry &geom);

/// Outgoing radiance; zero for geometry that is not lit-and-visible.
Rgb shade(const ReflectanceParams &params, const ShadingGeometry &geom, const Rgb &radiance_in = Rgb::gray(1.0));

} // namespace rmap
