#pragma once

// Analytic inverse of the reflection model: recovers the 7-vector (and
// optionally the light direction) that best explains a reflectance map, by
// Levenberg-Marquardt on squashed coordinates with a central-difference
// Jacobian.

#include <optional>
#include <stdexcept>
#include <vector>

#include "rmap/brdf.hpp"
#include "rmap/spherical.hpp"

namespace rmap {

/// How a texel direction turns into shading geometry.
///
/// surface: the texel direction is omega_o expressed in a frame whose z axis
///          is the surface normal (per-triangle maps).
/// sphere:  the texel direction is the unit-sphere normal and omega_o points
///          from that surface point to the camera center (sphere renders).
class MapLayout {
  public:
    static MapLayout surface() { return MapLayout(false, {}); }
    static MapLayout sphere(const Vec3 &eye) { return MapLayout(true, eye); }

    bool is_sphere() const { return sphere_; }
    const Vec3 &eye() const { return eye_; }

    /// Normal and outgoing direction for a texel direction.
    void surface_point(const Vec3 &texel_dir, Vec3 &n, Vec3 &omega_o) const;
    ShadingGeometry geometry(const Vec3 &texel_dir, const Vec3 &omega_i) const;

  private:
    MapLayout(bool sphere, const Vec3 &eye) : sphere_(sphere), eye_(eye) {}
    bool sphere_;
    Vec3 eye_;
};

class TooFewSamples : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct FitOptions {
    int min_occupied = 30;
    int max_iterations = 200;
    double fd_step = 1e-4;
    double initial_damping = 1e-3;
    double relative_tolerance = 1e-8;
    /// When set, per-texel squared errors are clamped at this quantile of the
    /// current error distribution (robust loss).
    std::optional<double> robust_quantile;
    int light_azimuth_starts = 8;
    int light_zenith_starts = 2;
    /// Starting material; when absent a coarse roughness scan with linear
    /// least squares for k_d and k_s seeds each start.
    std::optional<ReflectanceParams> initial_params;
};

struct FitResult {
    ReflectanceParams params;
    SphericalAngles light; ///< omega_i, toward the light, in the map's frame
    double rmse = 0;       ///< per-channel RMS error over occupied texels
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_history; ///< objective after the seed and after each accepted step
};

/// Sum over occupied texels of |resolved - shade(params, geometry)|^2, with
/// omega_i the direction given by `light`. Throws std::invalid_argument for an empty map.
double residual(const ReflectanceParams &params, const SphericalAngles &light, const ReflectanceMap &map,
                const MapLayout &layout = MapLayout::surface());

/// Throws TooFewSamples when the map has fewer than options.min_occupied texels.
/// With no known light, multi-starts over azimuth x zenith light seeds and keeps
/// the lowest objective.
FitResult fit(const ReflectanceMap &map, const std::optional<SphericalAngles> &known_light,
              const MapLayout &layout = MapLayout::surface(), const FitOptions &options = {});

/// Re-renders a map with the fitted material and light on the occupied texels of `like`.
ReflectanceMap render_like(const ReflectanceParams &params, const SphericalAngles &light, const ReflectanceMap &like,
                           const MapLayout &layout);

} // namespace rmap
