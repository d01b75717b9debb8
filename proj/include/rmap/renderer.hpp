#pragma once

// Ray-cast forward renderer: analytic unit-sphere renders and reflectance
// maps, G-buffers and flat-shaded mesh renders under one directional light.
// Light directions are propagation directions (omega_i = -light_dir) in the
// world frame; one primary ray per pixel through the pixel center.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "rmap/brdf.hpp"
#include "rmap/bvh.hpp"
#include "rmap/camera.hpp"
#include "rmap/image.hpp"
#include "rmap/mesh.hpp"
#include "rmap/spherical.hpp"

namespace rmap {

inline constexpr std::uint32_t kNoHit = std::numeric_limits<std::uint32_t>::max();

struct GBufferPixel {
    std::uint32_t triangle = kNoHit;
    Vec3 point;
    Vec3 normal;
    int u = 0, v = 0;
    bool hit() const { return triangle != kNoHit; }
    bool operator==(const GBufferPixel &) const = default;
};

struct GBuffer {
    int width = 0;
    int height = 0;
    std::vector<GBufferPixel> pixels; ///< row-major
    const GBufferPixel &at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
    std::size_t hit_count() const;
    bool operator==(const GBuffer &) const = default;
};

LinearImage render_sphere(const ReflectanceParams &params, const Camera &cam, const Vec3 &light_dir,
                          const Rgb &radiance_in = Rgb::gray(1.0));

/// Analytic reflectance map of the unit sphere: every texel-center normal d
/// that faces the camera and the light stores shade() once.
ReflectanceMap sphere_map(const ReflectanceParams &params, const Camera &cam, const Vec3 &light_dir,
                          const Rgb &radiance_in = Rgb::gray(1.0));

GBuffer trace_gbuffer(const Bvh &bvh, const Camera &cam);
GBuffer trace_gbuffer(const TriangleMesh &mesh, const Camera &cam);

struct MeshRenderOptions {
    bool shadows = false;
    Rgb radiance_in = Rgb::gray(1.0);
};

/// Flat-shaded render with per-face materials. Throws std::invalid_argument
/// when per_face.size() differs from the face count.
LinearImage render_mesh(const Bvh &bvh, std::span<const ReflectanceParams> per_face, const Camera &cam,
                        const Vec3 &light_dir, const MeshRenderOptions &opts = {});
LinearImage render_mesh(const TriangleMesh &mesh, std::span<const ReflectanceParams> per_face, const Camera &cam,
                        const Vec3 &light_dir, const MeshRenderOptions &opts = {});

} // namespace rmap
