#include "rmap/renderer.hpp"

#include <stdexcept>

#include "rmap/parallel.hpp"

namespace rmap {

std::size_t GBuffer::hit_count() const {
    std::size_t n = 0;
    for (const auto &p : pixels)
        n += p.hit();
    return n;
}

namespace {

std::optional<double> hit_unit_sphere(const Ray &ray) {
    double b = dot(ray.origin, ray.dir);
    double c = dot(ray.origin, ray.origin) - 1.0;
    double disc = b * b - c;
    if (disc < 0.0)
        return std::nullopt;
    double s = std::sqrt(disc);
    double t = -b - s;
    if (t <= 1e-9)
        t = -b + s;
    if (t <= 1e-9)
        return std::nullopt;
    return t;
}

} // namespace

LinearImage render_sphere(const ReflectanceParams &params, const Camera &cam, const Vec3 &light_dir,
                          const Rgb &radiance_in) {
    const Vec3 omega_i = -normalize(light_dir);
    LinearImage img(cam.width(), cam.height());
    parallel_for(std::size_t(cam.height()), [&](std::size_t y) {
        for (int x = 0; x < cam.width(); ++x) {
            Ray ray = cam.generate_ray(x, int(y));
            auto t = hit_unit_sphere(ray);
            if (!t)
                continue;
            Vec3 n = normalize(ray.origin + ray.dir * *t);
            img.at(x, int(y)) = shade(params, ShadingGeometry::trusted(n, omega_i, -ray.dir), radiance_in);
        }
    });
    return img;
}

ReflectanceMap sphere_map(const ReflectanceParams &params, const Camera &cam, const Vec3 &light_dir,
                          const Rgb &radiance_in) {
    const Vec3 omega_i = -normalize(light_dir);
    const Vec3 eye = cam.center();
    ReflectanceMap map;
    for (int row = 0; row < map.height(); ++row)
        for (int col = 0; col < map.width(); ++col) {
            Texel t{row, col};
            Vec3 d = texel_direction(t);
            Vec3 omega_o = normalize(eye - d);
            ShadingGeometry geom = ShadingGeometry::trusted(d, omega_i, omega_o);
            if (!geom.lit_and_visible())
                continue;
            map.accumulate(t, shade(params, geom, radiance_in));
        }
    return map;
}

GBuffer trace_gbuffer(const Bvh &bvh, const Camera &cam) {
    GBuffer gb{cam.width(), cam.height(), std::vector<GBufferPixel>(std::size_t(cam.width()) * cam.height())};
    const TriangleMesh &mesh = bvh.mesh();
    parallel_for(std::size_t(cam.height()), [&](std::size_t y) {
        for (int x = 0; x < cam.width(); ++x) {
            GBufferPixel &px = gb.pixels[y * std::size_t(cam.width()) + x];
            px.u = x;
            px.v = int(y);
            Ray ray = cam.generate_ray(x, int(y));
            auto hit = bvh.intersect(ray);
            if (!hit)
                continue;
            px.triangle = hit->face;
            px.point = ray.origin + ray.dir * hit->t;
            px.normal = mesh.normal(hit->face);
        }
    });
    return gb;
}

GBuffer trace_gbuffer(const TriangleMesh &mesh, const Camera &cam) {
    Bvh bvh(mesh);
    return trace_gbuffer(bvh, cam);
}

LinearImage render_mesh(const Bvh &bvh, std::span<const ReflectanceParams> per_face, const Camera &cam,
                        const Vec3 &light_dir, const MeshRenderOptions &opts) {
    const TriangleMesh &mesh = bvh.mesh();
    if (per_face.size() != mesh.face_count())
        throw std::invalid_argument("render_mesh: " + std::to_string(per_face.size()) + " materials for " +
                                    std::to_string(mesh.face_count()) + " faces");
    const Vec3 omega_i = -normalize(light_dir);
    LinearImage img(cam.width(), cam.height());
    parallel_for(std::size_t(cam.height()), [&](std::size_t y) {
        for (int x = 0; x < cam.width(); ++x) {
            Ray ray = cam.generate_ray(x, int(y));
            auto hit = bvh.intersect(ray);
            if (!hit)
                continue;
            const Vec3 &n = mesh.normal(hit->face);
            ShadingGeometry geom = ShadingGeometry::trusted(n, omega_i, -ray.dir);
            if (!geom.lit_and_visible())
                continue;
            if (opts.shadows) {
                Vec3 p = ray.origin + ray.dir * hit->t;
                double eps = 1e-7 * (1.0 + length(p));
                if (bvh.occluded({p + n * eps, omega_i}, eps, std::numeric_limits<double>::infinity()))
                    continue;
            }
            img.at(x, int(y)) = shade(per_face[hit->face], geom, opts.radiance_in);
        }
    });
    return img;
}

LinearImage render_mesh(const TriangleMesh &mesh, std::span<const ReflectanceParams> per_face, const Camera &cam,
                        const Vec3 &light_dir, const MeshRenderOptions &opts) {
    Bvh bvh(mesh);
    return render_mesh(bvh, per_face, cam, light_dir, opts);
}

} // namespace rmap
