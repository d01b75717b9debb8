#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "rmap/camera.hpp"
#include "rmap/mesh.hpp"

namespace rmap {

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    std::uint32_t face = 0;
    double b1 = 0, b2 = 0; ///< barycentrics of vertices 1 and 2
};

/// Moller-Trumbore test, two-sided. Returns the ray parameter in (t_min, t_max) or nullopt.
std::optional<Hit> intersect_triangle(const Ray &ray, const Vec3 &p0, const Vec3 &p1, const Vec3 &p2,
                                      double t_min, double t_max);

/// Closest hit by testing every face; ties on t resolve to the lower face index.
std::optional<Hit> intersect_brute_force(const TriangleMesh &mesh, const Ray &ray,
                                         double t_min = 1e-9,
                                         double t_max = std::numeric_limits<double>::infinity());

/// Binary bounding-volume hierarchy over a mesh, built with binned SAH splits.
/// Holds a reference to the mesh, which must outlive it.
class Bvh {
  public:
    explicit Bvh(const TriangleMesh &mesh, int max_leaf_size = 4);

    /// Closest hit; ties on t resolve to the lower face index, matching intersect_brute_force.
    std::optional<Hit> intersect(const Ray &ray, double t_min = 1e-9,
                                 double t_max = std::numeric_limits<double>::infinity()) const;
    /// Any hit within (t_min, t_max); used for shadow rays.
    bool occluded(const Ray &ray, double t_min, double t_max) const;

    const TriangleMesh &mesh() const { return *mesh_; }
    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Bounds {
        Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};
        Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity()};
        void grow(const Vec3 &p) { lo = min(lo, p); hi = max(hi, p); }
        void grow(const Bounds &b) { lo = min(lo, b.lo); hi = max(hi, b.hi); }
        double area() const;
    };
    struct Node {
        Bounds box;
        std::uint32_t first = 0; ///< first primitive (leaf) or right child (interior)
        std::uint32_t count = 0; ///< primitive count; 0 marks an interior node
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Bounds> &face_box,
                        std::vector<Vec3> &centroid);
    bool slab(const Bounds &b, const Ray &ray, const Vec3 &inv_dir, double t_min, double t_max) const;

    const TriangleMesh *mesh_;
    int max_leaf_;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
};

} // namespace rmap
