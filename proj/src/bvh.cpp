#include "rmap/bvh.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <stdexcept>

namespace rmap {

std::optional<Hit> intersect_triangle(const Ray &ray, const Vec3 &p0, const Vec3 &p1, const Vec3 &p2,
                                      double t_min, double t_max) {
    const Vec3 e1 = p1 - p0, e2 = p2 - p0;
    const Vec3 pvec = cross(ray.dir, e2);
    const double det = dot(e1, pvec);
    if (std::abs(det) < 1e-18)
        return std::nullopt;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = ray.origin - p0;
    const double u = dot(tvec, pvec) * inv_det;
    if (u < 0.0 || u > 1.0)
        return std::nullopt;
    const Vec3 qvec = cross(tvec, e1);
    const double v = dot(ray.dir, qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0)
        return std::nullopt;
    const double t = dot(e2, qvec) * inv_det;
    if (!(t > t_min && t < t_max))
        return std::nullopt;
    return Hit{t, 0, u, v};
}

namespace {

bool closer(const Hit &a, const Hit &b) { return a.t < b.t || (a.t == b.t && a.face < b.face); }

} // namespace

std::optional<Hit> intersect_brute_force(const TriangleMesh &mesh, const Ray &ray, double t_min, double t_max) {
    std::optional<Hit> best;
    for (std::uint32_t f = 0; f < mesh.face_count(); ++f) {
        auto h = intersect_triangle(ray, mesh.vertex(f, 0), mesh.vertex(f, 1), mesh.vertex(f, 2), t_min, t_max);
        if (h) {
            h->face = f;
            if (!best || closer(*h, *best))
                best = h;
        }
    }
    return best;
}

double Bvh::Bounds::area() const {
    Vec3 d = hi - lo;
    if (d.x < 0)
        return 0.0;
    return 2.0 * (d.x * d.y + d.y * d.z + d.z * d.x);
}

Bvh::Bvh(const TriangleMesh &mesh, int max_leaf_size) : mesh_(&mesh), max_leaf_(std::max(1, max_leaf_size)) {
    const std::uint32_t n = std::uint32_t(mesh.face_count());
    if (n == 0)
        throw std::invalid_argument("cannot build a BVH over an empty mesh");
    std::vector<Bounds> face_box(n);
    std::vector<Vec3> centroid(n);
    for (std::uint32_t f = 0; f < n; ++f) {
        for (int k = 0; k < 3; ++k)
            face_box[f].grow(mesh.vertex(f, k));
        centroid[f] = mesh.centroid(f);
    }
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * n);
    build(0, n, face_box, centroid);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Bounds> &face_box,
                         std::vector<Vec3> &centroid) {
    const std::uint32_t index = std::uint32_t(nodes_.size());
    nodes_.emplace_back();
    Bounds box, cbox;
    for (std::uint32_t i = begin; i < end; ++i) {
        box.grow(face_box[order_[i]]);
        cbox.grow(centroid[order_[i]]);
    }
    nodes_[index].box = box;
    const std::uint32_t count = end - begin;

    auto make_leaf = [&] {
        nodes_[index].first = begin;
        nodes_[index].count = count;
        return index;
    };
    if (count <= std::uint32_t(max_leaf_))
        return make_leaf();

    constexpr int kBins = 12;
    int best_axis = -1, best_split = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 3; ++axis) {
        double lo = cbox.lo[axis], extent = cbox.hi[axis] - lo;
        if (extent <= 0.0)
            continue;
        std::array<Bounds, kBins> bin_box;
        std::array<std::uint32_t, kBins> bin_count{};
        for (std::uint32_t i = begin; i < end; ++i) {
            int b = std::min(kBins - 1, int((centroid[order_[i]][axis] - lo) / extent * kBins));
            bin_box[b].grow(face_box[order_[i]]);
            ++bin_count[b];
        }
        std::array<double, kBins> right_cost{};
        Bounds acc;
        std::uint32_t acc_n = 0;
        for (int b = kBins - 1; b > 0; --b) {
            acc.grow(bin_box[b]);
            acc_n += bin_count[b];
            right_cost[b] = acc_n ? acc.area() * acc_n : 0.0;
        }
        acc = Bounds{};
        acc_n = 0;
        for (int b = 0; b < kBins - 1; ++b) {
            acc.grow(bin_box[b]);
            acc_n += bin_count[b];
            double cost = (acc_n ? acc.area() * acc_n : 0.0) + right_cost[b + 1];
            if (acc_n > 0 && acc_n < count && cost < best_cost) {
                best_cost = cost;
                best_axis = axis;
                best_split = b;
            }
        }
    }
    if (best_axis < 0 || best_cost >= box.area() * count)
        return make_leaf();

    const double lo = cbox.lo[best_axis], extent = cbox.hi[best_axis] - lo;
    auto mid_it = std::partition(order_.begin() + begin, order_.begin() + end, [&](std::uint32_t f) {
        int b = std::min(kBins - 1, int((centroid[f][best_axis] - lo) / extent * kBins));
        return b <= best_split;
    });
    std::uint32_t mid = std::uint32_t(mid_it - order_.begin());
    if (mid == begin || mid == end)
        return make_leaf();

    build(begin, mid, face_box, centroid);
    std::uint32_t right = build(mid, end, face_box, centroid);
    nodes_[index].first = right;
    nodes_[index].count = 0;
    return index;
}

bool Bvh::slab(const Bounds &b, const Ray &ray, const Vec3 &inv_dir, double t_min, double t_max) const {
    for (int a = 0; a < 3; ++a) {
        double t0 = (b.lo[a] - ray.origin[a]) * inv_dir[a];
        double t1 = (b.hi[a] - ray.origin[a]) * inv_dir[a];
        if (t0 > t1)
            std::swap(t0, t1);
        // NaN from 0 * inf compares false and leaves the interval untouched.
        if (t0 > t_min)
            t_min = t0;
        if (t1 < t_max)
            t_max = t1;
        if (t_min > t_max * (1.0 + 1e-12) + 1e-12)
            return false;
    }
    return true;
}

std::optional<Hit> Bvh::intersect(const Ray &ray, double t_min, double t_max) const {
    const Vec3 inv{1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z};
    std::optional<Hit> best;
    std::uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Node &node = nodes_[stack[--sp]];
        double limit = best ? best->t : t_max;
        if (!slab(node.box, ray, inv, t_min, limit))
            continue;
        if (node.count > 0) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                std::uint32_t f = order_[i];
                // Use t_max (not the current best) so equal-t hits can tie-break on face index.
                auto h = intersect_triangle(ray, mesh_->vertex(f, 0), mesh_->vertex(f, 1), mesh_->vertex(f, 2),
                                            t_min, best ? std::nextafter(best->t, t_max) : t_max);
                if (h) {
                    h->face = f;
                    if (!best || closer(*h, *best))
                        best = h;
                }
            }
        } else {
            std::uint32_t self = std::uint32_t(&node - nodes_.data());
            stack[sp++] = node.first;
            stack[sp++] = self + 1;
        }
    }
    return best;
}

bool Bvh::occluded(const Ray &ray, double t_min, double t_max) const {
    const Vec3 inv{1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z};
    std::uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Node &node = nodes_[stack[--sp]];
        if (!slab(node.box, ray, inv, t_min, t_max))
            continue;
        if (node.count > 0) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                std::uint32_t f = order_[i];
                if (intersect_triangle(ray, mesh_->vertex(f, 0), mesh_->vertex(f, 1), mesh_->vertex(f, 2), t_min,
                                       t_max))
                    return true;
            }
        } else {
            std::uint32_t self = std::uint32_t(&node - nodes_.data());
            stack[sp++] = node.first;
            stack[sp++] = self + 1;
        }
    }
    return false;
}

} // namespace rmap
