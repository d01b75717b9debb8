#include "rmap/camera.hpp"

#include <stdexcept>

namespace rmap {

Camera::Camera(const Mat3 &rotation, const Vec3 &translation, double fov_y, int width, int height)
    : rotation_(rotation), translation_(translation), fov_y_(fov_y), width_(width), height_(height) {
    if (!(fov_y > 0.0 && fov_y < kPi))
        throw std::invalid_argument("camera field of view must lie in (0, pi)");
    if (width < 1 || height < 1)
        throw std::invalid_argument("camera image dimensions must be at least 1");
}

Camera Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fov_y, int width, int height) {
    Vec3 fwd = target - eye;
    if (length(fwd) <= 0.0)
        throw std::invalid_argument("camera eye and target coincide");
    fwd = normalize(fwd);
    Vec3 right = cross(fwd, up);
    if (length(right) < 1e-9) // looking along the up axis
        right = cross(fwd, std::abs(fwd.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0});
    right = normalize(right);
    Vec3 down = cross(fwd, right);
    Mat3 r{{right.x, right.y, right.z, down.x, down.y, down.z, fwd.x, fwd.y, fwd.z}};
    Vec3 t = -(r * eye);
    return Camera(r, t, fov_y, width, height);
}

Camera Camera::orbit(const Orbit &o, double fov_y, int width, int height) {
    if (!(o.distance > 0.0))
        throw std::invalid_argument("orbit distance must be positive");
    double st = std::sin(o.theta);
    Vec3 eye = o.look_at + Vec3{st * std::cos(o.phi), st * std::sin(o.phi), std::cos(o.theta)} * o.distance;
    Camera cam = look_at(eye, o.look_at, {0, 0, 1}, fov_y, width, height);
    cam.orbit_ = o;
    return cam;
}

Vec3 Camera::center() const { return -rotation_.transpose_mul(translation_); }

Ray Camera::generate_ray(int px, int py) const {
    double tan_half = std::tan(0.5 * fov_y_);
    double aspect = double(width_) / height_;
    double x = (2.0 * (px + 0.5) / width_ - 1.0) * tan_half * aspect;
    double y = (2.0 * (py + 0.5) / height_ - 1.0) * tan_half;
    return {center(), normalize(to_world_dir({x, y, 1.0}))};
}

std::optional<std::array<double, 2>> Camera::project(const Vec3 &world) const {
    Vec3 pc = rotation_ * world + translation_;
    if (pc.z <= 0.0)
        return std::nullopt;
    double tan_half = std::tan(0.5 * fov_y_);
    double aspect = double(width_) / height_;
    double x = pc.x / pc.z / (tan_half * aspect);
    double y = pc.y / pc.z / tan_half;
    return std::array<double, 2>{(x + 1.0) * 0.5 * width_, (y + 1.0) * 0.5 * height_};
}

Camera Camera::with_size(int width, int height) const {
    Camera c(rotation_, translation_, fov_y_, width, height);
    c.orbit_ = orbit_;
    return c;
}

} // namespace rmap
