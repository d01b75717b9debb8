#pragma once

#include <array>
#include <optional>

#include "rmap/vec.hpp"

namespace rmap {

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 row(int i) const { return {m[3 * i], m[3 * i + 1], m[3 * i + 2]}; }
    Vec3 operator*(const Vec3 &v) const { return {dot(row(0), v), dot(row(1), v), dot(row(2), v)}; }
    Vec3 transpose_mul(const Vec3 &v) const { return row(0) * v.x + row(1) * v.y + row(2) * v.z; }
    bool operator==(const Mat3 &) const = default;
};

struct Ray {
    Vec3 origin;
    Vec3 dir; ///< unit length
};

/// Orbit placement used to build a pose: camera center at
/// look_at + distance * (sin t cos p, sin t sin p, cos t) looking at look_at, +z up.
struct Orbit {
    double theta = 0;
    double phi = 0;
    double distance = 1;
    Vec3 look_at;
    bool operator==(const Orbit &) const = default;
};

/// Pinhole camera. The pose maps world to camera coordinates, x_cam = R x_world + t,
/// with camera axes x right, y down, z forward (the COLMAP convention).
class Camera {
  public:
    /// Throws std::invalid_argument unless 0 < fov_y < pi and both dimensions are >= 1.
    Camera(const Mat3 &rotation, const Vec3 &translation, double fov_y, int width, int height);

    /// Throws std::invalid_argument for distance <= 0 in addition to the pose checks.
    static Camera orbit(const Orbit &o, double fov_y, int width, int height);
    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fov_y, int width, int height);

    const Mat3 &rotation() const { return rotation_; }
    const Vec3 &translation() const { return translation_; }
    double fov_y() const { return fov_y_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const std::optional<Orbit> &orbit_params() const { return orbit_; }

    Vec3 center() const;
    Vec3 forward() const { return rotation_.row(2); }
    Vec3 to_world_dir(const Vec3 &cam_dir) const { return rotation_.transpose_mul(cam_dir); }
    Vec3 to_camera_dir(const Vec3 &world_dir) const { return rotation_ * world_dir; }

    /// Primary ray through the center of pixel (px, py).
    Ray generate_ray(int px, int py) const;
    /// Continuous pixel coordinates of a world point; nullopt if behind the camera.
    std::optional<std::array<double, 2>> project(const Vec3 &world) const;

    Camera with_size(int width, int height) const;
    bool operator==(const Camera &) const = default;

  private:
    Mat3 rotation_;
    Vec3 translation_;
    double fov_y_;
    int width_, height_;
    std::optional<Orbit> orbit_;
};

} // namespace rmap
