#pragma once

// Spherical parameterization and reflectance-map accumulation.
//
// A reflectance map is an equirectangular grid over directions: rows span the
// zenith angle theta in [0, pi] from +z, columns span the azimuth phi in
// [0, 2pi) measured from +x towards +y. Bins are half-open with the upper
// edge clamped into the last bin. Each texel keeps a running RGB sum and a
// sample count; the resolved value is the mean.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "rmap/image.hpp"
#include "rmap/vec.hpp"

namespace rmap {

inline constexpr int kMapHeight = 60;
inline constexpr int kMapWidth = 120;

struct SphericalAngles {
    double theta = 0; ///< zenith, [0, pi]
    double phi = 0;   ///< azimuth, [0, 2pi)
};

/// Throws std::invalid_argument for non-unit input (tolerance 1e-6).
SphericalAngles dir_to_angles(const Vec3 &d);
Vec3 angles_to_dir(const SphericalAngles &a);
/// Wraps phi into [0, 2pi) and clamps theta into [0, pi].
SphericalAngles canonicalize(SphericalAngles a);
/// Great-circle angle between two directions, radians.
double angular_distance(const Vec3 &a, const Vec3 &b);

struct Texel {
    int row = 0;
    int col = 0;
    bool operator==(const Texel &) const = default;
};

Texel angles_to_texel(const SphericalAngles &a, int height = kMapHeight, int width = kMapWidth);
/// Direction through the center of a texel.
Vec3 texel_direction(const Texel &t, int height = kMapHeight, int width = kMapWidth);

/// Sparse accumulator over the texel grid. Only occupied texels are stored,
/// ordered by linear index row * width + col.
class ReflectanceMap {
  public:
    struct Cell {
        std::uint32_t index = 0;
        std::uint32_t count = 0;
        Rgb sum;
        bool operator==(const Cell &) const = default;
    };

    ReflectanceMap(int height = kMapHeight, int width = kMapWidth);

    int height() const { return height_; }
    int width() const { return width_; }
    int texel_count() const { return height_ * width_; }

    /// Adds a sample along unit direction d. Throws std::invalid_argument for
    /// non-unit d or for negative / non-finite radiance.
    void accumulate(const Vec3 &d, const Rgb &radiance);
    void accumulate(const Texel &t, const Rgb &radiance, std::uint32_t count = 1);

    /// Sample count and radiance sum of one texel (zeros when empty).
    std::uint32_t count(const Texel &t) const;
    Rgb sum(const Texel &t) const;
    /// Mean radiance, or black when the texel is empty.
    Rgb mean(const Texel &t) const;

    const std::vector<Cell> &cells() const { return cells_; }
    Texel texel_of(const Cell &c) const { return {int(c.index) / width_, int(c.index) % width_}; }

    int occupied() const { return int(cells_.size()); }
    double occupancy() const { return double(occupied()) / texel_count(); }
    std::uint64_t total_samples() const;
    bool empty() const { return cells_.empty(); }

    /// Adds every texel of `other`; throws std::invalid_argument on a dimension mismatch.
    void merge_from(const ReflectanceMap &other);

    bool operator==(const ReflectanceMap &) const = default;

  private:
    Cell &cell_at(std::uint32_t index);

    int height_;
    int width_;
    std::vector<Cell> cells_;
};

ReflectanceMap merge(const ReflectanceMap &a, const ReflectanceMap &b);

struct ResolvedMap {
    LinearImage image; ///< height x width, black at empty texels
    double occupancy = 0;
};

ResolvedMap resolve(const ReflectanceMap &map);

// Binary map files: little-endian header {"RMAP", u32 version=1, u32 height,
// u32 width} followed by height*width records {u32 count, f32 sum_r, f32 sum_g, f32 sum_b}.
void write_rmap(std::ostream &os, const ReflectanceMap &map);
ReflectanceMap read_rmap(std::istream &is);
void save_rmap(const std::filesystem::path &path, const ReflectanceMap &map);
ReflectanceMap load_rmap(const std::filesystem::path &path);

} // namespace rmap
