#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rmap/vec.hpp"

namespace rmap {

using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh with counter-clockwise winding. Zero-area faces are
/// dropped at construction so every face has a well-defined unit normal.
class TriangleMesh {
  public:
    TriangleMesh() = default;
    /// Throws std::invalid_argument for out-of-range indices.
    TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    const std::vector<Vec3> &vertices() const { return vertices_; }
    const std::vector<Face> &faces() const { return faces_; }
    const std::vector<Vec3> &normals() const { return normals_; }
    std::size_t face_count() const { return faces_.size(); }
    bool empty() const { return faces_.empty(); }
    /// Number of input faces removed as degenerate.
    std::size_t dropped_faces() const { return dropped_; }

    const Vec3 &vertex(std::uint32_t face, int corner) const { return vertices_[faces_[face][corner]]; }
    const Vec3 &normal(std::uint32_t face) const { return normals_[face]; }
    Vec3 centroid(std::uint32_t face) const;
    double area(std::uint32_t face) const;

    bool operator==(const TriangleMesh &) const = default;

  private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<Vec3> normals_;
    std::size_t dropped_ = 0;
};

/// ASCII mesh: `v x y z` and `f i j k` lines with 1-based indices (slash
/// suffixes such as `i/t/n` are accepted and ignored), `#` comments. Other
/// record types are skipped. Non-triangular faces raise ParseError.
TriangleMesh read_obj(std::istream &is, const std::string &source = "<stream>");
TriangleMesh load_obj(const std::filesystem::path &path);
void write_obj(std::ostream &os, const TriangleMesh &mesh);
void save_obj(const std::filesystem::path &path, const TriangleMesh &mesh);

/// Unit icosphere centered at the origin, 20 * 4^subdivisions faces.
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0);

} // namespace rmap
