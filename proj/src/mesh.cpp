#include "rmap/mesh.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rmap/errors.hpp"

namespace rmap {

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces) : vertices_(std::move(vertices)) {
    faces_.reserve(faces.size());
    normals_.reserve(faces.size());
    for (const Face &f : faces) {
        for (std::uint32_t i : f)
            if (i >= vertices_.size())
                throw std::invalid_argument("face index " + std::to_string(i) + " out of range");
        Vec3 n = cross(vertices_[f[1]] - vertices_[f[0]], vertices_[f[2]] - vertices_[f[0]]);
        double len = length(n);
        if (!(len > 1e-14)) {
            ++dropped_;
            continue;
        }
        faces_.push_back(f);
        normals_.push_back(n / len);
    }
}

Vec3 TriangleMesh::centroid(std::uint32_t face) const {
    return (vertex(face, 0) + vertex(face, 1) + vertex(face, 2)) / 3.0;
}

double TriangleMesh::area(std::uint32_t face) const {
    return 0.5 * length(cross(vertex(face, 1) - vertex(face, 0), vertex(face, 2) - vertex(face, 0)));
}

namespace {

std::uint32_t parse_index(const std::string &tok, std::size_t nverts, const std::string &source, int line) {
    std::string head = tok.substr(0, tok.find('/'));
    long v = 0;
    auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
    if (ec != std::errc() || ptr != head.data() + head.size())
        throw ParseError(source, line, "malformed face index '" + tok + "'");
    if (v < 0) // relative indexing
        v = long(nverts) + v + 1;
    if (v < 1 || std::size_t(v) > nverts)
        throw ParseError(source, line, "face index " + head + " out of range");
    return std::uint32_t(v - 1);
}

} // namespace

TriangleMesh read_obj(std::istream &is, const std::string &source) {
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    std::string text;
    int line = 0;
    while (std::getline(is, text)) {
        ++line;
        std::istringstream ls(text);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#')
            continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z))
                throw ParseError(source, line, "vertex needs three coordinates");
            verts.push_back(p);
        } else if (tag == "f") {
            std::vector<std::string> toks;
            for (std::string t; ls >> t;)
                toks.push_back(t);
            if (toks.size() != 3)
                throw ParseError(source, line, "only triangular faces are supported (got " +
                                                   std::to_string(toks.size()) + " vertices)");
            faces.push_back({parse_index(toks[0], verts.size(), source, line),
                             parse_index(toks[1], verts.size(), source, line),
                             parse_index(toks[2], verts.size(), source, line)});
        }
    }
    return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh load_obj(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open mesh " + path.string());
    return read_obj(is, path.string());
}

void write_obj(std::ostream &os, const TriangleMesh &mesh) {
    os << std::setprecision(17);
    for (const Vec3 &v : mesh.vertices())
        os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const Face &f : mesh.faces())
        os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void save_obj(const std::filesystem::path &path, const TriangleMesh &mesh) {
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    write_obj(os, mesh);
}

TriangleMesh make_icosphere(int subdivisions, double radius) {
    if (subdivisions < 0)
        throw std::invalid_argument("icosphere subdivisions must be non-negative");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3 &p : v)
        p = normalize(p);
    std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                           {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            auto key = std::minmax(a, b);
            auto [it, inserted] = midpoint.try_emplace({key.first, key.second}, std::uint32_t(v.size()));
            if (inserted)
                v.push_back(normalize(v[a] + v[b]));
            return it->second;
        };
        std::vector<Face> next;
        next.reserve(f.size() * 4);
        for (const Face &tri : f) {
            std::uint32_t ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    for (Vec3 &p : v)
        p *= radius;
    return TriangleMesh(std::move(v), std::move(f));
}

} // namespace rmap
