#include "rmap/spherical.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "rmap/errors.hpp"

namespace rmap {

SphericalAngles canonicalize(SphericalAngles a) {
    a.theta = std::clamp(a.theta, 0.0, kPi);
    a.phi = std::fmod(a.phi, kTwoPi);
    if (a.phi < 0)
        a.phi += kTwoPi;
    if (a.phi >= kTwoPi) // fmod of a tiny negative can round up to exactly 2pi
        a.phi = 0.0;
    return a;
}

SphericalAngles dir_to_angles(const Vec3 &d) {
    if (!is_unit(d))
        throw std::invalid_argument("dir_to_angles requires a unit direction");
    return canonicalize({std::acos(std::clamp(d.z, -1.0, 1.0)), std::atan2(d.y, d.x)});
}

Vec3 angles_to_dir(const SphericalAngles &a) {
    double st = std::sin(a.theta);
    return {st * std::cos(a.phi), st * std::sin(a.phi), std::cos(a.theta)};
}

double angular_distance(const Vec3 &a, const Vec3 &b) {
    // atan2 form stays accurate for nearly parallel vectors.
    return std::atan2(length(cross(a, b)), dot(a, b));
}

Texel angles_to_texel(const SphericalAngles &a, int height, int width) {
    int row = int(std::floor(a.theta / kPi * height));
    int col = int(std::floor(a.phi / kTwoPi * width));
    return {std::clamp(row, 0, height - 1), std::clamp(col, 0, width - 1)};
}

Vec3 texel_direction(const Texel &t, int height, int width) {
    return angles_to_dir({(t.row + 0.5) * kPi / height, (t.col + 0.5) * kTwoPi / width});
}

ReflectanceMap::ReflectanceMap(int height, int width) : height_(height), width_(width) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("reflectance map dimensions must be positive");
}

ReflectanceMap::Cell &ReflectanceMap::cell_at(std::uint32_t index) {
    auto it = std::lower_bound(cells_.begin(), cells_.end(), index,
                               [](const Cell &c, std::uint32_t i) { return c.index < i; });
    if (it == cells_.end() || it->index != index)
        it = cells_.insert(it, Cell{index, 0, {}});
    return *it;
}

void ReflectanceMap::accumulate(const Vec3 &d, const Rgb &radiance) {
    accumulate(angles_to_texel(dir_to_angles(d), height_, width_), radiance);
}

void ReflectanceMap::accumulate(const Texel &t, const Rgb &radiance, std::uint32_t count) {
    if (!radiance.is_finite() || radiance.min_component() < 0.0)
        throw std::invalid_argument("reflectance map samples must be finite and non-negative");
    if (t.row < 0 || t.row >= height_ || t.col < 0 || t.col >= width_)
        throw std::out_of_range("texel outside the reflectance map");
    if (count == 0)
        return;
    Cell &c = cell_at(std::uint32_t(t.row * width_ + t.col));
    c.count += count;
    c.sum += radiance;
}

std::uint32_t ReflectanceMap::count(const Texel &t) const {
    std::uint32_t index = std::uint32_t(t.row * width_ + t.col);
    auto it = std::lower_bound(cells_.begin(), cells_.end(), index,
                               [](const Cell &c, std::uint32_t i) { return c.index < i; });
    return (it != cells_.end() && it->index == index) ? it->count : 0;
}

Rgb ReflectanceMap::sum(const Texel &t) const {
    std::uint32_t index = std::uint32_t(t.row * width_ + t.col);
    auto it = std::lower_bound(cells_.begin(), cells_.end(), index,
                               [](const Cell &c, std::uint32_t i) { return c.index < i; });
    return (it != cells_.end() && it->index == index) ? it->sum : Rgb{};
}

Rgb ReflectanceMap::mean(const Texel &t) const {
    std::uint32_t n = count(t);
    return n ? sum(t) / double(n) : Rgb{};
}

std::uint64_t ReflectanceMap::total_samples() const {
    std::uint64_t n = 0;
    for (const Cell &c : cells_)
        n += c.count;
    return n;
}

void ReflectanceMap::merge_from(const ReflectanceMap &other) {
    if (other.height_ != height_ || other.width_ != width_)
        throw std::invalid_argument("cannot merge reflectance maps of different dimensions");
    std::vector<Cell> out;
    out.reserve(cells_.size() + other.cells_.size());
    auto a = cells_.cbegin(), b = other.cells_.cbegin();
    while (a != cells_.end() || b != other.cells_.end()) {
        if (b == other.cells_.end() || (a != cells_.end() && a->index < b->index)) {
            out.push_back(*a++);
        } else if (a == cells_.end() || b->index < a->index) {
            out.push_back(*b++);
        } else {
            out.push_back({a->index, a->count + b->count, a->sum + b->sum});
            ++a;
            ++b;
        }
    }
    cells_ = std::move(out);
}

ReflectanceMap merge(const ReflectanceMap &a, const ReflectanceMap &b) {
    ReflectanceMap out = a;
    out.merge_from(b);
    return out;
}

ResolvedMap resolve(const ReflectanceMap &map) {
    ResolvedMap out{LinearImage(map.width(), map.height()), map.occupancy()};
    for (const auto &c : map.cells())
        out.image[c.index] = c.sum / double(c.count);
    return out;
}

namespace {

constexpr char kMagic[4] = {'R', 'M', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream &os, std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), 4); }
void put_f32(std::ostream &os, float v) { os.write(reinterpret_cast<const char *>(&v), 4); }

std::uint32_t get_u32(std::istream &is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char *>(&v), 4);
    return v;
}
float get_f32(std::istream &is) {
    float v = 0;
    is.read(reinterpret_cast<char *>(&v), 4);
    return v;
}

} // namespace

void write_rmap(std::ostream &os, const ReflectanceMap &map) {
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, std::uint32_t(map.height()));
    put_u32(os, std::uint32_t(map.width()));
    auto it = map.cells().begin();
    for (std::uint32_t i = 0; i < std::uint32_t(map.texel_count()); ++i) {
        if (it != map.cells().end() && it->index == i) {
            put_u32(os, it->count);
            put_f32(os, float(it->sum.r));
            put_f32(os, float(it->sum.g));
            put_f32(os, float(it->sum.b));
            ++it;
        } else {
            put_u32(os, 0);
            put_f32(os, 0.f);
            put_f32(os, 0.f);
            put_f32(os, 0.f);
        }
    }
}

ReflectanceMap read_rmap(std::istream &is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not an RMAP file (bad magic)");
    std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw IoError("unsupported RMAP version " + std::to_string(version));
    std::uint32_t h = get_u32(is), w = get_u32(is);
    if (!is || h == 0 || w == 0 || h > 4096 || w > 4096)
        throw IoError("corrupt RMAP header");
    ReflectanceMap map(static_cast<int>(h), static_cast<int>(w));
    for (std::uint32_t i = 0; i < h * w; ++i) {
        std::uint32_t n = get_u32(is);
        Rgb s{get_f32(is), get_f32(is), get_f32(is)};
        if (!is)
            throw IoError("truncated RMAP data");
        if (n > 0)
            map.accumulate(Texel{int(i / w), int(i % w)}, s, n);
    }
    return map;
}

void save_rmap(const std::filesystem::path &path, const ReflectanceMap &map) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    write_rmap(os, map);
    if (!os)
        throw IoError("write failed for " + path.string());
}

ReflectanceMap load_rmap(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    try {
        return read_rmap(is);
    } catch (const IoError &e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace rmap
