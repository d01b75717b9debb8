#include "rmap/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rmap/errors.hpp"
#include "rmap/parallel.hpp"
#include "rmap/renderer.hpp"
#include "rmap/spherical.hpp"

namespace rmap {

namespace fs = std::filesystem;

void MaterialSet::append(const MaterialSet &other) {
    entries.insert(entries.end(), other.entries.begin(), other.entries.end());
    origin.insert(origin.end(), other.origin.begin(), other.origin.end());
}

std::size_t GridSpec::count() const {
    std::size_t n = roughness_levels.size();
    for (int i = 0; i < 6; ++i)
        n *= color_levels.size();
    return n;
}

GridSpec GridSpec::standard() { return {}; }

GridSpec GridSpec::desk() { return {{0.25, 0.75}, {0.2, 0.5, 0.8}, 192}; }

double quantize_label(double v) { return double(float(v)); }

ReflectanceParams quantize_label(const ReflectanceParams &p) {
    auto a = p.to_array();
    for (double &v : a)
        v = quantize_label(v);
    return ReflectanceParams::from_array(a);
}

namespace {

void check_levels(const std::vector<double> &levels, const char *what) {
    if (levels.empty())
        throw std::invalid_argument(std::string("grid spec: no ") + what + " levels");
    std::set<double> seen;
    for (double v : levels) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument(std::string("grid spec: ") + what + " level outside [0,1]");
        if (!seen.insert(quantize_label(v)).second)
            throw std::invalid_argument(std::string("grid spec: duplicate ") + what + " level");
    }
}

} // namespace

MaterialSet material_grid(const GridSpec &spec) {
    check_levels(spec.color_levels, "color");
    check_levels(spec.roughness_levels, "roughness");
    const std::size_t n = spec.count();
    if (spec.expected_count && *spec.expected_count != n)
        throw std::invalid_argument("grid spec yields " + std::to_string(n) + " materials, expected " +
                                    std::to_string(*spec.expected_count));
    MaterialSet set;
    set.entries.reserve(n);
    const std::size_t c = spec.color_levels.size();
    std::array<std::size_t, 6> idx{};
    for (std::size_t flat = 0; flat < n / spec.roughness_levels.size(); ++flat) {
        std::size_t rest = flat;
        for (int k = 5; k >= 0; --k) {
            idx[std::size_t(k)] = rest % c;
            rest /= c;
        }
        auto lv = [&](int k) { return spec.color_levels[idx[std::size_t(k)]]; };
        for (double r : spec.roughness_levels)
            set.entries.push_back(
                quantize_label(ReflectanceParams(Rgb(lv(0), lv(1), lv(2)), Rgb(lv(3), lv(4), lv(5)), r)));
    }
    set.origin.assign(n, MaterialOrigin::grid);
    return set;
}

MaterialSet material_random(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MaterialSet set;
    set.seed = seed;
    set.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 7> a{};
        for (double &v : a)
            v = u(rng);
        set.entries.push_back(quantize_label(ReflectanceParams::from_array(a)));
    }
    set.origin.assign(n, MaterialOrigin::random);
    return set;
}

MaterialSet standard_materials(std::uint64_t seed) {
    MaterialSet set = material_grid(GridSpec::standard());
    set.append(material_random(kStandardRandomMaterials, seed));
    set.seed = seed;
    return set;
}

std::vector<Camera> viewpoint_grid(const ViewpointOptions &opts) {
    static constexpr double kZenith[kViewZeniths] = {kPi / 9.0, 5.0 * kPi / 18.0, 4.0 * kPi / 9.0};
    std::vector<Camera> cams;
    for (double theta : kZenith)
        for (int a = 0; a < kViewAzimuths; ++a)
            cams.push_back(Camera::orbit({theta, a * kPi / 4.0, opts.distance, {}}, opts.fov_y, opts.width,
                                         opts.height));
    return cams;
}

Vec3 dataset_light_camera() { return normalize(Vec3{-0.5, -0.5, -1.0}); }

Vec3 dataset_light_dir(const Camera &cam) { return -cam.to_world_dir(dataset_light_camera()); }

void write_manifest_row(std::ostream &os, const ManifestRow &row) {
    os << row.map_path;
    char buf[32];
    for (double v : row.label.to_array()) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        os << '\t' << buf;
    }
    os << '\n';
}

namespace {

/// Returns nullopt for a malformed or incomplete line.
std::optional<ManifestRow> parse_manifest_line(const std::string &line) {
    std::istringstream is(line);
    ManifestRow row;
    if (!std::getline(is, row.map_path, '\t') || row.map_path.empty())
        return std::nullopt;
    std::array<double, 7> a{};
    for (double &v : a) {
        std::string tok;
        if (!std::getline(is, tok, '\t'))
            return std::nullopt;
        char *end = nullptr;
        float f = std::strtof(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            return std::nullopt;
        v = double(f);
    }
    std::string extra;
    if (std::getline(is, extra, '\t'))
        return std::nullopt;
    try {
        row.label = ReflectanceParams::from_array(a);
    } catch (const std::invalid_argument &) {
        return std::nullopt;
    }
    return row;
}

/// Complete, well-formed rows only; a torn trailing line is ignored.
std::vector<ManifestRow> read_manifest_prefix(const fs::path &path) {
    std::vector<ManifestRow> rows;
    std::ifstream is(path, std::ios::binary);
    if (!is)
        return rows;
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (true) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string::npos)
            break;
        auto row = parse_manifest_line(content.substr(pos, nl - pos));
        if (!row)
            break;
        rows.push_back(*row);
        pos = nl + 1;
    }
    return rows;
}

std::string map_name(std::size_t material, std::size_t view, MapFormat fmt) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "maps/m%06zu_v%02zu.%s", material, view, fmt == MapFormat::rmap ? "rmap" : "pfm");
    return buf;
}

} // namespace

std::vector<ManifestRow> read_manifest(const fs::path &path) {
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open manifest " + path.string());
    std::vector<ManifestRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto row = parse_manifest_line(line);
        if (!row)
            throw ParseError(path.string(), lineno, "malformed manifest row");
        rows.push_back(*row);
    }
    return rows;
}

void write_manifest(const fs::path &path, const std::vector<ManifestRow> &rows) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    for (const auto &r : rows)
        write_manifest_row(os, r);
    if (!os)
        throw IoError("failed writing manifest " + path.string());
}

std::vector<ManifestRow> generate_dataset(const MaterialSet &materials, const std::vector<Camera> &cameras,
                                          const fs::path &out_dir, const GenerateOptions &opts) {
    const std::size_t views = cameras.size(), total = materials.size() * views;
    std::error_code ec;
    fs::create_directories(out_dir / "maps", ec);
    if (ec)
        throw IoError("cannot create output directory " + (out_dir / "maps").string() + ": " + ec.message());

    std::vector<ManifestRow> expected(total);
    for (std::size_t i = 0; i < total; ++i)
        expected[i] = {map_name(i / views, i % views, opts.format), materials.entries[i / views]};

    const fs::path manifest = out_dir / "manifest.tsv";
    std::vector<ManifestRow> done = read_manifest_prefix(manifest);
    std::size_t resume = 0;
    while (resume < done.size() && resume < total && done[resume] == expected[resume] &&
           fs::exists(out_dir / done[resume].map_path))
        ++resume;
    // Rewrite the trusted prefix so a torn or mismatched tail disappears.
    expected.resize(resume);
    write_manifest(manifest, expected);
    expected.resize(total);
    for (std::size_t i = resume; i < total; ++i)
        expected[i] = {map_name(i / views, i % views, opts.format), materials.entries[i / views]};

    std::ofstream os(manifest, std::ios::binary | std::ios::app);
    const std::size_t batch = std::max<std::size_t>(opts.batch, 1);
    for (std::size_t start = resume; start < total; start += batch) {
        const std::size_t n = std::min(batch, total - start);
        parallel_for(n, [&](std::size_t k) {
            const std::size_t i = start + k, m = i / views, v = i % views;
            const Camera &cam = cameras[v];
            ReflectanceMap map = sphere_map(materials.entries[m], cam, dataset_light_dir(cam));
            const fs::path path = out_dir / expected[i].map_path;
            try {
                if (opts.format == MapFormat::rmap)
                    save_rmap(path, map);
                else
                    save_pfm(path, resolve(map).image);
            } catch (const std::exception &e) {
                throw IoError("writing map for material " + std::to_string(m) + ", view " + std::to_string(v) +
                              " (" + path.string() + "): " + e.what());
            }
        });
        for (std::size_t k = 0; k < n; ++k)
            write_manifest_row(os, expected[start + k]);
        os.flush();
        if (!os)
            throw IoError("failed appending to manifest " + manifest.string());
    }
    return expected;
}

LinearImage load_map_image(const fs::path &path) {
    if (path.extension() == ".rmap")
        return resolve(load_rmap(path)).image;
    return load_image(path);
}

AugmentConfig AugmentConfig::none() {
    AugmentConfig c;
    c.mask_fraction_min = c.mask_fraction_max = 0.0;
    c.salt_pepper_fraction = 0.0;
    c.noise_patches = 0;
    c.noise_radius_max = 0;
    c.noise_amplitude_max = 0.0;
    c.flip_h_prob = c.flip_v_prob = 0.0;
    return c;
}

void AugmentConfig::validate() const {
    auto unit = [](double v, const char *name) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument(std::string("augment config: ") + name + " outside [0,1]");
    };
    unit(mask_fraction_min, "mask_fraction_min");
    unit(mask_fraction_max, "mask_fraction_max");
    unit(salt_pepper_fraction, "salt_pepper_fraction");
    unit(flip_h_prob, "flip_h_prob");
    unit(flip_v_prob, "flip_v_prob");
    if (mask_fraction_min > mask_fraction_max)
        throw std::invalid_argument("augment config: mask_fraction_min exceeds mask_fraction_max");
    if (noise_patches < 0 || noise_radius_max < 0 || !(noise_amplitude_max >= 0.0))
        throw std::invalid_argument("augment config: negative noise setting");
}

LinearImage flip_horizontal(const LinearImage &img) {
    LinearImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(img.width() - 1 - x, y) = img.at(x, y);
    return out;
}

LinearImage flip_vertical(const LinearImage &img) {
    LinearImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(x, img.height() - 1 - y) = img.at(x, y);
    return out;
}

std::size_t occupied_texels(const LinearImage &img) {
    return std::size_t(
        std::count_if(img.pixels().begin(), img.pixels().end(), [](const Rgb &p) { return p.max_component() > 0; }));
}

LinearImage augment(const LinearImage &img, const AugmentConfig &cfg, std::uint64_t stream) {
    cfg.validate();
    std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), std::uint32_t(stream),
                      std::uint32_t(stream >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LinearImage out = img;
    const int w = img.width(), h = img.height();

    double mask = cfg.mask_fraction_min + (cfg.mask_fraction_max - cfg.mask_fraction_min) * u(rng);
    if (mask > 0) {
        std::vector<std::size_t> occ;
        for (std::size_t i = 0; i < out.pixel_count(); ++i)
            if (out[i].max_component() > 0)
                occ.push_back(i);
        std::shuffle(occ.begin(), occ.end(), rng);
        std::size_t k = std::size_t(std::llround(mask * double(occ.size())));
        for (std::size_t i = 0; i < k; ++i)
            out[occ[i]] = Rgb();
    }

    if (cfg.salt_pepper_fraction > 0) {
        std::size_t k = std::size_t(std::llround(cfg.salt_pepper_fraction * double(out.pixel_count())));
        std::uniform_int_distribution<std::size_t> pick(0, out.pixel_count() - 1);
        for (std::size_t i = 0; i < k; ++i)
            out[pick(rng)] = u(rng) < 0.5 ? Rgb::gray(1.0) : Rgb();
    }

    if (cfg.noise_patches > 0 && cfg.noise_radius_max > 0 && cfg.noise_amplitude_max > 0) {
        std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1), pr(1, cfg.noise_radius_max);
        for (int p = 0; p < cfg.noise_patches; ++p) {
            int cx = px(rng), cy = py(rng), r = pr(rng);
            double amp = cfg.noise_amplitude_max * u(rng);
            for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y)
                for (int x = cx - r; x <= cx + r; ++x) {
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r)
                        continue;
                    Rgb &v = out.at((x % w + w) % w, y); // azimuth wraps around
                    if (v.max_component() <= 0)
                        continue;
                    for (int c = 0; c < 3; ++c)
                        v[c] = std::clamp(v[c] + amp * (2.0 * u(rng) - 1.0), 0.0, std::max(1.0, v[c]));
                }
        }
    }

    if (cfg.flip_h_prob > 0 && u(rng) < cfg.flip_h_prob)
        out = flip_horizontal(out);
    if (cfg.flip_v_prob > 0 && u(rng) < cfg.flip_v_prob)
        out = flip_vertical(out);
    return out;
}

} // namespace rmap
