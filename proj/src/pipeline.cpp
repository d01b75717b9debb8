#include "rmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rmap/bvh.hpp"
#include "rmap/errors.hpp"
#include "rmap/parallel.hpp"
#include "rmap/regressor.hpp"

namespace rmap {

namespace fs = std::filesystem;

namespace {

constexpr const char *kTableHeader =
    "triangle_id\tkd_r\tkd_g\tkd_b\tks_r\tks_g\tks_b\troughness\testimator\tresidual\tsamples";

double deg_to_rad(double d) { return d * kPi / 180.0; }

/// Shortest degrees text that parses back to exactly `rad`.
std::string fov_degrees_text(double rad) {
    const double deg = rad * 180.0 / kPi;
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec)
        for (double cand : {deg, std::nextafter(deg, 0.0), std::nextafter(deg, 360.0)}) {
            std::snprintf(buf, sizeof buf, "%.*g", prec, cand);
            if (!std::strchr(buf, 'e') && deg_to_rad(std::strtod(buf, nullptr)) == rad)
                return buf;
        }
    std::snprintf(buf, sizeof buf, "%.17g", deg);
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::string> split_ws(const std::string &line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string tok; ss >> tok;)
        out.push_back(tok);
    return out;
}

std::vector<std::string> split_tabs(const std::string &line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos)
            return out;
        start = tab + 1;
    }
}

double parse_double(const std::string &tok, const std::string &source, int line, const std::string &what) {
    char *end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size())
        throw ParseError(source, line, "bad " + what + " '" + tok + "'");
    return v;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

// Scene bundle

void SceneBundle::validate() const {
    if (images.empty())
        throw std::invalid_argument("scene has no images");
    if (images.size() != poses.size() || images.size() != names.size())
        throw std::invalid_argument("scene has " + std::to_string(images.size()) + " images and " +
                                    std::to_string(poses.size()) + " poses");
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].width() != poses[i].width() || images[i].height() != poses[i].height())
            throw std::invalid_argument("image " + names[i] + " is " + std::to_string(images[i].width()) + "x" +
                                        std::to_string(images[i].height()) + " but its pose says " +
                                        std::to_string(poses[i].width()) + "x" + std::to_string(poses[i].height()));
}

std::vector<Camera> read_poses(std::istream &is, std::vector<std::string> &names, const std::string &source) {
    std::vector<Camera> poses;
    names.clear();
    std::string line;
    for (int lineno = 1; std::getline(is, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        auto tok = split_ws(line);
        if (tok.empty())
            continue;
        if (tok.size() != 16)
            throw ParseError(source, lineno, "expected 16 fields, found " + std::to_string(tok.size()));
        Mat3 r;
        for (int k = 0; k < 9; ++k)
            r.m[std::size_t(k)] = parse_double(tok[std::size_t(1 + k)], source, lineno, "rotation entry");
        Vec3 t{parse_double(tok[10], source, lineno, "translation"), parse_double(tok[11], source, lineno, "translation"),
               parse_double(tok[12], source, lineno, "translation")};
        double fov = parse_double(tok[13], source, lineno, "field of view");
        double w = parse_double(tok[14], source, lineno, "width"), h = parse_double(tok[15], source, lineno, "height");
        if (w != std::floor(w) || h != std::floor(h))
            throw ParseError(source, lineno, "image size must be integral");
        if (std::find(names.begin(), names.end(), tok[0]) != names.end())
            throw ParseError(source, lineno, "duplicate pose for " + tok[0]);
        try {
            poses.emplace_back(r, t, deg_to_rad(fov), int(w), int(h));
        } catch (const std::invalid_argument &e) {
            throw ParseError(source, lineno, e.what());
        }
        names.push_back(tok[0]);
    }
    return poses;
}

void write_poses(std::ostream &os, const std::vector<std::string> &names, const std::vector<Camera> &poses) {
    os << "# name r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz fov_y_deg width height\n";
    char buf[40];
    for (std::size_t i = 0; i < poses.size(); ++i) {
        os << names[i];
        for (double v : poses[i].rotation().m) {
            std::snprintf(buf, sizeof buf, " %.17g", v);
            os << buf;
        }
        const Vec3 &t = poses[i].translation();
        for (double v : {t.x, t.y, t.z}) {
            std::snprintf(buf, sizeof buf, " %.17g", v);
            os << buf;
        }
        os << ' ' << fov_degrees_text(poses[i].fov_y()) << ' ' << poses[i].width() << ' ' << poses[i].height()
           << '\n';
    }
}

SceneBundle load_scene(const fs::path &dir, bool srgb_input) {
    SceneBundle scene;
    fs::path pose_path = dir / "poses.txt";
    std::ifstream is(pose_path);
    if (!is)
        throw IoError("missing pose file " + pose_path.string());
    scene.poses = read_poses(is, scene.names, pose_path.string());
    if (scene.poses.empty())
        throw IoError(pose_path.string() + ": no poses");

    std::set<std::string> on_disk;
    if (fs::is_directory(dir / "images"))
        for (const auto &e : fs::directory_iterator(dir / "images"))
            if (e.is_regular_file() && (e.path().extension() == ".pfm" || e.path().extension() == ".png"))
                on_disk.insert(e.path().filename().string());
    for (const auto &name : scene.names) {
        if (!on_disk.count(name))
            throw IoError("pose references missing image " + name);
        on_disk.erase(name);
    }
    if (!on_disk.empty())
        throw IoError("image " + *on_disk.begin() + " has no pose");
    for (const auto &name : scene.names)
        scene.images.push_back(load_image(dir / "images" / name, srgb_input));

    fs::path mesh_path = dir / "mesh.obj";
    if (!fs::exists(mesh_path))
        throw IoError("missing mesh " + mesh_path.string());
    scene.mesh = load_obj(mesh_path);
    try {
        scene.validate();
    } catch (const std::invalid_argument &e) {
        throw IoError(dir.string() + ": " + e.what());
    }
    return scene;
}

void save_scene(const fs::path &dir, const SceneBundle &scene) {
    scene.validate();
    fs::create_directories(dir / "images");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < scene.names.size(); ++i) {
        fs::path name = fs::path(scene.names[i]).replace_extension(".pfm");
        save_pfm(dir / "images" / name, scene.images[i]);
        names.push_back(name.string());
    }
    std::ofstream os(dir / "poses.txt");
    if (!os)
        throw IoError("cannot write " + (dir / "poses.txt").string());
    write_poses(os, names, scene.poses);
    save_obj(dir / "mesh.obj", scene.mesh);
}

// Buffers and aggregation

std::vector<GBuffer> build_buffers(const SceneBundle &scene) {
    scene.validate();
    Bvh bvh(scene.mesh);
    std::vector<GBuffer> out;
    out.reserve(scene.poses.size());
    for (const auto &cam : scene.poses)
        out.push_back(trace_gbuffer(bvh, cam)); // parallel over rows inside
    return out;
}

TriangleFrame triangle_frame(const Vec3 &normal) {
    const Vec3 z = normalize(normal);
    Vec3 up{0, 0, 1};
    if (std::abs(dot(up, z)) > 0.999)
        up = {1, 0, 0};
    const Vec3 x = normalize(up - z * dot(up, z));
    return {x, cross(z, x), z};
}

TriangleMapSet aggregate(const SceneBundle &scene, const std::vector<GBuffer> &buffers) {
    scene.validate();
    if (buffers.size() != scene.images.size())
        throw std::invalid_argument("aggregate: " + std::to_string(buffers.size()) + " buffers for " +
                                    std::to_string(scene.images.size()) + " images");
    const std::size_t faces = scene.mesh.face_count();
    std::vector<TriangleFrame> frames(faces);
    for (std::size_t f = 0; f < faces; ++f)
        frames[f] = triangle_frame(scene.mesh.normal(std::uint32_t(f)));

    // One sparse shard per image; merged in image order for thread-count independence.
    std::vector<std::map<std::uint32_t, ReflectanceMap>> shards(buffers.size());
    parallel_for(buffers.size(), [&](std::size_t i) {
        const GBuffer &gb = buffers[i];
        const LinearImage &img = scene.images[i];
        const Vec3 eye = scene.poses[i].center();
        if (gb.width != img.width() || gb.height != img.height())
            throw std::invalid_argument("aggregate: buffer " + std::to_string(i) + " does not match its image");
        auto &shard = shards[i];
        for (const GBufferPixel &px : gb.pixels) {
            if (!px.hit())
                continue;
            if (px.triangle >= faces)
                throw std::invalid_argument("aggregate: triangle id out of range");
            Rgb c = img.at(px.u, px.v);
            for (int k = 0; k < 3; ++k)
                c[k] = std::isfinite(c[k]) ? std::max(0.0, c[k]) : 0.0;
            Vec3 local = frames[px.triangle].to_local(normalize(eye - px.point));
            shard[px.triangle].accumulate(normalize(local), c);
        }
    });
    TriangleMapSet set;
    set.maps.assign(faces, ReflectanceMap());
    set.samples.assign(faces, 0);
    for (auto &shard : shards)
        for (auto &[face, map] : shard)
            set.maps[face].merge_from(map);
    for (std::size_t f = 0; f < faces; ++f)
        set.samples[f] = set.maps[f].total_samples();
    return set;
}

// Estimation

std::string to_string(Estimator e) { return e == Estimator::fit ? "fit" : "nn"; }

ReflectanceParams fallback_material() { return {Rgb::gray(0.5), Rgb::gray(0.0), 0.8}; }

std::vector<ReflectanceParams> ParamTable::materials(const ReflectanceParams &fallback) const {
    std::vector<ReflectanceParams> out;
    out.reserve(rows.size());
    for (const auto &r : rows)
        out.push_back(r.params.value_or(fallback));
    return out;
}

std::size_t ParamTable::sufficient_count() const {
    return std::size_t(std::count_if(rows.begin(), rows.end(), [](const ParamRow &r) { return r.sufficient(); }));
}

double ParamTable::total_seconds() const {
    double s = 0;
    for (const auto &r : rows)
        s += r.seconds;
    return s;
}

ParamTable estimate(const TriangleMapSet &maps, const TriangleMesh &mesh, const EstimateOptions &opts) {
    if (maps.size() != mesh.face_count())
        throw std::invalid_argument("estimate: " + std::to_string(maps.size()) + " maps for " +
                                    std::to_string(mesh.face_count()) + " faces");
    if (opts.estimator == Estimator::nn && !opts.model)
        throw std::invalid_argument("estimate: the nn estimator needs a trained model");

    const std::size_t n = maps.size();
    ParamTable table;
    table.rows.resize(n);
    std::vector<std::optional<SphericalAngles>> light(n);
    std::vector<std::size_t> eligible;
    for (std::size_t f = 0; f < n; ++f) {
        ParamRow &row = table.rows[f];
        row.triangle = std::uint32_t(f);
        row.estimator = opts.estimator;
        row.samples = maps.samples[f];
        row.residual = std::numeric_limits<double>::quiet_NaN();
        if (opts.light_dir) {
            Vec3 wi = triangle_frame(mesh.normal(std::uint32_t(f))).to_local(-normalize(*opts.light_dir));
            light[f] = dir_to_angles(normalize(wi));
        }
        if (maps.maps[f].occupied() >= opts.min_occupied)
            eligible.push_back(f);
    }

    const MapLayout layout = MapLayout::surface();
    auto rms = [&](const ReflectanceParams &p, std::size_t f) {
        return std::sqrt(residual(p, *light[f], maps.maps[f], layout) / double(3 * maps.maps[f].occupied()));
    };

    if (opts.estimator == Estimator::fit) {
        FitOptions fo = opts.fit;
        fo.min_occupied = opts.min_occupied;
        parallel_for(eligible.size(), [&](std::size_t k) {
            const std::size_t f = eligible[k];
            auto t0 = std::chrono::steady_clock::now();
            FitResult r = fit(maps.maps[f], light[f], layout, fo);
            ParamRow &row = table.rows[f];
            row.params = r.params;
            row.residual = r.rmse;
            row.seconds = elapsed(t0);
        });
    } else {
        constexpr std::size_t kChunk = 256;
        for (std::size_t start = 0; start < eligible.size(); start += kChunk) {
            const std::size_t end = std::min(eligible.size(), start + kChunk);
            auto t0 = std::chrono::steady_clock::now();
            std::vector<LinearImage> images(end - start);
            parallel_for(end - start, [&](std::size_t k) { images[k] = resolve(maps.maps[eligible[start + k]]).image; });
            std::vector<ReflectanceParams> pred = opts.model->predict(images);
            const double each = elapsed(t0) / double(end - start);
            for (std::size_t k = start; k < end; ++k) {
                ParamRow &row = table.rows[eligible[k]];
                row.params = pred[k - start];
                row.seconds = each;
            }
        }
        if (opts.light_dir)
            parallel_for(eligible.size(), [&](std::size_t k) {
                ParamRow &row = table.rows[eligible[k]];
                row.residual = rms(*row.params, eligible[k]);
            });
    }
    return table;
}

// Parameter table files

void write_param_table(std::ostream &os, const ParamTable &table) {
    os << kTableHeader << '\n';
    for (const auto &row : table.rows) {
        os << row.triangle;
        if (row.params) {
            for (double v : row.params->to_array())
                os << '\t' << fmt(v);
            os << '\t' << to_string(row.estimator) << '\t' << fmt(row.residual);
        } else {
            for (int k = 0; k < 7; ++k)
                os << "\t-";
            os << "\tinsufficient\t-";
        }
        os << '\t' << row.samples << '\n';
    }
}

void save_param_table(const fs::path &path, const ParamTable &table) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path.string());
    write_param_table(os, table);
    if (!os)
        throw IoError("failed writing " + path.string());
}

ParamTable read_param_table(std::istream &is, const std::string &source) {
    ParamTable table;
    std::string line;
    if (!std::getline(is, line) || line != kTableHeader)
        throw ParseError(source, 1, "missing parameter table header");
    for (int lineno = 2; std::getline(is, line); ++lineno) {
        if (line.empty())
            continue;
        auto f = split_tabs(line);
        if (f.size() != 11)
            throw ParseError(source, lineno, "expected 11 fields, found " + std::to_string(f.size()));
        ParamRow row;
        double id = parse_double(f[0], source, lineno, "triangle id");
        if (id < 0 || id != std::floor(id))
            throw ParseError(source, lineno, "bad triangle id '" + f[0] + "'");
        row.triangle = std::uint32_t(id);
        if (row.triangle != table.rows.size())
            throw ParseError(source, lineno, "triangle ids must be consecutive from 0");
        double samples = parse_double(f[10], source, lineno, "sample count");
        if (samples < 0 || samples != std::floor(samples))
            throw ParseError(source, lineno, "bad sample count '" + f[10] + "'");
        row.samples = std::uint64_t(samples);
        if (f[8] == "insufficient") {
            row.residual = std::numeric_limits<double>::quiet_NaN();
        } else {
            if (f[8] == "fit")
                row.estimator = Estimator::fit;
            else if (f[8] == "nn")
                row.estimator = Estimator::nn;
            else
                throw ParseError(source, lineno, "unknown estimator '" + f[8] + "'");
            Vec7 v;
            for (std::size_t k = 0; k < 7; ++k)
                v[k] = parse_double(f[1 + k], source, lineno, "parameter");
            try {
                row.params = ReflectanceParams::from_array(v);
            } catch (const std::invalid_argument &e) {
                throw ParseError(source, lineno, e.what());
            }
            row.residual = parse_double(f[9], source, lineno, "residual");
        }
        table.rows.push_back(row);
    }
    return table;
}

ParamTable load_param_table(const fs::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    return read_param_table(is, path.string());
}

// Relighting and reports

LinearImage relight(const TriangleMesh &mesh, const ParamTable &table, const Camera &cam, const Vec3 &light_dir,
                    const ReflectanceParams &fallback, const MeshRenderOptions &opts) {
    auto materials = table.materials(fallback);
    return render_mesh(mesh, materials, cam, light_dir, opts);
}

void write_report(std::ostream &os, const std::vector<ReportRow> &rows) {
    os << "pair_id\tpsnr\tnrmse\tdssim\n";
    for (const auto &r : rows)
        os << r.pair_id << '\t' << fmt(r.metrics.psnr) << '\t' << fmt(r.metrics.nrmse) << '\t' << fmt(r.metrics.dssim)
           << '\n';
}

// Synthetic scenes

std::vector<Camera> synthetic_cameras(const SyntheticSceneOptions &opts) {
    std::vector<Camera> cams;
    // Two rings, alternately above and below the equator, offset in azimuth.
    for (int i = 0; i < opts.cameras; ++i) {
        double theta = (i % 2 == 0) ? kPi / 3 : 2 * kPi / 3;
        double phi = kTwoPi * i / opts.cameras + 0.1;
        cams.push_back(Camera::orbit({theta, phi, opts.distance, {}}, opts.fov_y, opts.width, opts.height));
    }
    return cams;
}

SceneBundle synthetic_scene(const SyntheticSceneOptions &opts) {
    SceneBundle scene;
    scene.mesh = make_icosphere(opts.subdivisions);
    scene.poses = synthetic_cameras(opts);
    std::vector<ReflectanceParams> mats(scene.mesh.face_count(), opts.material);
    Bvh bvh(scene.mesh);
    for (std::size_t i = 0; i < scene.poses.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view%02zu.pfm", i);
        scene.names.push_back(name);
        scene.images.push_back(render_mesh(bvh, mats, scene.poses[i], opts.light_dir));
    }
    return scene;
}

RoundTripResult round_trip(const SyntheticSceneOptions &scene_opts, const EstimateOptions &est) {
    SceneBundle scene = synthetic_scene(scene_opts);
    TriangleMapSet maps = aggregate(scene, build_buffers(scene));
    EstimateOptions opts = est;
    if (!opts.light_dir)
        opts.light_dir = scene_opts.light_dir;
    RoundTripResult out;
    out.table = estimate(maps, scene.mesh, opts);
    double psnr_sum = 0;
    for (std::size_t i = 0; i < scene.poses.size(); ++i) {
        LinearImage test = relight(scene.mesh, out.table, scene.poses[i], scene_opts.light_dir);
        ReportRow row{scene.names[i], compare_images(clamp_unit(scene.images[i]), clamp_unit(test))};
        psnr_sum += row.metrics.psnr;
        out.report.push_back(row);
    }
    out.mean_psnr = psnr_sum / double(scene.poses.size());
    for (const auto &row : out.table.rows) {
        if (!row.params)
            continue;
        ++out.sufficient;
        if (param_error(*row.params, scene_opts.material).linf <= out.tolerance)
            ++out.within_tolerance;
    }
    return out;
}

} // namespace rmap
