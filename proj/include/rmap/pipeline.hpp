#pragma once

// Scene-level orchestration: load a posed multi-view bundle, trace G-buffers,
// bin every hit pixel into the reflectance map of its triangle, estimate one
// material per triangle, relight and score.
//
// Scene bundle layout:
//   images/<name>   linear .pfm or .png (sRGB-decoded on request)
//   poses.txt       one line per image:
//                   name r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz fov_y_deg width height
//                   (x_cam = R x_world + t, camera x right, y down, z forward; '#' starts a comment)
//   mesh.obj
//
// Parameter table: a header line, then one tab-separated row per triangle
//   triangle_id kd_r kd_g kd_b ks_r ks_g ks_b roughness estimator residual samples
// where estimator is fit, nn or insufficient (whose parameter fields are "-").

#include <chrono>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rmap/brdf.hpp"
#include "rmap/camera.hpp"
#include "rmap/fitter.hpp"
#include "rmap/image.hpp"
#include "rmap/mesh.hpp"
#include "rmap/metrics.hpp"
#include "rmap/renderer.hpp"
#include "rmap/spherical.hpp"

namespace rmap {

class TrainedModel;

struct SceneBundle {
    std::vector<std::string> names;
    std::vector<LinearImage> images;
    std::vector<Camera> poses;
    TriangleMesh mesh;

    /// Throws std::invalid_argument for count or size mismatches.
    void validate() const;
    bool operator==(const SceneBundle &) const = default;
};

/// Throws IoError naming missing or unpaired assets, ParseError with line
/// numbers for malformed pose or mesh lines.
SceneBundle load_scene(const std::filesystem::path &dir, bool srgb_input = false);
/// Writes images as .pfm under their names, poses.txt and mesh.obj.
void save_scene(const std::filesystem::path &dir, const SceneBundle &scene);

std::vector<Camera> read_poses(std::istream &is, std::vector<std::string> &names, const std::string &source);
void write_poses(std::ostream &os, const std::vector<std::string> &names, const std::vector<Camera> &poses);

std::vector<GBuffer> build_buffers(const SceneBundle &scene);

/// Orthonormal frame with z along the face normal and x the world up axis
/// (+z) projected onto the face plane; world +x replaces up when the normal is
/// within about 2.6 degrees of it.
struct TriangleFrame {
    Vec3 x, y, z;
    Vec3 to_local(const Vec3 &w) const { return {dot(w, x), dot(w, y), dot(w, z)}; }
    Vec3 to_world(const Vec3 &l) const { return x * l.x + y * l.y + z * l.z; }
};
TriangleFrame triangle_frame(const Vec3 &normal);

struct TriangleMapSet {
    std::vector<ReflectanceMap> maps;   ///< indexed by face id
    std::vector<std::uint64_t> samples; ///< total sample count per map

    std::size_t size() const { return maps.size(); }
    bool operator==(const TriangleMapSet &) const = default;
};

/// Every hit pixel adds its image radiance to the map of its triangle at the
/// direction toward the camera center, expressed in the triangle's frame.
/// Images are aggregated into per-image shards that merge in image order.
TriangleMapSet aggregate(const SceneBundle &scene, const std::vector<GBuffer> &buffers);

enum class Estimator { fit, nn };
std::string to_string(Estimator e);

struct EstimateOptions {
    Estimator estimator = Estimator::fit;
    const TrainedModel *model = nullptr;
    /// Occupied texels a map needs before it is estimated.
    int min_occupied = 30;
    /// World-space light propagation direction; latent when absent (fit only).
    std::optional<Vec3> light_dir;
    FitOptions fit;
};

struct ParamRow {
    std::uint32_t triangle = 0;
    std::optional<ReflectanceParams> params; ///< empty when insufficient
    Estimator estimator = Estimator::fit;
    /// RMS error of the re-rendered map (NaN when it cannot be evaluated).
    double residual = 0;
    std::uint64_t samples = 0;
    double seconds = 0; ///< wall time, not serialized

    bool sufficient() const { return params.has_value(); }
};

struct ParamTable {
    std::vector<ParamRow> rows; ///< one per triangle, by id

    /// Per-face materials with `fallback` for insufficient triangles.
    std::vector<ReflectanceParams> materials(const ReflectanceParams &fallback) const;
    std::size_t sufficient_count() const;
    double total_seconds() const;
};

/// Fallback for triangles without an estimate: mid-gray Lambertian.
ReflectanceParams fallback_material();

/// Estimates every triangle independently. Throws std::invalid_argument when
/// the nn estimator has no model or the map set does not match the mesh.
ParamTable estimate(const TriangleMapSet &maps, const TriangleMesh &mesh, const EstimateOptions &opts = {});

void write_param_table(std::ostream &os, const ParamTable &table);
void save_param_table(const std::filesystem::path &path, const ParamTable &table);
ParamTable read_param_table(std::istream &is, const std::string &source = "<stream>");
ParamTable load_param_table(const std::filesystem::path &path);

LinearImage relight(const TriangleMesh &mesh, const ParamTable &table, const Camera &cam, const Vec3 &light_dir,
                    const ReflectanceParams &fallback = fallback_material(), const MeshRenderOptions &opts = {});

struct ReportRow {
    std::string pair_id;
    ImagePairReport metrics;
};
/// Header "pair_id\tpsnr\tnrmse\tdssim" then one row per pair.
void write_report(std::ostream &os, const std::vector<ReportRow> &rows);

/// Synthetic scene: icosphere with one material everywhere, orbit cameras
/// and a fixed light.
struct SyntheticSceneOptions {
    int subdivisions = 4;
    int cameras = 8;
    int width = 256;
    int height = 256;
    double distance = 3.0;
    double fov_y = 40.0 * kPi / 180.0;
    Vec3 light_dir = normalize(Vec3{-0.3, -0.4, -1.0});
    ReflectanceParams material{Rgb(0.6, 0.3, 0.2), Rgb(0.8, 0.8, 0.8), 0.15};
};

std::vector<Camera> synthetic_cameras(const SyntheticSceneOptions &opts);
SceneBundle synthetic_scene(const SyntheticSceneOptions &opts);

struct RoundTripResult {
    ParamTable table;
    std::vector<ReportRow> report; ///< relight vs ground truth per view
    double mean_psnr = 0;
    std::size_t sufficient = 0;
    std::size_t within_tolerance = 0; ///< sufficient triangles with L-inf error <= tolerance
    double tolerance = 0.05;
};

/// Render, aggregate, estimate with the known light, relight the same views.
RoundTripResult round_trip(const SyntheticSceneOptions &scene_opts, const EstimateOptions &est = {});

} // namespace rmap
