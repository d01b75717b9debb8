#pragma once

// Synthetic training corpus: material sets, the sphere viewpoint grid,
// labeled map generation with a tab-separated manifest, and train-time
// augmentation of resolved maps.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rmap/brdf.hpp"
#include "rmap/camera.hpp"
#include "rmap/image.hpp"

namespace rmap {

enum class MaterialOrigin { grid, random };

struct MaterialSet {
    std::vector<ReflectanceParams> entries;
    std::vector<MaterialOrigin> origin;
    std::uint64_t seed = 0;

    std::size_t size() const { return entries.size(); }
    void append(const MaterialSet &other);
};

/// Lattice over the 7 parameters: `color_levels` for each of the six k_d/k_s
/// channels and `roughness_levels` for r.
struct GridSpec {
    std::vector<double> color_levels{0.125, 0.375, 0.625, 0.875};
    std::vector<double> roughness_levels{0.1, 0.3, 0.5, 0.7, 0.9};
    /// When set, the lattice size must equal this count.
    std::optional<std::size_t> expected_count;

    std::size_t count() const;
    /// 4^6 * 5 = 20,480 entries.
    static GridSpec standard();
    /// 2^6 * 3 = 192 entries.
    static GridSpec desk();
};

inline constexpr std::size_t kStandardRandomMaterials = 3520;
inline constexpr int kViewZeniths = 3;
inline constexpr int kViewAzimuths = 8;

/// Parameter values are rounded to float precision on creation so that the
/// 9-significant-digit manifest reproduces them exactly.
double quantize_label(double v);
ReflectanceParams quantize_label(const ReflectanceParams &p);

/// Throws std::invalid_argument for empty, duplicate or out-of-range levels,
/// or a lattice size that differs from expected_count.
MaterialSet material_grid(const GridSpec &spec = GridSpec::standard());
MaterialSet material_random(std::size_t n, std::uint64_t seed);
/// Standard lattice followed by 3,520 random materials (24,000 total).
MaterialSet standard_materials(std::uint64_t seed);

struct ViewpointOptions {
    double distance = 4.0;
    double fov_y = 35.0 * kPi / 180.0;
    int width = 64;
    int height = 64;
};

/// 3 zeniths {pi/9, 5pi/18, 4pi/9} x 8 azimuths {0, pi/4, ..., 7pi/4}, zenith-major.
std::vector<Camera> viewpoint_grid(const ViewpointOptions &opts = {});

/// omega_i in the camera frame for every sphere render: upper left, toward the viewer.
Vec3 dataset_light_camera();
/// Propagation direction of the dataset light in world coordinates for `cam`.
Vec3 dataset_light_dir(const Camera &cam);

enum class MapFormat { rmap, pfm };

struct ManifestRow {
    std::string map_path; ///< relative to the manifest's directory
    ReflectanceParams label;
    bool operator==(const ManifestRow &) const = default;
};

/// Tab-separated rows {map path, k_d r g b, k_s r g b, roughness}; floats with 9 significant digits.
void write_manifest_row(std::ostream &os, const ManifestRow &row);
std::vector<ManifestRow> read_manifest(const std::filesystem::path &path);
void write_manifest(const std::filesystem::path &path, const std::vector<ManifestRow> &rows);

struct GenerateOptions {
    MapFormat format = MapFormat::rmap;
    /// Pairs rendered between manifest flushes.
    std::size_t batch = 512;
};

/// Renders sphere_map for every (material, camera) pair, material-major, into
/// out_dir/maps and writes out_dir/manifest.tsv. An existing manifest whose
/// rows match the expected prefix is kept and generation resumes after it.
/// I/O failures throw IoError naming the material and view index.
std::vector<ManifestRow> generate_dataset(const MaterialSet &materials, const std::vector<Camera> &cameras,
                                          const std::filesystem::path &out_dir, const GenerateOptions &opts = {});

/// Resolved 60x120 image of a map file (.rmap or .pfm).
LinearImage load_map_image(const std::filesystem::path &path);

struct AugmentConfig {
    /// Fraction of occupied texels blacked out, drawn uniformly from [min, max].
    double mask_fraction_min = 0.0;
    double mask_fraction_max = 0.95;
    double salt_pepper_fraction = 0.02;
    int noise_patches = 3;
    int noise_radius_max = 8;
    double noise_amplitude_max = 0.2;
    double flip_h_prob = 0.5;
    double flip_v_prob = 0.5;
    std::uint64_t seed = 0;

    /// Every field set to zero: augment() becomes the identity.
    static AugmentConfig none();
    /// Throws std::invalid_argument for fractions or probabilities outside [0,1].
    void validate() const;
};

/// Masking, salt-and-pepper, local noise patches, then flips. The random
/// stream is derived from (cfg.seed, stream), so distinct samples get
/// independent yet reproducible corruption.
LinearImage augment(const LinearImage &img, const AugmentConfig &cfg, std::uint64_t stream = 0);

LinearImage flip_horizontal(const LinearImage &img);
LinearImage flip_vertical(const LinearImage &img);
std::size_t occupied_texels(const LinearImage &img);

} // namespace rmap
