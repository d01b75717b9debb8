// rmap: command-line front end for dataset generation, training, map fitting
// and the scene pipeline.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rmap/dataset.hpp"
#include "rmap/errors.hpp"
#include "rmap/fitter.hpp"
#include "rmap/parallel.hpp"
#include "rmap/pipeline.hpp"
#include "rmap/regressor.hpp"

using namespace rmap;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string &text, std::size_t expected, const std::string &what) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ',');) {
        char *end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || *end != '\0')
            throw CLI::ValidationError(what, "bad number '" + tok + "'");
        out.push_back(v);
    }
    if (out.size() != expected)
        throw CLI::ValidationError(what, "expected " + std::to_string(expected) + " comma-separated values");
    return out;
}

ReflectanceParams parse_params(const std::string &text) {
    return ReflectanceParams::from_array(parse_list(text, 7, "--params"));
}

Vec3 parse_vec3(const std::string &text, const std::string &what) {
    auto v = parse_list(text, 3, what);
    return normalize(Vec3{v[0], v[1], v[2]});
}

void print_params(std::ostream &os, const ReflectanceParams &p) {
    auto a = p.to_array();
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
    os << buf;
}

void save_image_any(const fs::path &path, const LinearImage &img) {
    if (path.extension() == ".pfm")
        save_pfm(path, img);
    else
        save_preview(path, img);
}

/// Maps written by `aggregate`: one t<id>.rmap per non-empty triangle.
TriangleMapSet load_map_dir(const fs::path &dir, std::size_t faces) {
    TriangleMapSet set;
    set.maps.assign(faces, ReflectanceMap());
    set.samples.assign(faces, 0);
    for (const auto &e : fs::directory_iterator(dir)) {
        std::string stem = e.path().stem().string();
        if (e.path().extension() != ".rmap" || stem.size() < 2 || stem[0] != 't')
            continue;
        std::size_t id = std::stoul(stem.substr(1));
        if (id >= faces)
            throw IoError(e.path().string() + ": triangle id beyond the mesh");
        set.maps[id] = load_rmap(e.path());
        set.samples[id] = set.maps[id].total_samples();
    }
    return set;
}

struct Globals {
    std::uint64_t seed = 0;
    int threads = 0;
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Reflectance-map toolkit: synthetic datasets, map regression and fitting, scene relighting"};
    app.name("rmap");
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file overriding option defaults");
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

    // gen-dataset
    auto *gen = app.add_subcommand("gen-dataset", "Render labeled sphere maps for every material x viewpoint");
    std::size_t gen_materials = 0;
    std::string gen_grid = "none", gen_out, gen_format = "rmap";
    std::size_t gen_batch = 512;
    gen->add_option("--materials", gen_materials, "Random materials");
    gen->add_option("--grid", gen_grid, "Material lattice: none, desk (192) or standard (20,480)")
        ->check(CLI::IsMember({"none", "desk", "standard"}));
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--format", gen_format, "Map file format")->check(CLI::IsMember({"rmap", "pfm"}));
    gen->add_option("--batch", gen_batch, "Maps rendered between manifest flushes");

    // train
    auto *tr = app.add_subcommand("train", "Train the map regressor on a dataset manifest");
    std::string tr_manifest, tr_out, tr_preset = "desk", tr_arch;
    int tr_epochs = 0, tr_batch = 0;
    double tr_lr = 0, tr_mask_max = -1;
    tr->add_option("--manifest", tr_manifest, "manifest.tsv")->required();
    tr->add_option("--out", tr_out, "Model file")->required();
    tr->add_option("--preset", tr_preset, "Hyper-parameter preset")->check(CLI::IsMember({"desk", "full"}));
    tr->add_option("--arch", tr_arch, "Network preset")->check(CLI::IsMember({"desk", "wide"}));
    tr->add_option("--epochs", tr_epochs, "Override epochs");
    tr->add_option("--batch", tr_batch, "Override batch size");
    tr->add_option("--lr", tr_lr, "Override initial learning rate");
    tr->add_option("--mask-max", tr_mask_max, "Override the largest masked fraction in augmentation");

    // fit-map
    auto *fm = app.add_subcommand("fit-map", "Fit the 7-parameter model to one map file");
    std::string fm_map, fm_light;
    int fm_view = -1;
    bool fm_latent = false;
    fm->add_option("--map", fm_map, ".rmap or .pfm map")->required();
    fm->add_option("--view", fm_view, "Dataset viewpoint index: sphere layout with the dataset light");
    fm->add_option("--light", fm_light, "Known omega_i as theta,phi in radians (surface layout)");
    fm->add_flag("--latent", fm_latent, "Also fit the light direction");

    // aggregate
    auto *ag = app.add_subcommand("aggregate", "Bin scene pixels into per-triangle reflectance maps");
    std::string ag_scene, ag_out;
    bool ag_srgb = false;
    ag->add_option("--scene", ag_scene, "Scene bundle directory")->required();
    ag->add_option("--out", ag_out, "Directory for t<id>.rmap files")->required();
    ag->add_flag("--srgb-input", ag_srgb, "Decode PNG images from sRGB");

    // estimate
    auto *es = app.add_subcommand("estimate", "Estimate per-triangle materials");
    std::string es_scene, es_maps, es_mesh, es_estimator = "fit", es_model, es_light, es_out;
    int es_floor = 30;
    bool es_srgb = false;
    es->add_option("--scene", es_scene, "Scene bundle (aggregated on the fly)");
    es->add_option("--maps", es_maps, "Directory written by aggregate");
    es->add_option("--mesh", es_mesh, "Mesh for --maps");
    es->add_option("--estimator", es_estimator, "fit or nn")->check(CLI::IsMember({"fit", "nn"}));
    es->add_option("--model", es_model, "Model file for the nn estimator");
    es->add_option("--light", es_light, "World light propagation direction x,y,z (latent when absent)");
    es->add_option("--min-occupied", es_floor, "Occupied texels required per triangle");
    es->add_option("--out", es_out, "Parameter table")->required();
    es->add_flag("--srgb-input", es_srgb, "Decode PNG images from sRGB");

    // relight
    auto *rl = app.add_subcommand("relight", "Render a mesh with an estimated parameter table");
    std::string rl_mesh, rl_table, rl_poses, rl_view, rl_orbit, rl_light, rl_out, rl_fallback;
    double rl_fov = 40;
    int rl_width = 256, rl_height = 256;
    bool rl_shadows = false;
    rl->add_option("--mesh", rl_mesh, "Mesh")->required();
    rl->add_option("--table", rl_table, "Parameter table")->required();
    rl->add_option("--poses", rl_poses, "poses.txt to take a camera from");
    rl->add_option("--view", rl_view, "Pose name within --poses");
    rl->add_option("--orbit", rl_orbit, "Novel camera as theta,phi,distance around the origin");
    rl->add_option("--fov", rl_fov, "Vertical field of view in degrees for --orbit");
    rl->add_option("--width", rl_width, "Image width for --orbit");
    rl->add_option("--height", rl_height, "Image height for --orbit");
    rl->add_option("--light", rl_light, "Light propagation direction x,y,z")->required();
    rl->add_option("--fallback", rl_fallback, "Material for insufficient triangles (7 values)");
    rl->add_flag("--shadows", rl_shadows, "Trace shadow rays");
    rl->add_option("--out", rl_out, "Output image (.pfm, .png or .ppm)")->required();

    // evaluate
    auto *ev = app.add_subcommand("evaluate", "Score image pairs (PSNR, NRMSE, DSSIM)");
    std::vector<std::string> ev_pairs;
    std::string ev_out;
    ev->add_option("--pair", ev_pairs, "id,reference,test (repeatable)")->required();
    ev->add_option("--out", ev_out, "Report file (stdout when absent)");

    // round-trip
    auto *rt = app.add_subcommand("round-trip", "Synthetic render -> aggregate -> estimate -> relight");
    std::string rt_mesh = "icosphere", rt_params = "0.6,0.3,0.2,0.8,0.8,0.8,0.15", rt_out, rt_light;
    std::string rt_estimator = "fit", rt_model;
    SyntheticSceneOptions rt_opts;
    int rt_floor = 30;
    rt->add_option("--mesh", rt_mesh, "Synthetic mesh")->check(CLI::IsMember({"icosphere"}));
    rt->add_option("--subdivisions", rt_opts.subdivisions, "Icosphere subdivisions")->capture_default_str();
    rt->add_option("--cameras", rt_opts.cameras, "Number of cameras")->capture_default_str();
    rt->add_option("--size", rt_opts.width, "Square image size")->capture_default_str();
    rt->add_option("--distance", rt_opts.distance, "Camera distance")->capture_default_str();
    rt->add_option("--params", rt_params, "Ground-truth material (7 values)")->capture_default_str();
    rt->add_option("--light", rt_light, "Light propagation direction x,y,z");
    rt->add_option("--estimator", rt_estimator, "fit or nn")->check(CLI::IsMember({"fit", "nn"}));
    rt->add_option("--model", rt_model, "Model file for the nn estimator");
    rt->add_option("--min-occupied", rt_floor, "Occupied texels required per triangle")->capture_default_str();
    rt->add_option("--out", rt_out, "Directory for the table and report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << "rmap: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        set_thread_count(g.threads);

        if (*gen) {
            MaterialSet mats;
            mats.seed = g.seed;
            if (gen_grid == "desk")
                mats.append(material_grid(GridSpec::desk()));
            else if (gen_grid == "standard")
                mats.append(material_grid(GridSpec::standard()));
            if (gen_materials > 0)
                mats.append(material_random(gen_materials, g.seed));
            if (mats.size() == 0)
                throw CLI::ValidationError("gen-dataset", "no materials: pass --materials and/or --grid");
            GenerateOptions opts;
            opts.format = gen_format == "pfm" ? MapFormat::pfm : MapFormat::rmap;
            opts.batch = gen_batch;
            auto rows = generate_dataset(mats, viewpoint_grid(), gen_out, opts);
            std::cout << rows.size() << " maps in " << (fs::path(gen_out) / "manifest.tsv").string() << '\n';
        } else if (*tr) {
            RegressorConfig cfg = tr_preset == "full" ? RegressorConfig::full() : RegressorConfig::desk();
            if (tr_arch == "wide")
                cfg.architecture = nn::Architecture::wide();
            else if (tr_arch == "desk")
                cfg.architecture = nn::Architecture::desk();
            if (tr_epochs > 0)
                cfg.epochs = tr_epochs;
            if (tr_batch > 0)
                cfg.batch_size = tr_batch;
            if (tr_lr > 0)
                cfg.learning_rate = tr_lr;
            if (tr_mask_max >= 0)
                cfg.augment.mask_fraction_max = tr_mask_max;
            cfg.seed = g.seed;
            TrainedModel model = train(fs::path(tr_manifest), cfg, {[](const EpochRecord &r) {
                                           std::cout << to_json_line(r) << std::endl;
                                       }});
            model.save(tr_out);
        } else if (*fm) {
            ReflectanceMap map;
            if (fs::path(fm_map).extension() == ".rmap") {
                map = load_rmap(fm_map);
            } else {
                LinearImage img = load_image(fm_map);
                for (int y = 0; y < img.height(); ++y)
                    for (int x = 0; x < img.width(); ++x)
                        if (img.at(x, y).max_component() > 0)
                            map.accumulate(Texel{y, x}, img.at(x, y));
            }
            std::optional<SphericalAngles> light;
            MapLayout layout = MapLayout::surface();
            if (fm_view >= 0) {
                auto cams = viewpoint_grid();
                if (fm_view >= int(cams.size()))
                    throw CLI::ValidationError("--view", "must be below " + std::to_string(cams.size()));
                const Camera &cam = cams[std::size_t(fm_view)];
                layout = MapLayout::sphere(cam.center());
                light = dir_to_angles(-dataset_light_dir(cam));
            } else if (!fm_light.empty()) {
                auto v = parse_list(fm_light, 2, "--light");
                light = SphericalAngles{v[0], v[1]};
            }
            if (fm_latent)
                light.reset();
            else if (!light)
                throw CLI::ValidationError("fit-map", "give --view, --light or --latent");
            FitResult r = fit(map, light, layout);
            std::cout << "params\t";
            print_params(std::cout, r.params);
            std::cout << "\nlight\t" << r.light.theta << ',' << r.light.phi << "\nrmse\t" << r.rmse
                      << "\niterations\t" << r.iterations << "\nconverged\t" << (r.converged ? "yes" : "no") << '\n';
        } else if (*ag) {
            SceneBundle scene = load_scene(ag_scene, ag_srgb);
            TriangleMapSet maps = aggregate(scene, build_buffers(scene));
            fs::create_directories(ag_out);
            std::size_t written = 0;
            for (std::size_t f = 0; f < maps.size(); ++f) {
                if (maps.maps[f].empty())
                    continue;
                char name[32];
                std::snprintf(name, sizeof name, "t%06zu.rmap", f);
                save_rmap(fs::path(ag_out) / name, maps.maps[f]);
                ++written;
            }
            std::cout << written << " of " << maps.size() << " triangles observed\n";
        } else if (*es) {
            TriangleMesh mesh;
            TriangleMapSet maps;
            if (!es_scene.empty()) {
                SceneBundle scene = load_scene(es_scene, es_srgb);
                maps = aggregate(scene, build_buffers(scene));
                mesh = scene.mesh;
            } else if (!es_maps.empty() && !es_mesh.empty()) {
                mesh = load_obj(es_mesh);
                maps = load_map_dir(es_maps, mesh.face_count());
            } else {
                throw CLI::ValidationError("estimate", "give --scene, or --maps with --mesh");
            }
            EstimateOptions opts;
            opts.estimator = es_estimator == "nn" ? Estimator::nn : Estimator::fit;
            opts.min_occupied = es_floor;
            std::optional<TrainedModel> model;
            if (opts.estimator == Estimator::nn) {
                if (es_model.empty())
                    throw CLI::ValidationError("estimate", "--estimator nn needs --model");
                model.emplace(TrainedModel::load(es_model));
                opts.model = &*model;
            }
            if (!es_light.empty())
                opts.light_dir = parse_vec3(es_light, "--light");
            ParamTable table = estimate(maps, mesh, opts);
            save_param_table(es_out, table);
            std::size_t n = table.sufficient_count();
            std::printf("%zu of %zu triangles estimated (%s), %.4f ms per triangle\n", n, table.rows.size(),
                        es_estimator.c_str(), n ? 1e3 * table.total_seconds() / double(n) : 0.0);
        } else if (*rl) {
            TriangleMesh mesh = load_obj(rl_mesh);
            ParamTable table = load_param_table(rl_table);
            std::optional<Camera> cam;
            if (!rl_orbit.empty()) {
                auto v = parse_list(rl_orbit, 3, "--orbit");
                cam = Camera::orbit({v[0], v[1], v[2], {}}, rl_fov * kPi / 180.0, rl_width, rl_height);
            } else if (!rl_poses.empty()) {
                std::ifstream is(rl_poses);
                if (!is)
                    throw IoError("cannot open " + rl_poses);
                std::vector<std::string> names;
                auto poses = read_poses(is, names, rl_poses);
                for (std::size_t i = 0; i < names.size(); ++i)
                    if (rl_view.empty() || names[i] == rl_view) {
                        cam = poses[i];
                        break;
                    }
                if (!cam)
                    throw IoError(rl_poses + ": no pose named " + rl_view);
            } else {
                throw CLI::ValidationError("relight", "give --orbit or --poses");
            }
            if (table.rows.size() != mesh.face_count())
                throw IoError(rl_table + ": " + std::to_string(table.rows.size()) + " rows for " +
                              std::to_string(mesh.face_count()) + " faces");
            ReflectanceParams fallback = rl_fallback.empty() ? fallback_material() : parse_params(rl_fallback);
            MeshRenderOptions ro;
            ro.shadows = rl_shadows;
            save_image_any(rl_out, relight(mesh, table, *cam, parse_vec3(rl_light, "--light"), fallback, ro));
        } else if (*ev) {
            std::vector<ReportRow> rows;
            for (const auto &p : ev_pairs) {
                std::vector<std::string> parts;
                std::stringstream ss(p);
                for (std::string tok; std::getline(ss, tok, ',');)
                    parts.push_back(tok);
                if (parts.size() != 3)
                    throw CLI::ValidationError("--pair", "expected id,reference,test");
                rows.push_back({parts[0], compare_images(load_image(parts[1]), load_image(parts[2]))});
            }
            if (ev_out.empty()) {
                write_report(std::cout, rows);
            } else {
                std::ofstream os(ev_out);
                if (!os)
                    throw IoError("cannot write " + ev_out);
                write_report(os, rows);
            }
        } else if (*rt) {
            rt_opts.height = rt_opts.width;
            rt_opts.material = parse_params(rt_params);
            if (!rt_light.empty())
                rt_opts.light_dir = parse_vec3(rt_light, "--light");
            EstimateOptions opts;
            opts.min_occupied = rt_floor;
            std::optional<TrainedModel> model;
            if (rt_estimator == "nn") {
                if (rt_model.empty())
                    throw CLI::ValidationError("round-trip", "--estimator nn needs --model");
                model.emplace(TrainedModel::load(rt_model));
                opts.estimator = Estimator::nn;
                opts.model = &*model;
            }
            RoundTripResult r = round_trip(rt_opts, opts);
            write_report(std::cout, r.report);
            std::printf("mean_psnr\t%.4f\n", r.mean_psnr);
            std::printf("estimated\t%zu of %zu\n", r.sufficient, r.table.rows.size());
            double max_linf = 0, sum_linf = 0;
            for (const auto &row : r.table.rows)
                if (row.params) {
                    double e = param_error(*row.params, rt_opts.material).linf;
                    max_linf = std::max(max_linf, e);
                    sum_linf += e;
                }
            std::printf("within_%.2f\t%zu\n", r.tolerance, r.within_tolerance);
            std::printf("mean_linf\t%.6f\nmax_linf\t%.6f\n", r.sufficient ? sum_linf / double(r.sufficient) : 0.0,
                        max_linf);
            if (!rt_out.empty()) {
                fs::create_directories(rt_out);
                save_param_table(fs::path(rt_out) / "params.tsv", r.table);
                std::ofstream os(fs::path(rt_out) / "report.tsv");
                write_report(os, r.report);
            }
        }
    } catch (const CLI::ValidationError &e) {
        std::cerr << "rmap: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "rmap: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
