// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: rmap_acceptance [--only name ...] [--work dir] [--save-model file]

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rmap/brdf.hpp"
#include "rmap/dataset.hpp"
#include "rmap/fitter.hpp"
#include "rmap/metrics.hpp"
#include "rmap/parallel.hpp"
#include "rmap/pipeline.hpp"
#include "rmap/regressor.hpp"
#include "rmap/renderer.hpp"
#include "test_util.hpp"

using namespace rmap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    bool warn_only = false;
    std::string detail;

    void check(bool ok, const std::string &what) {
        pass = pass && ok;
        if (!detail.empty())
            detail += "; ";
        detail += what + (ok ? "" : " [miss]");
    }
};

std::string num(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

struct Settings {
    fs::path work;
    std::string save_model;
};

// BRDF properties

Outcome brdf_suite(const Settings &) {
    Outcome o;
    test::Rng rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    double worst_recip = 0;
    for (int i = 0; i < 10000; ++i) {
        auto g = test::random_lit_geometry(rng);
        ReflectanceParams p(Rgb(u(rng), u(rng), u(rng)), Rgb(u(rng), u(rng), u(rng)), u(rng));
        Rgb a = eval_torrance_sparrow(p, g);
        Rgb b = eval_torrance_sparrow(p, ShadingGeometry(g.n(), g.omega_o(), g.omega_i()));
        for (int c = 0; c < 3; ++c)
            worst_recip = std::max(worst_recip, std::abs(a[c] - b[c]) / std::max(1.0, std::abs(a[c])));
    }
    o.check(worst_recip <= 1e-6, "reciprocity max rel " + num(worst_recip));

    double most_negative = 0;
    for (int i = 0; i < 10000; ++i) {
        auto g = test::random_geometry(rng);
        ReflectanceParams p(Rgb(u(rng), u(rng), u(rng)), Rgb(u(rng), u(rng), u(rng)), u(rng));
        Rgb v = shade(p, g);
        for (int c = 0; c < 3; ++c)
            most_negative = std::min(most_negative, v[c]);
    }
    o.check(most_negative >= 0.0, "min shade " + num(most_negative));

    // Reflected diffuse radiance integrated over the outgoing hemisphere, by
    // cosine-weighted sampling, never exceeds the incident cos(theta_i) L_i.
    double worst_ratio = 0;
    for (int trial = 0; trial < 5; ++trial) {
        ReflectanceParams p(Rgb(1.0, u(rng), u(rng)), Rgb(), u(rng));
        Vec3 wi = test::random_upper(rng, 0.05);
        const int n = 100000;
        double sum = 0;
        for (int s = 0; s < n; ++s) {
            double r1 = u(rng), r2 = u(rng);
            double rad = std::sqrt(r1), phi = kTwoPi * r2;
            Vec3 wo{rad * std::cos(phi), rad * std::sin(phi), std::sqrt(std::max(0.0, 1 - r1))};
            if (wo.z <= 1e-9)
                continue;
            wo = normalize(wo);
            // pdf = cos(theta_o) / pi, integrand = shade * cos(theta_o)
            sum += shade(p, ShadingGeometry({0, 0, 1}, wi, wo)).r * kPi;
        }
        worst_ratio = std::max(worst_ratio, (sum / n) / wi.z);
    }
    o.check(worst_ratio <= 1.0 + 0.02, "diffuse energy / (cos L) max " + num(worst_ratio, 6));
    return o;
}

// Configuration constants

Outcome configuration(const Settings &) {
    Outcome o;
    auto cams = viewpoint_grid();
    std::map<double, int> zeniths;
    for (const auto &c : cams)
        zeniths[c.orbit_params()->theta]++;
    bool grid_ok = cams.size() == 24 && zeniths.size() == 3 && zeniths[kPi / 9] == 8 &&
                   zeniths[5 * kPi / 18] == 8 && zeniths[4 * kPi / 9] == 8;
    o.check(grid_ok, std::to_string(cams.size()) + " cameras on 3 zeniths");

    std::size_t lattice = GridSpec::standard().count(), random = kStandardRandomMaterials;
    o.check(lattice == 20480 && random == 3520 && lattice + random == 24000,
            "materials " + std::to_string(lattice) + " + " + std::to_string(random));
    ReflectanceMap m;
    o.check(m.height() == 60 && m.width() == 120 && kMapHeight == 60 && kMapWidth == 120, "maps 60x120");

    // Roughness weight 3; specular weight 1 - cbrt(r).
    Vec7 t{0.2, 0.4, 0.6, 0.3, 0.5, 0.7, 0.35};
    Vec7 rough = t;
    rough[6] = 1.0;
    Vec7 spec = rough;
    spec[3] = 0.0;
    Vec7 p = t;
    p[6] += 0.1;
    Vec7 half{0, 0, 0, 0, 0, 0, 0.125}, half_pred = half;
    half_pred[4] = 0.5;
    bool loss_ok = weighted_loss(t, t) == 0.0 && weighted_loss(spec, rough) == 0.0 &&
                   std::abs(weighted_loss(p, t) - 3.0 * 0.01) <= 1e-15 &&
                   std::abs(weighted_loss(half_pred, half) - 0.125) <= 1e-15 && kRoughnessLossWeight == 3.0;
    o.check(loss_ok, "loss examples");
    return o;
}

// Aggregation

double mean_abs_co_occupied(const ReflectanceMap &a, const ReflectanceMap &b, int &n) {
    double s = 0;
    n = 0;
    for (const auto &cell : a.cells()) {
        Texel t = a.texel_of(cell);
        if (b.count(t) == 0)
            continue;
        Rgb d = a.mean(t) - b.mean(t);
        s += std::abs(d.r) + std::abs(d.g) + std::abs(d.b);
        n += 3;
    }
    return n ? s / n : 0.0;
}

Outcome aggregation(const Settings &) {
    Outcome o;
    test::Rng rng(202);
    double worst = 0;
    int min_texels = 1 << 30;
    for (int i = 0; i < 10; ++i) {
        ReflectanceParams p = test::random_params(rng);
        Camera cam = Camera::orbit({kPi / 3, 0.6 * i, 4.0, {}}, 35.0 * kPi / 180.0, 512, 512);
        Vec3 light = dataset_light_dir(cam);
        auto analytic = sphere_map(p, cam, light);
        auto unwrapped = test::unwrap_sphere_render(render_sphere(p, cam, light), cam);
        int n = 0;
        worst = std::max(worst, mean_abs_co_occupied(analytic, unwrapped, n));
        min_texels = std::min(min_texels, n / 3);
    }
    o.check(worst <= 5e-3 && min_texels > 500,
            "unwrap vs analytic worst MAE " + num(worst) + " over >= " + std::to_string(min_texels) + " texels");

    // Shard merge against one sequential pass over all images in order.
    SyntheticSceneOptions so;
    so.subdivisions = 2;
    so.cameras = 6;
    so.width = so.height = 96;
    SceneBundle scene = synthetic_scene(so);
    auto buffers = build_buffers(scene);
    set_thread_count(4);
    TriangleMapSet sharded = aggregate(scene, buffers);
    set_thread_count(0);
    std::vector<ReflectanceMap> seq(scene.mesh.face_count());
    for (std::size_t i = 0; i < buffers.size(); ++i) {
        const Vec3 eye = scene.poses[i].center();
        std::vector<ReflectanceMap> shard(scene.mesh.face_count());
        for (const auto &px : buffers[i].pixels) {
            if (!px.hit())
                continue;
            TriangleFrame f = triangle_frame(scene.mesh.normal(px.triangle));
            shard[px.triangle].accumulate(normalize(f.to_local(normalize(eye - px.point))),
                                          scene.images[i].at(px.u, px.v));
        }
        for (std::size_t t = 0; t < seq.size(); ++t)
            seq[t].merge_from(shard[t]);
    }
    bool exact = true;
    for (std::size_t t = 0; t < seq.size(); ++t)
        exact = exact && seq[t] == sharded.maps[t];
    o.check(exact, "sharded == sequential texel-exact");
    return o;
}

// Fitter

std::vector<double> occupied_values(const ReflectanceMap &m) {
    std::vector<double> v;
    for (const auto &c : m.cells())
        for (int k = 0; k < 3; ++k)
            v.push_back(std::min(1.0, c.sum[k] / c.count));
    return v;
}

Outcome fitter(const Settings &) {
    Outcome o;
    auto cams = viewpoint_grid();
    MaterialSet narrow = material_random(50, 303), full = material_random(50, 304);
    for (auto &p : narrow.entries)
        p = ReflectanceParams(p.kd(), p.ks(), 0.05 + 0.65 * p.roughness());

    std::vector<double> linf(50), psnrs(50), light_err(50, -1);
    parallel_for(50, [&](std::size_t i) {
        const Camera &cam = cams[i % cams.size()];
        const Vec3 light = dataset_light_dir(cam);
        const SphericalAngles wi = dir_to_angles(-light);
        const MapLayout layout = MapLayout::sphere(cam.center());

        auto map = sphere_map(narrow.entries[i], cam, light);
        linf[i] = param_error(fit(map, wi, layout).params, narrow.entries[i]).linf;
        if (narrow.entries[i].roughness() <= 0.5) {
            FitResult lat = fit(map, std::nullopt, layout);
            light_err[i] = angular_distance(angles_to_dir(lat.light), angles_to_dir(wi));
        }

        auto fmap = sphere_map(full.entries[i], cam, light);
        FitResult r = fit(fmap, wi, layout);
        psnrs[i] = psnr(occupied_values(fmap), occupied_values(render_like(r.params, r.light, fmap, layout)));
    });
    double max_linf = *std::max_element(linf.begin(), linf.end());
    double min_psnr = *std::min_element(psnrs.begin(), psnrs.end());
    double max_light = 0;
    int latent = 0;
    for (double e : light_err)
        if (e >= 0) {
            max_light = std::max(max_light, e);
            ++latent;
        }
    o.check(max_linf <= 0.02, "known light r<=0.7 max Linf " + num(max_linf));
    o.check(min_psnr >= 40.0, "full range min PSNR " + num(min_psnr) + " dB");
    o.check(max_light <= 3.0 * kPi / 180.0,
            "latent light r<=0.5 max error " + num(max_light * 180 / kPi) + " deg over " + std::to_string(latent));
    return o;
}

// End to end

Outcome end_to_end(const Settings &) {
    Outcome o;
    SyntheticSceneOptions so; // subdivision 4 icosphere: 5120 faces, 8 cameras
    RoundTripResult r = round_trip(so);
    o.check(r.mean_psnr >= 35.0, "mean PSNR " + num(r.mean_psnr) + " dB over " + std::to_string(r.report.size()) +
                                     " views, " + std::to_string(r.table.rows.size()) + " faces");
    double frac = r.sufficient ? double(r.within_tolerance) / double(r.sufficient) : 0.0;
    o.check(r.sufficient > 0 && frac >= 0.9, std::to_string(r.within_tolerance) + "/" + std::to_string(r.sufficient) +
                                                 " sampled faces within Linf 0.05");
    return o;
}

// Regressor

Outcome regressor(const Settings &s) {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();

    // Loss gradient against central differences.
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_grad = 0;
    const double h = 1e-5;
    for (int trial = 0; trial < 200; ++trial) {
        Vec7 p, t;
        for (std::size_t k = 0; k < 7; ++k) {
            p[k] = u(rng);
            t[k] = u(rng);
        }
        Vec7 g = weighted_loss_grad(p, t);
        for (std::size_t k = 0; k < 7; ++k) {
            Vec7 pp = p, pm = p;
            pp[k] += h;
            pm[k] -= h;
            double fd = (weighted_loss(pp, t) - weighted_loss(pm, t)) / (2 * h);
            worst_grad = std::max(worst_grad, std::abs(fd - g[k]) / std::max(std::abs(g[k]), 1e-3));
        }
    }
    o.check(worst_grad <= 1e-5, "loss gradient max rel " + num(worst_grad));

    const auto cams = viewpoint_grid();
    fs::path data = s.work / "regressor_data";
    generate_dataset(material_random(200, 1001), cams, data);
    RegressorConfig cfg = RegressorConfig::desk();
    TrainedModel model = train(data / "manifest.tsv", cfg, {[&](const EpochRecord &r) {
                                   std::printf("  %s\n", to_json_line(r).c_str());
                                   std::fflush(stdout);
                               }});
    if (!s.save_model.empty())
        model.save(s.save_model);

    MaterialSet test = material_random(200, 777);
    std::vector<LinearImage> inputs;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Camera &c = cams[i % cams.size()];
        inputs.push_back(resolve(sphere_map(test.entries[i], c, dataset_light_dir(c))).image);
    }
    auto preds = model.predict(inputs);
    double psnr_sum = 0, linf_sum = 0;
    int n_linf = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Camera &c = cams[i % cams.size()];
        const Vec3 light = dataset_light_dir(c);
        ReflectanceMap truth = sphere_map(test.entries[i], c, light);
        LinearImage a = clamp_unit(resolve(truth).image);
        LinearImage b = clamp_unit(resolve(sphere_map(preds[i], c, light)).image);
        std::vector<bool> mask(a.pixel_count());
        for (const auto &cell : truth.cells())
            mask[cell.index] = true;
        psnr_sum += psnr(masked_channels(a, mask), masked_channels(b, mask));
        if (test.entries[i].roughness() <= 0.7) {
            linf_sum += param_error(preds[i], test.entries[i]).linf;
            ++n_linf;
        }
    }
    // Soft property: drift under a horizontal flip is reported, not asserted.
    std::vector<LinearImage> flipped;
    for (const auto &img : inputs)
        flipped.push_back(flip_horizontal(img));
    auto fpreds = model.predict(flipped);
    double drift = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto a = preds[i].to_array(), b = fpreds[i].to_array();
        for (std::size_t k = 0; k < 7; ++k)
            drift += std::abs(a[k] - b[k]) / (7.0 * double(preds.size()));
    }
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
    o.check(psnr_sum / 200 >= 30.0, "held-out mean PSNR " + num(psnr_sum / 200) + " dB");
    o.check(linf_sum / n_linf <= 0.15, "mean Linf r<=0.7 " + num(linf_sum / n_linf) + " over " + std::to_string(n_linf));
    o.check(cfg.epochs <= 30 && model.history().size() <= 30,
            std::to_string(model.history().size()) + " epochs on " + std::to_string(200 * cams.size()) + " maps");
    o.check(minutes <= 60.0, "wall " + num(minutes, 3) + " min");
    o.detail += "; flip drift " + num(drift) + " (reported)";
    return o;
}

// Metrics

LinearImage gray_image(int w, int h, double (*f)(int, int)) {
    LinearImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(x, y) = Rgb::gray(f(x, y));
    return img;
}

Outcome metrics(const Settings &) {
    Outcome o;
    test::Rng rng(505);
    std::uniform_real_distribution<double> u(0.0, 1.0), lo(0.0, 0.9);
    LinearImage a(32, 32), b(32, 32), c(32, 32);
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        a[i] = Rgb(lo(rng), lo(rng), lo(rng));
        b[i] = a[i] + Rgb::gray(0.1);
        c[i] = Rgb(u(rng), u(rng), u(rng));
    }
    o.check(psnr(a, a) == kPsnrCap, "identical PSNR " + num(psnr(a, a)));
    double offset_db = psnr(a, b);
    o.check(std::abs(offset_db - 20.0) <= 1e-9, "offset 0.1 PSNR error " + num(std::abs(offset_db - 20.0)));
    double mse = 0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i)
        for (int k = 0; k < 3; ++k)
            mse += (a[i][k] - c[i][k]) * (a[i][k] - c[i][k]) / (3.0 * a.pixel_count());
    o.check(std::abs(psnr(a, c) + 10 * std::log10(mse)) <= 1e-9 && psnr(a, c) == psnr(c, a), "random pair PSNR");

    LinearImage ramp = gray_image(16, 16, [](int x, int y) { return (x + 16 * y) / 255.0; }), ramp_off = ramp;
    for (Rgb &p : ramp_off.pixels())
        p += Rgb::gray(0.05);
    o.check(nrmse(ramp, ramp) == 0.0 && std::abs(nrmse(ramp, ramp_off) - 0.05) <= 1e-12, "NRMSE examples");

    LinearImage pa = gray_image(24, 20, [](int x, int y) { return 0.5 + 0.4 * std::sin(0.7 * x) * std::cos(0.45 * y); });
    LinearImage pb = gray_image(24, 20, [](int x, int y) {
        return 0.5 + 0.35 * std::sin(0.7 * x + 0.3) * std::cos(0.45 * y) + 0.05 * std::cos(0.2 * x * y / 44.0);
    });
    LinearImage chk = gray_image(64, 48, [](int x, int y) { return ((x / 4) + (y / 4)) % 2 == 0 ? 0.9 : 0.1; });
    LinearImage inv = gray_image(64, 48, [](int x, int y) { return ((x / 4) + (y / 4)) % 2 == 0 ? 0.1 : 0.9; });
    bool dssim_ok = dssim(a, a) == 0.0 && std::abs(dssim(a, c) - dssim(c, a)) <= 1e-9 && dssim(chk, inv) > 0.3 &&
                    std::abs(dssim(pa, pb) - 0.029310757088233552) <= 1e-9;
    o.check(dssim_ok, "DSSIM examples (checker vs inverse " + num(dssim(chk, inv)) + ")");

    ReflectanceParams p(Rgb(0.6, 0.3, 0.2), Rgb::gray(0.8), 0.15), q(Rgb(0.6, 0.3, 0.2), Rgb::gray(0.8), 0.35);
    o.check(param_error(p, p).linf == 0.0 && std::abs(param_error(p, q).linf - 0.2) <= 1e-15, "param error examples");
    return o;
}

// Soft performance target

Outcome performance(const Settings &) {
    Outcome o;
    o.warn_only = true;
    // Throughput does not depend on the weights, so an untrained desk network stands in.
    TrainedModel model(nn::Architecture::desk(), NormStats{}, 1);
    const auto cams = viewpoint_grid();
    MaterialSet mats = material_random(100, 606);
    AugmentConfig aug;
    aug.mask_fraction_min = 0.9;
    aug.mask_fraction_max = 1.0;
    const std::size_t n = 10000;
    TriangleMapSet maps;
    maps.maps.resize(n);
    maps.samples.resize(n);
    std::vector<LinearImage> base(mats.size());
    for (std::size_t m = 0; m < mats.size(); ++m)
        base[m] = resolve(sphere_map(mats.entries[m], cams[m % 24], dataset_light_dir(cams[m % 24]))).image;
    for (std::size_t i = 0; i < n; ++i) {
        LinearImage img = augment(base[i % base.size()], aug, i);
        for (int row = 0; row < kMapHeight; ++row)
            for (int col = 0; col < kMapWidth; ++col) {
                const Rgb &v = img.at(col, row);
                if (v.max_component() > 0)
                    maps.maps[i].accumulate(Texel{row, col}, v);
            }
        // Keep every triangle eligible even when the mask blanked it.
        if (maps.maps[i].empty())
            maps.maps[i].accumulate(Texel{0, 0}, Rgb::gray(0.0));
        maps.samples[i] = maps.maps[i].total_samples();
    }
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    for (std::size_t i = 0; i < n; ++i) {
        double x = double(i);
        verts.push_back({x, 0, 0});
        verts.push_back({x + 1, 0, 0});
        verts.push_back({x, 1, 0});
        faces.push_back({std::uint32_t(3 * i), std::uint32_t(3 * i + 1), std::uint32_t(3 * i + 2)});
    }
    TriangleMesh mesh(verts, faces);
    EstimateOptions opts;
    opts.estimator = Estimator::nn;
    opts.model = &model;
    opts.min_occupied = 1;
    auto t0 = std::chrono::steady_clock::now();
    ParamTable table = estimate(maps, mesh, opts);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / double(n);
    o.check(table.sufficient_count() == n && ms <= 10 * 1.0094,
            "nn " + num(ms) + " ms/triangle on " + std::to_string(n) + " maps, " +
                std::to_string(thread_count()) + " threads (target <= 10.094)");
    return o;
}

// Determinism

Outcome determinism(const Settings &) {
    Outcome o;
    auto table_text = [](const SyntheticSceneOptions &so, int floor) {
        EstimateOptions est;
        est.min_occupied = floor;
        std::ostringstream os;
        write_param_table(os, round_trip(so, est).table);
        return os.str();
    };
    SyntheticSceneOptions defaults;
    o.check(table_text(defaults, 30) == table_text(defaults, 30), "default round trip tables identical");
    SyntheticSceneOptions fitted;
    fitted.subdivisions = 2;
    fitted.width = fitted.height = 128;
    std::string first = table_text(fitted, 5);
    set_thread_count(3);
    std::string second = table_text(fitted, 5);
    set_thread_count(0);
    o.check(first == second, "fitted round trip tables identical across thread counts");
    return o;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app("Acceptance suite");
    std::vector<std::string> only;
    Settings settings;
    std::string work = (fs::temp_directory_path() / "rmap_acceptance").string();
    app.add_option("--only", only, "Criteria to run (default: all)");
    app.add_option("--work", work, "Scratch directory")->capture_default_str();
    app.add_option("--save-model", settings.save_model, "Keep the trained regressor here");
    CLI11_PARSE(app, argc, argv);
    settings.work = work;
    fs::create_directories(settings.work);

    const std::vector<std::pair<std::string, std::function<Outcome(const Settings &)>>> criteria{
        {"brdf", brdf_suite},   {"configuration", configuration}, {"aggregation", aggregation},
        {"fitter", fitter},     {"end_to_end", end_to_end},       {"regressor", regressor},
        {"metrics", metrics},   {"performance", performance},     {"determinism", determinism},
    };
    for (const auto &name : only)
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto &c) { return c.first == name; })) {
            std::fprintf(stderr, "unknown criterion %s\n", name.c_str());
            return 2;
        }

    int failed = 0;
    for (const auto &[name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end())
            continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = run(settings);
        } catch (const std::exception &e) {
            out.pass = false;
            out.warn_only = false;
            out.detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char *tag = out.pass ? "PASS" : (out.warn_only ? "WARN" : "FAIL");
        std::printf("%s %s (%.1f s): %s\n", tag, name.c_str(), secs, out.detail.c_str());
        std::fflush(stdout);
        failed += !out.pass && !out.warn_only;
    }
    return failed ? 1 : 0;
}
