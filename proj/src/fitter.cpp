#include "rmap/fitter.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace rmap {

void MapLayout::surface_point(const Vec3 &texel_dir, Vec3 &n, Vec3 &omega_o) const {
    if (sphere_) {
        n = texel_dir;
        omega_o = normalize(eye_ - texel_dir);
    } else {
        n = {0, 0, 1};
        omega_o = texel_dir;
    }
}

ShadingGeometry MapLayout::geometry(const Vec3 &texel_dir, const Vec3 &omega_i) const {
    Vec3 n, omega_o;
    surface_point(texel_dir, n, omega_o);
    return ShadingGeometry::trusted(n, omega_i, omega_o);
}

namespace {

struct Sample {
    Vec3 n;
    Vec3 omega_o;
    Rgb observed;
};

std::vector<Sample> collect(const ReflectanceMap &map, const MapLayout &layout) {
    std::vector<Sample> out;
    out.reserve(map.cells().size());
    for (const auto &c : map.cells()) {
        Sample s;
        layout.surface_point(texel_direction(map.texel_of(c), map.height(), map.width()), s.n, s.omega_o);
        s.observed = c.sum / double(c.count);
        out.push_back(s);
    }
    return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) {
    p = std::clamp(p, 1e-4, 1.0 - 1e-4);
    return std::log(p / (1.0 - p));
}

/// Objective over one map; coordinates are 7 squashed material values,
/// optionally followed by the light's (theta, phi).
class Problem {
  public:
    Problem(std::vector<Sample> samples, std::optional<Vec3> fixed_light)
        : samples_(std::move(samples)), fixed_light_(fixed_light) {}

    int dims() const { return fixed_light_ ? 7 : 9; }
    std::size_t size() const { return samples_.size(); }

    static ReflectanceParams material(const Eigen::VectorXd &z) {
        return {Rgb(sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])), Rgb(sigmoid(z[3]), sigmoid(z[4]), sigmoid(z[5])),
                sigmoid(z[6])};
    }
    Vec3 light(const Eigen::VectorXd &z) const {
        return fixed_light_ ? *fixed_light_ : angles_to_dir({z[7], z[8]});
    }

    /// Per-texel RGB error, model minus observation.
    void errors(const Eigen::VectorXd &z, std::vector<Rgb> &out) const {
        const ReflectanceParams p = material(z);
        const Vec3 wi = light(z);
        out.resize(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const Sample &s = samples_[i];
            out[i] = shade(p, ShadingGeometry::trusted(s.n, wi, s.omega_o)) - s.observed;
        }
    }

    /// Linear least squares for k_d, k_s per channel at fixed roughness and light.
    ReflectanceParams linear_seed(double r, const Vec3 &wi, double &cost) const {
        const ReflectanceParams diffuse_only(Rgb::gray(1), Rgb::gray(0), r);
        const ReflectanceParams specular_only(Rgb::gray(0), Rgb::gray(1), r);
        double aa = 0, ab = 0, bb = 0;
        Rgb ay, by;
        std::vector<std::pair<double, double>> basis(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const Sample &s = samples_[i];
            auto g = ShadingGeometry::trusted(s.n, wi, s.omega_o);
            double a = shade(diffuse_only, g).r, b = shade(specular_only, g).r;
            basis[i] = {a, b};
            aa += a * a;
            ab += a * b;
            bb += b * b;
            ay += s.observed * a;
            by += s.observed * b;
        }
        Rgb kd, ks;
        double det = aa * bb - ab * ab;
        for (int c = 0; c < 3; ++c) {
            double d = 0.5, k = 0.5;
            if (det > 1e-12 * std::max(1.0, aa * bb)) {
                d = (bb * ay[c] - ab * by[c]) / det;
                k = (aa * by[c] - ab * ay[c]) / det;
            } else if (aa > 0) {
                d = ay[c] / aa;
                k = 0.0;
            }
            kd[c] = std::clamp(d, 0.0, 1.0);
            ks[c] = std::clamp(k, 0.0, 1.0);
        }
        cost = 0;
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            Rgb m = kd * basis[i].first + ks * basis[i].second - samples_[i].observed;
            cost += m.r * m.r + m.g * m.g + m.b * m.b;
        }
        return {kd, ks, r};
    }

  private:
    std::vector<Sample> samples_;
    std::optional<Vec3> fixed_light_;
};

double robust_threshold(const std::vector<Rgb> &e, double quantile) {
    std::vector<double> sq(e.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        sq[i] = e[i].r * e[i].r + e[i].g * e[i].g + e[i].b * e[i].b;
    std::size_t k = std::min(sq.size() - 1, std::size_t(std::clamp(quantile, 0.0, 1.0) * double(sq.size() - 1)));
    std::nth_element(sq.begin(), sq.begin() + std::ptrdiff_t(k), sq.end());
    return std::max(sq[k], 1e-30);
}

double cost_of(const std::vector<Rgb> &e, double clamp_at) {
    double acc = 0;
    for (const Rgb &v : e)
        acc += std::min(v.r * v.r + v.g * v.g + v.b * v.b, clamp_at);
    return acc;
}

struct StartResult {
    Eigen::VectorXd z;
    double cost = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;
};

StartResult levenberg_marquardt(const Problem &prob, Eigen::VectorXd z, const FitOptions &opt) {
    const int dims = prob.dims();
    const std::size_t m = prob.size();
    const double inf = std::numeric_limits<double>::infinity();
    StartResult res;
    std::vector<Rgb> e, ep, em;
    prob.errors(z, e);
    double clamp_at = opt.robust_quantile ? robust_threshold(e, *opt.robust_quantile) : inf;
    double cost = cost_of(e, clamp_at);
    res.history.push_back(cost);
    double lambda = opt.initial_damping;
    Eigen::MatrixXd jac(Eigen::Index(3 * m), dims);
    Eigen::VectorXd r(Eigen::Index(3 * m));

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (cost <= 1e-28) {
            res.converged = true;
            break;
        }
        if (opt.robust_quantile) {
            clamp_at = robust_threshold(e, *opt.robust_quantile);
            cost = cost_of(e, clamp_at);
        }
        // Texels beyond the clamp contribute a constant and therefore no gradient.
        std::vector<char> active(m, 1);
        for (std::size_t i = 0; i < m; ++i) {
            double sq = e[i].r * e[i].r + e[i].g * e[i].g + e[i].b * e[i].b;
            active[i] = sq <= clamp_at;
            for (int c = 0; c < 3; ++c)
                r[Eigen::Index(3 * i + c)] = active[i] ? e[i][c] : 0.0;
        }
        for (int k = 0; k < dims; ++k) {
            Eigen::VectorXd zp = z, zm = z;
            zp[k] += opt.fd_step;
            zm[k] -= opt.fd_step;
            prob.errors(zp, ep);
            prob.errors(zm, em);
            for (std::size_t i = 0; i < m; ++i)
                for (int c = 0; c < 3; ++c)
                    jac(Eigen::Index(3 * i + c), k) = active[i] ? (ep[i][c] - em[i][c]) / (2.0 * opt.fd_step) : 0.0;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;

        bool accepted = false;
        while (!accepted && lambda < 1e12) {
            Eigen::MatrixXd a = jtj;
            for (int k = 0; k < dims; ++k)
                a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            Eigen::VectorXd step = a.ldlt().solve(-grad);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            Eigen::VectorXd zt = z + step;
            std::vector<Rgb> et;
            prob.errors(zt, et);
            double ct = cost_of(et, clamp_at);
            if (ct < cost) {
                double rel = (cost - ct) / std::max(cost, 1e-300);
                z = zt;
                e = std::move(et);
                cost = ct;
                res.history.push_back(cost);
                lambda = std::max(lambda * 0.5, 1e-12);
                accepted = true;
                if (rel < opt.relative_tolerance)
                    res.converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) // no descent direction left at machine precision
            res.converged = true;
        if (res.converged) {
            ++it;
            break;
        }
    }
    res.z = z;
    res.cost = cost_of(e, inf);
    res.iterations = it;
    return res;
}

Eigen::VectorXd encode(const ReflectanceParams &p, const std::optional<SphericalAngles> &light) {
    Eigen::VectorXd z(light ? 9 : 7);
    auto a = p.to_array();
    for (int i = 0; i < 7; ++i)
        z[i] = logit(a[std::size_t(i)]);
    if (light) {
        z[7] = light->theta;
        z[8] = light->phi;
    }
    return z;
}

ReflectanceParams seed_material(const Problem &prob, const Vec3 &wi, const FitOptions &opt) {
    if (opt.initial_params)
        return *opt.initial_params;
    // k_d and k_s enter linearly, so the seed is a 1-D search over roughness
    // with the colors solved in closed form at every trial value.
    auto cost_at = [&](double r) {
        double c = 0;
        prob.linear_seed(r, wi, c);
        return c;
    };
    constexpr int kScan = 40;
    std::array<double, kScan + 1> grid{}, costs{};
    int best = 0;
    for (int i = 0; i <= kScan; ++i) {
        grid[std::size_t(i)] = double(i) / kScan;
        costs[std::size_t(i)] = cost_at(grid[std::size_t(i)]);
        if (costs[std::size_t(i)] < costs[std::size_t(best)])
            best = i;
    }
    double lo = grid[std::size_t(std::max(best - 1, 0))], hi = grid[std::size_t(std::min(best + 1, kScan))];
    auto [r, c] = boost::math::tools::brent_find_minima(cost_at, lo, hi, 52);
    if (c > costs[std::size_t(best)])
        r = grid[std::size_t(best)];
    double unused = 0;
    ReflectanceParams p = prob.linear_seed(r, wi, unused);
    // Keep the squashed coordinates away from saturation.
    auto inner = [](const Rgb &v) {
        return Rgb(std::clamp(v.r, 1e-3, 1 - 1e-3), std::clamp(v.g, 1e-3, 1 - 1e-3), std::clamp(v.b, 1e-3, 1 - 1e-3));
    };
    return {inner(p.kd()), inner(p.ks()), std::clamp(r, 1e-3, 1 - 1e-3)};
}

} // namespace

double residual(const ReflectanceParams &params, const SphericalAngles &light, const ReflectanceMap &map,
                const MapLayout &layout) {
    if (map.empty())
        throw std::invalid_argument("residual: reflectance map has no samples");
    const Vec3 wi = angles_to_dir(light);
    double acc = 0;
    for (const auto &c : map.cells()) {
        Rgb model = shade(params, layout.geometry(texel_direction(map.texel_of(c), map.height(), map.width()), wi));
        Rgb d = c.sum / double(c.count) - model;
        acc += d.r * d.r + d.g * d.g + d.b * d.b;
    }
    return acc;
}

FitResult fit(const ReflectanceMap &map, const std::optional<SphericalAngles> &known_light, const MapLayout &layout,
              const FitOptions &options) {
    if (map.occupied() < options.min_occupied)
        throw TooFewSamples("reflectance map has " + std::to_string(map.occupied()) +
                            " occupied texels; at least " + std::to_string(options.min_occupied) + " required");
    auto samples = collect(map, layout);
    const std::size_t m = samples.size();

    StartResult best;
    if (known_light) {
        const Vec3 wi = angles_to_dir(*known_light);
        Problem prob(std::move(samples), wi);
        best = levenberg_marquardt(prob, encode(seed_material(prob, wi, options), std::nullopt), options);
    } else {
        Problem prob(std::move(samples), std::nullopt);
        // Sphere maps can be lit from any direction; surface maps only from above.
        const double zeniths_sphere[] = {kPi / 3.0, 2.0 * kPi / 3.0};
        const double zeniths_surface[] = {kPi / 6.0, kPi / 3.0};
        for (int zi = 0; zi < options.light_zenith_starts; ++zi) {
            double theta = layout.is_sphere() ? zeniths_sphere[zi % 2] : zeniths_surface[zi % 2];
            if (options.light_zenith_starts > 2)
                theta = (zi + 0.5) * (layout.is_sphere() ? kPi : kPi / 2.0) / options.light_zenith_starts;
            for (int ai = 0; ai < options.light_azimuth_starts; ++ai) {
                SphericalAngles start{theta, kTwoPi * ai / options.light_azimuth_starts};
                Vec3 wi = angles_to_dir(start);
                StartResult r = levenberg_marquardt(prob, encode(seed_material(prob, wi, options), start), options);
                if (r.cost < best.cost)
                    best = std::move(r);
            }
        }
        // Re-seed the material at the winning light; saturated squashed
        // coordinates from a far start otherwise stall the joint solve.
        SphericalAngles found{best.z[7], best.z[8]};
        StartResult polished =
            levenberg_marquardt(prob, encode(seed_material(prob, angles_to_dir(found), options), found), options);
        if (polished.cost < best.cost)
            best = std::move(polished);
    }

    FitResult out;
    out.params = Problem::material(best.z);
    out.light = known_light ? *known_light : canonicalize(dir_to_angles(angles_to_dir({best.z[7], best.z[8]})));
    out.rmse = std::sqrt(best.cost / double(3 * m));
    out.iterations = best.iterations;
    out.converged = best.converged;
    out.cost_history = std::move(best.history);
    return out;
}

ReflectanceMap render_like(const ReflectanceParams &params, const SphericalAngles &light, const ReflectanceMap &like,
                           const MapLayout &layout) {
    const Vec3 wi = angles_to_dir(light);
    ReflectanceMap out(like.height(), like.width());
    for (const auto &c : like.cells()) {
        Texel t = like.texel_of(c);
        out.accumulate(t, shade(params, layout.geometry(texel_direction(t, like.height(), like.width()), wi)));
    }
    return out;
}

} // namespace rmap
