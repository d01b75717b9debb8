#include "rmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmap {

namespace {

void require_same_size(std::size_t a, std::size_t b) {
    if (a != b)
        throw std::invalid_argument("metric inputs differ in size");
    if (a == 0)
        throw std::invalid_argument("metric inputs are empty");
}

void require_same_size(const LinearImage &a, const LinearImage &b) {
    if (!a.same_size(b))
        throw std::invalid_argument("metric inputs differ in dimensions");
    if (a.empty())
        throw std::invalid_argument("metric inputs are empty");
}

double mse(std::span<const double> a, std::span<const double> b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / double(a.size());
}

} // namespace

std::vector<double> flatten(const LinearImage &img) {
    std::vector<double> v;
    v.reserve(img.pixel_count() * 3);
    for (const Rgb &p : img.pixels())
        for (int c = 0; c < 3; ++c)
            v.push_back(p[c]);
    return v;
}

std::vector<double> masked_channels(const LinearImage &img, const std::vector<bool> &mask) {
    if (mask.size() != img.pixel_count())
        throw std::invalid_argument("mask size differs from image size");
    std::vector<double> v;
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        if (mask[i])
            for (int c = 0; c < 3; ++c)
                v.push_back(img[i][c]);
    return v;
}

double psnr(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size());
    double m = mse(a, b);
    if (m <= 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double psnr(const LinearImage &a, const LinearImage &b) {
    require_same_size(a, b);
    return psnr(flatten(a), flatten(b));
}

double nrmse(std::span<const double> reference, std::span<const double> test) {
    require_same_size(reference.size(), test.size());
    auto [lo, hi] = std::minmax_element(reference.begin(), reference.end());
    double range = *hi - *lo;
    if (!(range > 0.0))
        throw std::invalid_argument("nrmse: reference image is constant");
    return std::sqrt(mse(reference, test)) / range;
}

double nrmse(const LinearImage &reference, const LinearImage &test) {
    require_same_size(reference, test);
    return nrmse(flatten(reference), flatten(test));
}

namespace {

constexpr double kK1 = 0.01, kK2 = 0.03;
constexpr double kC1 = (kK1 * 1.0) * (kK1 * 1.0);
constexpr double kC2 = (kK2 * 1.0) * (kK2 * 1.0);
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_kernel(int size) {
    std::vector<double> k(static_cast<std::size_t>(size));
    double center = (size - 1) / 2.0, total = 0;
    for (int i = 0; i < size; ++i) {
        double x = i - center;
        k[std::size_t(i)] = std::exp(-x * x / (2.0 * kSigma * kSigma));
        total += k[std::size_t(i)];
    }
    for (double &v : k)
        v /= total;
    return k;
}

/// Separable filtering in "valid" mode; the window shrinks to the image side when needed.
std::vector<double> filter_valid(const std::vector<double> &src, int w, int h, int kw, int kh, int &ow, int &oh) {
    std::vector<double> gx = gaussian_kernel(kw), gy = gaussian_kernel(kh);
    ow = w - kw + 1;
    oh = h - kh + 1;
    std::vector<double> tmp(std::size_t(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int k = 0; k < kw; ++k)
                acc += gx[std::size_t(k)] * src[std::size_t(y) * w + x + k];
            tmp[std::size_t(y) * ow + x] = acc;
        }
    std::vector<double> out(std::size_t(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int k = 0; k < kh; ++k)
                acc += gy[std::size_t(k)] * tmp[std::size_t(y + k) * ow + x];
            out[std::size_t(y) * ow + x] = acc;
        }
    return out;
}

struct SsimTerms {
    double ssim = 0; ///< mean of l * cs
    double cs = 0;   ///< mean of contrast-structure term
};

SsimTerms ssim_terms(const std::vector<double> &a, const std::vector<double> &b, int w, int h) {
    int kw = std::min(kWindow, w), kh = std::min(kWindow, h);
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    int ow = 0, oh = 0;
    auto mu_a = filter_valid(a, w, h, kw, kh, ow, oh);
    auto mu_b = filter_valid(b, w, h, kw, kh, ow, oh);
    auto s_aa = filter_valid(aa, w, h, kw, kh, ow, oh);
    auto s_bb = filter_valid(bb, w, h, kw, kh, ow, oh);
    auto s_ab = filter_valid(ab, w, h, kw, kh, ow, oh);
    SsimTerms t;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double va = s_aa[i] - mu_a[i] * mu_a[i];
        double vb = s_bb[i] - mu_b[i] * mu_b[i];
        double cov = s_ab[i] - mu_a[i] * mu_b[i];
        double l = (2.0 * mu_a[i] * mu_b[i] + kC1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1);
        double cs = (2.0 * cov + kC2) / (va + vb + kC2);
        t.ssim += l * cs;
        t.cs += cs;
    }
    t.ssim /= double(mu_a.size());
    t.cs /= double(mu_a.size());
    return t;
}

std::vector<double> downsample2(const std::vector<double> &src, int w, int h, int &ow, int &oh) {
    ow = w / 2;
    oh = h / 2;
    std::vector<double> out(std::size_t(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[std::size_t(y) * ow + x] =
                0.25 * (src[std::size_t(2 * y) * w + 2 * x] + src[std::size_t(2 * y) * w + 2 * x + 1] +
                        src[std::size_t(2 * y + 1) * w + 2 * x] + src[std::size_t(2 * y + 1) * w + 2 * x + 1]);
    return out;
}

std::vector<double> luminance(const LinearImage &img) {
    std::vector<double> v(img.pixel_count());
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        v[i] = img[i].luminance();
    return v;
}

} // namespace

double ssim_single(const std::vector<double> &a, const std::vector<double> &b, int width, int height) {
    return ssim_terms(a, b, width, height).ssim;
}

double ms_ssim(const std::vector<double> &a, const std::vector<double> &b, int width, int height) {
    static constexpr std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    std::vector<double> ca = a, cb = b;
    int w = width, h = height;
    double result = 1.0;
    for (std::size_t s = 0; s < kWeights.size(); ++s) {
        SsimTerms t = ssim_terms(ca, cb, w, h);
        // Negative structure terms would make fractional powers undefined.
        double term = s + 1 == kWeights.size() ? t.ssim : t.cs;
        result *= std::pow(std::max(term, 0.0), kWeights[s]);
        if (s + 1 < kWeights.size()) {
            int nw = 0, nh = 0;
            ca = downsample2(ca, w, h, nw, nh);
            cb = downsample2(cb, w, h, nw, nh);
            w = nw;
            h = nh;
        }
    }
    return result;
}

double ssim(const LinearImage &a, const LinearImage &b) {
    require_same_size(a, b);
    auto la = luminance(a), lb = luminance(b);
    if (std::min(a.width(), a.height()) >= 32)
        return ms_ssim(la, lb, a.width(), a.height());
    return ssim_single(la, lb, a.width(), a.height());
}

double dssim(const LinearImage &a, const LinearImage &b) {
    return std::clamp((1.0 - ssim(a, b)) / 2.0, 0.0, 1.0);
}

ImagePairReport compare_images(const LinearImage &reference, const LinearImage &test) {
    return {psnr(reference, test), nrmse(reference, test), dssim(reference, test)};
}

ParamError param_error(const ReflectanceParams &pred, const ReflectanceParams &truth) {
    ParamError e;
    auto p = pred.to_array(), t = truth.to_array();
    double sq = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        e.abs[i] = std::abs(p[i] - t[i]);
        sq += e.abs[i] * e.abs[i];
        e.linf = std::max(e.linf, e.abs[i]);
    }
    e.l2 = std::sqrt(sq);
    return e;
}

} // namespace rmap
