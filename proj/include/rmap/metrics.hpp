#pragma once

// Image and parameter error measures.
//
// PSNR uses peak 1.0 and is capped at 100 dB for identical inputs. NRMSE is
// normalized by the dynamic range of the reference (first argument). DSSIM is
// (1 - SSIM) / 2 with SSIM on Rec.709 luminance, an 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03 and L = 1. Images whose shorter side is at
// least 32 use 5-scale MS-SSIM with the standard weights; smaller ones fall
// back to single-scale SSIM.

#include <array>
#include <span>

#include "rmap/brdf.hpp"
#include "rmap/image.hpp"

namespace rmap {

inline constexpr double kPsnrCap = 100.0;

double psnr(std::span<const double> a, std::span<const double> b);
double psnr(const LinearImage &a, const LinearImage &b);

/// Throws std::invalid_argument for a constant reference.
double nrmse(std::span<const double> reference, std::span<const double> test);
double nrmse(const LinearImage &reference, const LinearImage &test);

/// Single-scale mean SSIM over the valid window positions of two luminance planes.
double ssim_single(const std::vector<double> &a, const std::vector<double> &b, int width, int height);
double ms_ssim(const std::vector<double> &a, const std::vector<double> &b, int width, int height);
double ssim(const LinearImage &a, const LinearImage &b);
double dssim(const LinearImage &a, const LinearImage &b);

struct ImagePairReport {
    double psnr = 0;
    double nrmse = 0;
    double dssim = 0;
};

ImagePairReport compare_images(const LinearImage &reference, const LinearImage &test);

struct ParamError {
    std::array<double, ReflectanceParams::kSize> abs{};
    double l2 = 0;
    double linf = 0;
};

ParamError param_error(const ReflectanceParams &pred, const ReflectanceParams &truth);

/// Channel values of pixels where `mask[i]` is set, flattened (3 per pixel).
std::vector<double> masked_channels(const LinearImage &img, const std::vector<bool> &mask);
std::vector<double> flatten(const LinearImage &img);

} // namespace rmap
