#pragma once

#include <filesystem>
#include <vector>

#include "rmap/vec.hpp"

namespace rmap {

/// Row-major linear RGB image; row 0 is the top of the frame.
class LinearImage {
  public:
    LinearImage() = default;
    LinearImage(int width, int height, const Rgb &fill = {});

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return pixels_.size(); }
    bool empty() const { return pixels_.empty(); }

    Rgb &at(int x, int y) { return pixels_[std::size_t(y) * width_ + x]; }
    const Rgb &at(int x, int y) const { return pixels_[std::size_t(y) * width_ + x]; }
    Rgb &operator[](std::size_t i) { return pixels_[i]; }
    const Rgb &operator[](std::size_t i) const { return pixels_[i]; }

    const std::vector<Rgb> &pixels() const { return pixels_; }
    std::vector<Rgb> &pixels() { return pixels_; }

    bool same_size(const LinearImage &o) const { return width_ == o.width_ && height_ == o.height_; }
    bool operator==(const LinearImage &) const = default;

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> pixels_;
};

/// Copy with every channel clamped into [0,1] (display range).
LinearImage clamp_unit(const LinearImage &img);

double linear_to_srgb(double v);
double srgb_to_linear(double v);

/// Portable float map (little-endian, 3 channels). Values are stored as f32.
void save_pfm(const std::filesystem::path &path, const LinearImage &img);
LinearImage load_pfm(const std::filesystem::path &path);

/// 8-bit sRGB-encoded previews. Format chosen by extension: .png or .ppm.
void save_preview(const std::filesystem::path &path, const LinearImage &img);
/// Loads an 8-bit PNG; `srgb` applies the inverse sRGB transfer, otherwise values are v/255.
LinearImage load_png(const std::filesystem::path &path, bool srgb);

/// Dispatches on extension (.pfm or .png).
LinearImage load_image(const std::filesystem::path &path, bool srgb_png = false);

} // namespace rmap
