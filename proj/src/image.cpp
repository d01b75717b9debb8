#include "rmap/image.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rmap/errors.hpp"

namespace rmap {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

LinearImage::LinearImage(int width, int height, const Rgb &fill) : width_(width), height_(height) {
    if (width < 0 || height < 0)
        throw std::invalid_argument("image dimensions must be non-negative");
    pixels_.assign(std::size_t(width) * height, fill);
}

LinearImage clamp_unit(const LinearImage &img) {
    LinearImage out = img;
    for (Rgb &p : out.pixels())
        for (int c = 0; c < 3; ++c)
            p[c] = std::clamp(p[c], 0.0, 1.0);
    return out;
}

double linear_to_srgb(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_to_linear(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

void save_pfm(const std::filesystem::path &path, const LinearImage &img) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    os << "PF\n" << img.width() << ' ' << img.height() << "\n-1.0\n";
    std::vector<float> row(std::size_t(img.width()) * 3);
    // PFM stores scanlines bottom to top.
    for (int y = img.height() - 1; y >= 0; --y) {
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[std::size_t(x) * 3 + c] = float(img.at(x, y)[c]);
        os.write(reinterpret_cast<const char *>(row.data()), std::streamsize(row.size() * sizeof(float)));
    }
    if (!os)
        throw IoError("write failed for " + path.string());
}

LinearImage load_pfm(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    is >> magic >> w >> h >> scale;
    if (magic != "PF" || w <= 0 || h <= 0 || scale == 0)
        throw IoError(path.string() + ": not a 3-channel PFM file");
    if (scale > 0)
        throw IoError(path.string() + ": big-endian PFM is not supported");
    is.get(); // single whitespace after the header
    LinearImage img(w, h);
    std::vector<float> row(std::size_t(w) * 3);
    for (int y = h - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char *>(row.data()), std::streamsize(row.size() * sizeof(float)));
        if (!is)
            throw IoError(path.string() + ": truncated PFM data");
        for (int x = 0; x < w; ++x)
            img.at(x, y) = {row[std::size_t(x) * 3], row[std::size_t(x) * 3 + 1], row[std::size_t(x) * 3 + 2]};
    }
    return img;
}

namespace {

std::vector<unsigned char> to_srgb8(const LinearImage &img) {
    std::vector<unsigned char> bytes(img.pixel_count() * 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        for (int c = 0; c < 3; ++c)
            bytes[i * 3 + c] = static_cast<unsigned char>(std::lround(linear_to_srgb(img[i][c]) * 255.0));
    return bytes;
}

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};

void save_png(const std::filesystem::path &path, const LinearImage &img) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp)
        throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }
    std::vector<unsigned char> bytes = to_srgb8(img);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y)
        png_write_row(png, bytes.data() + std::size_t(y) * img.width() * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

void save_preview(const std::filesystem::path &path, const LinearImage &img) {
    std::string ext = path.extension().string();
    if (ext == ".png") {
        save_png(path, img);
        return;
    }
    if (ext != ".ppm")
        throw std::invalid_argument("preview format must be .png or .ppm: " + path.string());
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    os << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    std::vector<unsigned char> bytes = to_srgb8(img);
    os.write(reinterpret_cast<const char *>(bytes.data()), std::streamsize(bytes.size()));
}

LinearImage load_png(const std::filesystem::path &path, bool srgb) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw IoError(path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(path.string() + ": " + image.message);
    }
    LinearImage img(int(image.width), int(image.height));
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        for (int c = 0; c < 3; ++c) {
            double v = buf[i * 3 + c] / 255.0;
            img[i][c] = srgb ? srgb_to_linear(v) : v;
        }
    return img;
}

LinearImage load_image(const std::filesystem::path &path, bool srgb_png) {
    std::string ext = path.extension().string();
    if (ext == ".pfm")
        return load_pfm(path);
    if (ext == ".png")
        return load_png(path, srgb_png);
    throw IoError(path.string() + ": unsupported image format (expected .pfm or .png)");
}

} // namespace rmap
