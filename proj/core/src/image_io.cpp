#include "m2gan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "m2gan/common.hpp"

namespace m2gan {

namespace {

std::vector<unsigned char> read_png_bytes(const std::string& path, png_uint_32 format, int channels,
                                          int* height, int* width) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        std::string reason = image.message;
        png_image_free(&image);
        throw IoError(msg("cannot read PNG '", path, "': ", reason));
    }
    image.format = format;
    std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string reason = image.message;
        png_image_free(&image);
        throw IoError(msg("cannot decode PNG '", path, "': ", reason));
    }
    *height = static_cast<int>(image.height);
    *width = static_cast<int>(image.width);
    if (buffer.size() != static_cast<std::size_t>(*height) * *width * channels) {
        png_image_free(&image);
        throw IoError(msg("PNG '", path, "': unexpected decoded size"));
    }
    png_image_free(&image);
    return buffer;
}

void write_png_bytes(const std::string& path, png_uint_32 format, int channels, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != channels) {
        throw PreconditionError(msg("write PNG '", path, "': expected {H,W,", channels, "}, got ",
                                    image.shape_string()));
    }
    const int h = image.dim(0);
    const int w = image.dim(1);
    std::vector<unsigned char> buffer(static_cast<std::size_t>(h) * w * channels);
    const double* src = image.data();
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        double v = std::clamp(src[i], 0.0, 1.0);
        buffer[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_image out;
    std::memset(&out, 0, sizeof out);
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(w);
    out.height = static_cast<png_uint_32>(h);
    out.format = format;
    if (!png_image_write_to_file(&out, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        std::string reason = out.message;
        png_image_free(&out);
        throw IoError(msg("cannot write PNG '", path, "': ", reason));
    }
    png_image_free(&out);
}

}  // namespace

Tensor read_image_rgb8(const std::string& path) {
    int h = 0, w = 0;
    auto bytes = read_png_bytes(path, PNG_FORMAT_RGB, 3, &h, &w);
    Tensor out = Tensor::zeros({h, w, 3});
    double* dst = out.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) dst[i] = bytes[i] / 255.0;
    return out;
}

Tensor read_image_gray8(const std::string& path) {
    int h = 0, w = 0;
    auto bytes = read_png_bytes(path, PNG_FORMAT_GRAY, 1, &h, &w);
    Tensor out = Tensor::zeros({h, w, 1});
    double* dst = out.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) dst[i] = bytes[i] / 255.0;
    return out;
}

Tensor read_image_gray8_raw(const std::string& path) {
    int h = 0, w = 0;
    auto bytes = read_png_bytes(path, PNG_FORMAT_GRAY, 1, &h, &w);
    Tensor out = Tensor::zeros({h, w, 1});
    double* dst = out.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) dst[i] = static_cast<double>(bytes[i]);
    return out;
}

void write_image_rgb8(const std::string& path, const Tensor& image) {
    write_png_bytes(path, PNG_FORMAT_RGB, 3, image);
}

void write_image_gray8(const std::string& path, const Tensor& image) {
    write_png_bytes(path, PNG_FORMAT_GRAY, 1, image);
}

}  // namespace m2gan
