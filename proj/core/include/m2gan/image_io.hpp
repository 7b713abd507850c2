#pragma once

#include <string>

#include "m2gan/tensor.hpp"

namespace m2gan {

// PNG I/O. Read produces {H,W,3} or {H,W,1} doubles in [0,1]; write clamps
// to [0,1] and quantizes to 8 bits. All failures raise IoError.
Tensor read_image_rgb8(const std::string& path);
Tensor read_image_gray8(const std::string& path);
// Gray read without normalization: raw 0..255 values (label maps).
Tensor read_image_gray8_raw(const std::string& path);

void write_image_rgb8(const std::string& path, const Tensor& image);
void write_image_gray8(const std::string& path, const Tensor& image);

}  // namespace m2gan
