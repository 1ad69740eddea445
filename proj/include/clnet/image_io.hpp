#pragma once

// Binary PPM (P6, 8-bit) read/write. Lossless for our quantized rasters and
// byte-stable, which the golden-file and determinism tests rely on.

#include <string>

#include "clnet/tensor.hpp"

namespace clnet {

// Values clamped to [0,1] and quantized to 8 bits.
void write_ppm(const std::string& path, const Tensor3<float>& image);

// Returns values in [0,1]; throws ValidationError on malformed files.
Tensor3<float> read_ppm(const std::string& path);

// Any supported raster by extension (.ppm only for now).
Tensor3<float> read_image(const std::string& path);

} // namespace clnet
