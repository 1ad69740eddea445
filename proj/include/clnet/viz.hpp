#pragma once

// Neural-map heatmaps: channel mean -> Gaussian smoothing (kernel 5/4/3/1
// for levels 1..4; size 1 is a no-op) -> min-max normalize -> viridis ramp
// -> nearest-neighbor upscale.

#include <string>

#include "clnet/tensor.hpp"

namespace clnet {

int viz_kernel_for_level(int level); // 5, 4, 3, 1

// Separable Gaussian blur with clamp-to-edge borders; sigma follows
// 0.3*((k-1)*0.5 - 1) + 0.8. Even sizes center between taps.
Matrix<float> gaussian_blur(const Matrix<float>& in, int kernel_size);

Matrix<float> channel_mean(const Tensor3<float>& grid);

// Fixed perceptually-uniform ramp (piecewise-linear viridis).
void viridis(float t, float rgb[3]);

Tensor3<float> render_heatmap(const Tensor3<float>& map_grid, int level, int upscale);

} // namespace clnet
