#include "clnet/viz.hpp"

#include <algorithm>
#include <cmath>

#include "clnet/errors.hpp"

namespace clnet {

int viz_kernel_for_level(int level) {
    switch (level) {
    case 1: return 5;
    case 2: return 4;
    case 3: return 3;
    case 4: return 1;
    default: throw UsageError("viz level must be in 1..4, got " + std::to_string(level));
    }
}

Matrix<float> channel_mean(const Tensor3<float>& grid) {
    Matrix<float> out(grid.h, grid.w);
    for (int y = 0; y < grid.h; ++y)
        for (int x = 0; x < grid.w; ++x) {
            float s = 0;
            for (int c = 0; c < grid.c; ++c) s += grid.at(y, x, c);
            out.at(y, x) = s / static_cast<float>(grid.c);
        }
    return out;
}

Matrix<float> gaussian_blur(const Matrix<float>& in, int kernel_size) {
    if (kernel_size <= 1) return in;
    const int k = kernel_size;
    const double sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
    const double mu = (k - 1) * 0.5;
    std::vector<double> taps(static_cast<size_t>(k));
    double sum = 0;
    for (int i = 0; i < k; ++i) {
        taps[static_cast<size_t>(i)] = std::exp(-0.5 * (i - mu) * (i - mu) / (sigma * sigma));
        sum += taps[static_cast<size_t>(i)];
    }
    for (auto& t : taps) t /= sum;
    const int lo = -static_cast<int>(std::floor(mu)); // tap offset for i = 0

    Matrix<float> horiz(in.rows, in.cols);
    for (int y = 0; y < in.rows; ++y)
        for (int x = 0; x < in.cols; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) {
                const int xx = std::clamp(x + lo + i, 0, in.cols - 1);
                acc += taps[static_cast<size_t>(i)] * in.at(y, xx);
            }
            horiz.at(y, x) = static_cast<float>(acc);
        }
    Matrix<float> out(in.rows, in.cols);
    for (int y = 0; y < in.rows; ++y)
        for (int x = 0; x < in.cols; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) {
                const int yy = std::clamp(y + lo + i, 0, in.rows - 1);
                acc += taps[static_cast<size_t>(i)] * horiz.at(yy, x);
            }
            out.at(y, x) = static_cast<float>(acc);
        }
    return out;
}

void viridis(float t, float rgb[3]) {
    static const float anchors[9][3] = {
        {0.267004f, 0.004874f, 0.329415f}, {0.282623f, 0.140926f, 0.457517f},
        {0.253935f, 0.265254f, 0.529983f}, {0.206756f, 0.371758f, 0.553117f},
        {0.163625f, 0.471133f, 0.558148f}, {0.127568f, 0.566949f, 0.550556f},
        {0.134692f, 0.658636f, 0.517649f}, {0.477504f, 0.821444f, 0.318195f},
        {0.993248f, 0.906157f, 0.143936f}};
    t = std::clamp(t, 0.0f, 1.0f);
    const float pos = t * 8.0f;
    const int i0 = std::min(7, static_cast<int>(pos));
    const float f = pos - static_cast<float>(i0);
    for (int c = 0; c < 3; ++c)
        rgb[c] = anchors[i0][c] + f * (anchors[i0 + 1][c] - anchors[i0][c]);
}

Tensor3<float> render_heatmap(const Tensor3<float>& map_grid, int level, int upscale) {
    if (upscale < 1) throw UsageError("viz upscale must be >= 1");
    Matrix<float> mean = channel_mean(map_grid);
    Matrix<float> smooth = gaussian_blur(mean, viz_kernel_for_level(level));

    float lo = smooth.v[0], hi = smooth.v[0];
    for (float v : smooth.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float range = hi - lo;

    Tensor3<float> img(smooth.rows * upscale, smooth.cols * upscale, 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const float v = smooth.at(y / upscale, x / upscale);
            const float t = range > 0 ? (v - lo) / range : 0.0f;
            float rgb[3];
            viridis(t, rgb);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
        }
    return img;
}

} // namespace clnet
