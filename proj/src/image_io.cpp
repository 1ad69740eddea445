#include "clnet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "clnet/errors.hpp"

namespace clnet {

void write_ppm(const std::string& path, const Tensor3<float>& image) {
    if (image.c != 3) throw ConfigError("write_ppm: image must have 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P6\n" << image.w << " " << image.h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(image.w) * 3);
    for (int y = 0; y < image.h; ++y) {
        for (int x = 0; x < image.w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                float v = std::clamp(image.at(y, x, ch), 0.0f, 1.0f);
                row[static_cast<size_t>(x) * 3 + ch] =
                    static_cast<uint8_t>(std::lround(v * 255.0f));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

namespace {

int read_pnm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw ValidationError("malformed PPM header in '" + path + "'");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

} // namespace

Tensor3<float> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open image '" + path + "'");
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw ValidationError("'" + path + "' is not a binary PPM (P6)");
    const int w = read_pnm_token(in, path);
    const int h = read_pnm_token(in, path);
    const int maxval = read_pnm_token(in, path);
    if (maxval != 255) throw ValidationError("'" + path + "': only maxval 255 supported");
    if (w <= 0 || h <= 0) throw ValidationError("'" + path + "': bad dimensions");
    Tensor3<float> img(h, w, 3);
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw ValidationError("'" + path + "': truncated pixel data");
    for (size_t i = 0; i < bytes.size(); ++i) img.v[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

Tensor3<float> read_image(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ppm" || ext == ".PPM") return read_ppm(path);
    throw ValidationError("unsupported image format '" + ext + "' for '" + path + "'");
}

} // namespace clnet
