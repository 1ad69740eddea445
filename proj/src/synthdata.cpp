#include "clnet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "clnet/errors.hpp"
#include "clnet/image_io.hpp"

namespace fs = std::filesystem;

namespace clnet {

namespace {

constexpr int kNumColorClasses = 6;
constexpr double kCameraHeight = 1.6;    // meters
constexpr double kLandmarkHeightFactor = 1.2; // object height = factor * radius
constexpr double kMinLandmarkCamDist = 5.0;

const float kPalette[kNumColorClasses][3] = {
    {0.85f, 0.10f, 0.10f}, // red
    {0.10f, 0.35f, 0.85f}, // blue
    {0.95f, 0.80f, 0.10f}, // yellow
    {0.60f, 0.15f, 0.75f}, // purple
    {0.90f, 0.50f, 0.10f}, // orange
    {0.10f, 0.80f, 0.80f}, // cyan
};
const float kTerrain[3] = {0.30f, 0.55f, 0.25f};
const float kRoad[3] = {0.45f, 0.45f, 0.45f};
const float kSky[3] = {0.55f, 0.75f, 0.95f};

double dist2_point_segment(double px, double py, const RoadSegment& s) {
    const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
    const double wx = px - s.x0, wy = py - s.y0;
    const double vv = vx * vx + vy * vy;
    double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = wx - t * vx, dy = wy - t * vy;
    return dx * dx + dy * dy;
}

// Per-column ray directions, bearing clockwise from north. For widths
// divisible by 4 the table is built from the first quadrant by exact
// (y, -x) rotations, which makes quarter-turn augmentations bit-exact.
std::vector<std::pair<double, double>> column_directions(int w) {
    std::vector<std::pair<double, double>> dirs(static_cast<size_t>(w));
    if (w % 4 == 0) {
        const int q = w / 4;
        for (int c = 0; c < q; ++c) {
            const double theta = 2.0 * M_PI * c / w;
            dirs[c] = {std::sin(theta), std::cos(theta)};
        }
        for (int c = q; c < w; ++c)
            dirs[c] = {dirs[c - q].second, -dirs[c - q].first};
    } else {
        for (int c = 0; c < w; ++c) {
            const double theta = 2.0 * M_PI * c / w;
            dirs[c] = {std::sin(theta), std::cos(theta)};
        }
    }
    return dirs;
}

void add_noise(Tensor3<float>& img, Rng& rng, double sigma) {
    for (auto& v : img.v) {
        if (sigma > 0) v = static_cast<float>(v + sigma * rng.normal());
        v = std::clamp(v, 0.0f, 1.0f);
    }
}

Tensor3<float> render_satellite_window(const SceneSpec& scene, int h, int w, double cx, double cy,
                                       double side) {
    Tensor3<float> img(h, w, 3);
    for (int r = 0; r < h; ++r) {
        const double y = cy + side / 2 - (r + 0.5) * side / h;
        for (int c = 0; c < w; ++c) {
            const double x = cx + (c + 0.5) * side / w - side / 2;
            const float* color = kTerrain;
            for (const auto& road : scene.roads)
                if (dist2_point_segment(x, y, road) <= road.width * road.width / 4) color = kRoad;
            for (const auto& lm : scene.landmarks) {
                const double dx = x - lm.x, dy = y - lm.y;
                if (dx * dx + dy * dy <= lm.radius * lm.radius) color = kPalette[lm.color_class];
            }
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
        }
    }
    return img;
}

// Ray-cast 360-degree panorama. Returns the number of landmark pixels drawn
// so the caller can detect degenerate scenes.
Tensor3<float> render_ground_panorama(const SceneSpec& scene, int h, int w, int* landmark_pixels) {
    Tensor3<float> img(h, w, 3);
    const int horizon = h / 2;
    const double fv = h / 2.0;
    const auto dirs = column_directions(w);

    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const float* color = kSky;
            if (r >= horizon) {
                const double depth = fv * kCameraHeight / (r - horizon + 0.5);
                const double px = scene.cam_x + dirs[c].first * depth;
                const double py = scene.cam_y + dirs[c].second * depth;
                color = kTerrain;
                for (const auto& road : scene.roads)
                    if (dist2_point_segment(px, py, road) <= road.width * road.width / 4)
                        color = kRoad;
            }
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
        }

    int drawn = 0;
    struct Hit {
        double t;
        int landmark;
    };
    std::vector<Hit> hits;
    for (int c = 0; c < w; ++c) {
        hits.clear();
        for (size_t li = 0; li < scene.landmarks.size(); ++li) {
            const auto& lm = scene.landmarks[li];
            const double rx = lm.x - scene.cam_x, ry = lm.y - scene.cam_y;
            const double t = rx * dirs[c].first + ry * dirs[c].second;
            if (t <= 0) continue;
            const double perp2 = rx * rx + ry * ry - t * t;
            const double r2 = lm.radius * lm.radius;
            if (perp2 > r2) continue;
            const double thit = t - std::sqrt(r2 - perp2);
            if (thit <= 0.1) continue; // camera inside or touching
            hits.push_back({thit, static_cast<int>(li)});
        }
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
            if (a.t != b.t) return a.t > b.t; // far first, near painted last
            return a.landmark < b.landmark;
        });
        for (const auto& hit : hits) {
            const auto& lm = scene.landmarks[static_cast<size_t>(hit.landmark)];
            const double base = horizon + fv * kCameraHeight / hit.t;
            const double top = base - fv * (kLandmarkHeightFactor * lm.radius) / hit.t;
            const int r0 = std::max(0, static_cast<int>(std::ceil(top)));
            const int r1 = std::min(h - 1, static_cast<int>(std::floor(base)));
            for (int r = r0; r <= r1; ++r) {
                for (int ch = 0; ch < 3; ++ch)
                    img.at(r, c, ch) = kPalette[lm.color_class][ch];
                ++drawn;
            }
        }
    }
    if (landmark_pixels) *landmark_pixels = drawn;
    return img;
}

std::string pair_id_for(int64_t global_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%08lld", static_cast<long long>(global_index));
    return std::string(buf);
}

void place_landmarks(SceneSpec& scene, Rng& rng, const std::vector<std::pair<double, double>>& cams) {
    const int n = 6 + static_cast<int>(rng.uniform_index(7)); // 6..12
    for (int i = 0; i < n; ++i) {
        Landmark lm;
        lm.radius = rng.uniform(1.5, 4.0);
        lm.color_class = static_cast<int>(rng.uniform_index(kNumColorClasses));
        for (int attempt = 0; attempt < 100; ++attempt) {
            const double angle = rng.uniform(0.0, 2.0 * M_PI);
            const double dist = rng.uniform(6.0, 0.42 * scene.extent);
            lm.x = dist * std::sin(angle);
            lm.y = dist * std::cos(angle);
            bool ok = true;
            for (const auto& cam : cams) {
                const double dx = lm.x - cam.first, dy = lm.y - cam.second;
                if (std::sqrt(dx * dx + dy * dy) < lm.radius + kMinLandmarkCamDist) ok = false;
            }
            if (ok) break;
        }
        scene.landmarks.push_back(lm);
    }
}

void place_roads(SceneSpec& scene, Rng& rng) {
    const int n = 1 + static_cast<int>(rng.uniform_index(3)); // 1..3
    for (int i = 0; i < n; ++i) {
        RoadSegment seg;
        const double phi = rng.uniform(0.0, M_PI);
        const double off = rng.uniform(-0.15 * scene.extent, 0.15 * scene.extent);
        const double dx = std::sin(phi), dy = std::cos(phi);
        const double px = std::cos(phi) * off, py = -std::sin(phi) * off;
        seg.x0 = px - dx * scene.extent;
        seg.y0 = py - dy * scene.extent;
        seg.x1 = px + dx * scene.extent;
        seg.y1 = py + dy * scene.extent;
        seg.width = rng.uniform(2.0, 4.0);
        scene.roads.push_back(seg);
    }
}

struct VigorWorld {
    SceneSpec scene; // camera fields unset; per-slot cameras below
    std::array<std::pair<double, double>, 4> cams;
    std::array<std::pair<double, double>, 4> crop_centers;
};

VigorWorld generate_vigor_world(uint64_t dataset_seed, int64_t group, double noise_sigma,
                                double extent) {
    VigorWorld world;
    SceneSpec& scene = world.scene;
    scene.dataset_seed = dataset_seed;
    scene.index = group;
    scene.extent = extent;
    scene.noise_sigma = noise_sigma;
    Rng rng(mix_seed(dataset_seed, rng_stream::kScene, static_cast<uint64_t>(group), 0x7160u));

    const double base = extent / 12.0, jit = extent / 48.0;
    const double side = extent / 2.0;
    const int sx[4] = {-1, 1, -1, 1};
    const int sy[4] = {1, 1, -1, -1};
    std::vector<std::pair<double, double>> cams;
    for (int s = 0; s < 4; ++s) {
        const double cx = sx[s] * (base + rng.uniform(-jit, jit));
        const double cy = sy[s] * (base + rng.uniform(-jit, jit));
        world.cams[s] = {cx, cy};
        cams.push_back({cx, cy});
        // Crop center jitter keeps the own camera inside the center region
        // (side/8) while the other three cameras stay outside it.
        world.crop_centers[s] = {cx + rng.uniform(-side / 16, side / 16),
                                 cy + rng.uniform(-side / 16, side / 16)};
    }
    place_landmarks(scene, rng, cams);
    place_roads(scene, rng);
    return world;
}

} // namespace

SceneSpec generate_scene(uint64_t dataset_seed, int64_t index, double noise_sigma, double extent) {
    if (index < 0) throw ConfigError("generate_scene: index must be >= 0");
    SceneSpec scene;
    scene.dataset_seed = dataset_seed;
    scene.index = index;
    scene.extent = extent;
    scene.noise_sigma = noise_sigma;
    scene.cam_x = 0;
    scene.cam_y = 0;
    Rng rng(mix_seed(dataset_seed, rng_stream::kScene, static_cast<uint64_t>(index)));
    place_landmarks(scene, rng, {{0.0, 0.0}});
    place_roads(scene, rng);
    return scene;
}

double bearing_from_north(double dx, double dy) {
    double b = std::atan2(dx, dy); // clockwise from +y
    if (b < 0) b += 2.0 * M_PI;
    return b;
}

double bearing_to_column(double bearing, int width) { return bearing / (2.0 * M_PI) * width; }

std::pair<double, double> world_to_satellite_px(const SceneSpec& scene, double x, double y,
                                                const RenderSizes& sizes) {
    const double side = scene.extent;
    const double col = (x - scene.cam_x + side / 2) / side * sizes.sat_w;
    const double row = (scene.cam_y + side / 2 - y) / side * sizes.sat_h;
    return {col, row};
}

PairRecord render_pair(const SceneSpec& scene, const RenderSizes& sizes) {
    PairRecord rec;
    rec.pair_id = pair_id_for(scene.index);
    int landmark_pixels = 0;
    rec.ground = render_ground_panorama(scene, sizes.ground_h, sizes.ground_w, &landmark_pixels);
    if (landmark_pixels == 0)
        throw NumericError("render_pair: degenerate scene (no visible landmark), index " +
                           std::to_string(scene.index));
    rec.satellite =
        render_satellite_window(scene, sizes.sat_h, sizes.sat_w, scene.cam_x, scene.cam_y,
                                scene.extent);
    rec.offset_px = {0.0, 0.0};
    if (scene.noise_sigma > 0) {
        Rng noise(mix_seed(scene.dataset_seed, rng_stream::kRenderNoise,
                           static_cast<uint64_t>(scene.index)));
        add_noise(rec.ground, noise, scene.noise_sigma);
        add_noise(rec.satellite, noise, scene.noise_sigma);
    }
    return rec;
}

AugmentChoice augment_choice(uint64_t seed) {
    Rng rng(mix_seed(seed, rng_stream::kAugment));
    AugmentChoice choice;
    choice.quarter_turns = static_cast<int>(rng.uniform_index(4));
    choice.flip = rng.uniform() < 0.5;
    return choice;
}

namespace {

Tensor3<float> flip_satellite(const Tensor3<float>& img) {
    Tensor3<float> out(img.h, img.w, 3);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(r, img.w - 1 - c, ch);
    return out;
}

Tensor3<float> rot90_ccw(const Tensor3<float>& img) {
    Tensor3<float> out(img.w, img.h, 3);
    for (int r = 0; r < out.h; ++r)
        for (int c = 0; c < out.w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(c, img.h - 1 - r, ch);
    return out;
}

Tensor3<float> flip_panorama(const Tensor3<float>& img) {
    // Bearing negation: column c -> (W - c) mod W.
    Tensor3<float> out(img.h, img.w, 3);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(r, (img.w - c) % img.w, ch);
    return out;
}

Tensor3<float> shift_panorama(const Tensor3<float>& img, int columns) {
    Tensor3<float> out(img.h, img.w, 3);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = img.at(r, (c + columns) % img.w, ch);
    return out;
}

} // namespace

PairRecord apply_augment(const PairRecord& rec, const AugmentChoice& choice) {
    if (rec.offset_px != std::pair<double, double>{0.0, 0.0})
        throw ConfigError("augment_pair requires a center-aligned record");
    if (choice.quarter_turns % 2 == 1 && rec.satellite.h != rec.satellite.w)
        throw ConfigError("augment_pair: 90-degree rotation needs a square satellite image");
    if (rec.ground.w % 4 != 0)
        throw ConfigError("augment_pair: panorama width must be divisible by 4");
    PairRecord out = rec;
    if (choice.flip) {
        out.satellite = flip_satellite(out.satellite);
        out.ground = flip_panorama(out.ground);
    }
    for (int i = 0; i < choice.quarter_turns; ++i) out.satellite = rot90_ccw(out.satellite);
    // A CCW world quarter-turn moves a landmark's bearing back by 90
    // degrees, so the panorama content shifts left.
    out.ground = shift_panorama(out.ground, choice.quarter_turns * (rec.ground.w / 4));
    return out;
}

PairRecord augment_pair(const PairRecord& rec, uint64_t seed) {
    return apply_augment(rec, augment_choice(seed));
}

SyntheticDataset::SyntheticDataset(const DatasetSpec& spec) : spec_(spec) {
    if (spec.size <= 0) throw ConfigError("SyntheticDataset: size must be > 0");
    if (spec.mode == DatasetMode::offset && spec.size % 4 != 0)
        throw ConfigError("SyntheticDataset: offset mode needs a size divisible by 4");
    index_base_ = spec.split == Split::train ? 0 : (int64_t(1) << 20);
}

PairRecord SyntheticDataset::get(int index) const {
    if (index < 0 || index >= spec_.size)
        throw ConfigError("SyntheticDataset: index " + std::to_string(index) + " out of range");
    const int64_t g = index_base_ + index;
    if (spec_.mode == DatasetMode::center_aligned) {
        SceneSpec scene =
            generate_scene(spec_.dataset_seed, g, spec_.noise_sigma, spec_.world_extent);
        return render_pair(scene, spec_.sizes);
    }
    const int64_t group = g / 4;
    const int slot = static_cast<int>(g % 4);
    VigorWorld world =
        generate_vigor_world(spec_.dataset_seed, group, spec_.noise_sigma, spec_.world_extent);
    SceneSpec scene = world.scene;
    scene.cam_x = world.cams[slot].first;
    scene.cam_y = world.cams[slot].second;
    scene.index = g; // per-record noise stream

    PairRecord rec;
    rec.pair_id = pair_id_for(g);
    const double side = scene.extent / 2.0;
    const auto [ccx, ccy] = world.crop_centers[slot];
    int landmark_pixels = 0;
    rec.ground =
        render_ground_panorama(scene, spec_.sizes.ground_h, spec_.sizes.ground_w, &landmark_pixels);
    if (landmark_pixels == 0)
        throw NumericError("render: degenerate scene (no visible landmark), index " +
                           std::to_string(g));
    rec.satellite =
        render_satellite_window(scene, spec_.sizes.sat_h, spec_.sizes.sat_w, ccx, ccy, side);
    rec.offset_px = {(scene.cam_x - ccx) * spec_.sizes.sat_w / side,
                     -(scene.cam_y - ccy) * spec_.sizes.sat_h / side};
    for (int t = 0; t < 4; ++t)
        if (t != slot) rec.semi_positive_ids.push_back(pair_id_for(group * 4 + t));
    if (scene.noise_sigma > 0) {
        Rng noise(mix_seed(scene.dataset_seed, rng_stream::kRenderNoise, static_cast<uint64_t>(g)));
        add_noise(rec.ground, noise, scene.noise_sigma);
        add_noise(rec.satellite, noise, scene.noise_sigma);
    }
    return rec;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

} // namespace

DirectoryDataset load_directory_dataset(const std::string& root, const std::string& manifest_file) {
    DirectoryDataset ds;
    ds.root_ = root;
    const fs::path manifest_path = fs::path(root) / manifest_file;
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest '" + manifest_path.string() + "'");

    std::vector<std::string> problems;
    std::string line;
    if (!std::getline(in, line) ||
        line != "pair_id,ground_path,satellite_path,semi_positive_ids")
        throw ValidationError("manifest '" + manifest_path.string() +
                              "': bad header (expected "
                              "pair_id,ground_path,satellite_path,semi_positive_ids)");
    std::set<std::string> seen;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (cols.size() < 3 || cols.size() > 4) {
            problems.push_back("line " + std::to_string(lineno) + ": expected 3-4 columns");
            continue;
        }
        DirectoryDataset::Row row;
        row.pair_id = cols[0];
        row.ground_path = cols[1];
        row.satellite_path = cols[2];
        if (cols.size() == 4 && !cols[3].empty()) {
            std::stringstream ss(cols[3]);
            std::string id;
            while (std::getline(ss, id, ';'))
                if (!id.empty()) row.semi_positive_ids.push_back(id);
        }
        if (!seen.insert(row.pair_id).second)
            problems.push_back("duplicate pair id '" + row.pair_id + "'");
        for (const std::string& p : {row.ground_path, row.satellite_path})
            if (!fs::exists(fs::path(root) / p))
                problems.push_back("missing file '" + p + "' (pair '" + row.pair_id + "')");
        ds.records_.push_back(std::move(row));
    }
    if (!problems.empty()) {
        std::string msg = "manifest '" + manifest_path.string() + "' invalid:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    ds.has_semi_ = std::any_of(ds.records_.begin(), ds.records_.end(),
                               [](const auto& r) { return !r.semi_positive_ids.empty(); });
    ds.mode_ = ds.has_semi_ ? DatasetMode::offset : DatasetMode::center_aligned;
    return ds;
}

PairRecord DirectoryDataset::get(int index) const {
    if (index < 0 || index >= size())
        throw ConfigError("DirectoryDataset: index " + std::to_string(index) + " out of range");
    const Row& row = records_[static_cast<size_t>(index)];
    PairRecord rec;
    rec.pair_id = row.pair_id;
    rec.ground = read_image((fs::path(root_) / row.ground_path).string());
    rec.satellite = read_image((fs::path(root_) / row.satellite_path).string());
    rec.semi_positive_ids = row.semi_positive_ids;
    rec.offset_px = {0.0, 0.0};
    return rec;
}

void write_dataset(const PairDataset& data, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream manifest(fs::path(out_dir) / "manifest.csv");
    if (!manifest) throw IoError("cannot write manifest in '" + out_dir + "'");
    manifest << "pair_id,ground_path,satellite_path,semi_positive_ids\n";
    for (int i = 0; i < data.size(); ++i) {
        PairRecord rec = data.get(i);
        const std::string gname = "ground_" + rec.pair_id + ".ppm";
        const std::string sname = "sat_" + rec.pair_id + ".ppm";
        write_ppm((fs::path(out_dir) / gname).string(), rec.ground);
        write_ppm((fs::path(out_dir) / sname).string(), rec.satellite);
        std::string semis;
        for (size_t k = 0; k < rec.semi_positive_ids.size(); ++k) {
            if (k) semis += ";";
            semis += rec.semi_positive_ids[k];
        }
        manifest << rec.pair_id << "," << gname << "," << sname << "," << semis << "\n";
    }
}

} // namespace clnet
