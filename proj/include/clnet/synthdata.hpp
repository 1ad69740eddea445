#pragma once

// Deterministic synthetic cross-view pair generator. One procedural scene
// per index; the satellite view is an orthographic top-down raster and the
// ground view a 360-degree ray-cast panorama from the camera. Offset
// (VIGOR-style) mode renders four overlapping satellite crops per world:
// one positive per camera plus three semi-positives.

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "clnet/rng.hpp"
#include "clnet/tensor.hpp"

namespace clnet {

struct Landmark {
    double x = 0, y = 0;   // world coords relative to the world center
    double radius = 1;     // meters
    int color_class = 0;   // 0..5
};

struct RoadSegment {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double width = 2;
};

struct SceneSpec {
    uint64_t dataset_seed = 0;
    int64_t index = 0;
    double extent = 64;    // world is [-extent/2, extent/2]^2
    std::vector<Landmark> landmarks;
    std::vector<RoadSegment> roads;
    double cam_x = 0, cam_y = 0;
    double noise_sigma = 0;
};

struct RenderSizes {
    int ground_h = 32, ground_w = 128;
    int sat_h = 64, sat_w = 64;
};

struct PairRecord {
    std::string pair_id;
    Tensor3<float> ground;
    Tensor3<float> satellite;
    std::pair<double, double> offset_px{0, 0}; // camera minus satellite center, pixels (x, y)
    std::vector<std::string> semi_positive_ids;
};

SceneSpec generate_scene(uint64_t dataset_seed, int64_t index, double noise_sigma,
                         double extent = 64.0);

// Center-aligned render; the satellite window covers the full extent
// centered on the camera. Throws NumericError when no landmark reaches a
// single panorama pixel (degenerate scene: caller may regenerate).
PairRecord render_pair(const SceneSpec& scene, const RenderSizes& sizes);

// Satellite k*90 rotation plus optional horizontal flip, with the ground
// panorama circularly remapped so the pair stays geometrically consistent.
// Center-aligned records only.
PairRecord augment_pair(const PairRecord& rec, uint64_t seed);

// Deterministic transform picked from `seed`; exposed for tests.
struct AugmentChoice {
    int quarter_turns = 0; // counterclockwise
    bool flip = false;
};
AugmentChoice augment_choice(uint64_t seed);
PairRecord apply_augment(const PairRecord& rec, const AugmentChoice& choice);

// Exact geometry helpers shared with the consistency tests.
double bearing_from_north(double dx, double dy);                       // radians, clockwise, [0, 2pi)
double bearing_to_column(double bearing, int width);                   // fractional column
std::pair<double, double> world_to_satellite_px(const SceneSpec& scene, double x, double y,
                                                const RenderSizes& sizes);

enum class DatasetMode { center_aligned, offset };
enum class Split { train, eval };

struct DatasetSpec {
    DatasetMode mode = DatasetMode::center_aligned;
    uint64_t dataset_seed = 0;
    int size = 512;
    double noise_sigma = 0.02;
    double world_extent = 64.0;
    RenderSizes sizes;
    Split split = Split::train;
};

class PairDataset {
public:
    virtual ~PairDataset() = default;
    virtual int size() const = 0;
    virtual PairRecord get(int index) const = 0; // pure function of (dataset seed, index)
    virtual DatasetMode mode() const = 0;
    virtual bool has_semi_positives() const = 0;
};

// Lazy generator; records derive purely from (dataset_seed, split, index).
// Train and eval splits draw from disjoint scene-index ranges.
class SyntheticDataset : public PairDataset {
public:
    explicit SyntheticDataset(const DatasetSpec& spec);
    int size() const override { return spec_.size; }
    PairRecord get(int index) const override;
    DatasetMode mode() const override { return spec_.mode; }
    bool has_semi_positives() const override { return spec_.mode == DatasetMode::offset; }
    const DatasetSpec& spec() const { return spec_; }

private:
    DatasetSpec spec_;
    int64_t index_base_;
};

// Directory-backed dataset described by a CSV manifest with header
// pair_id,ground_path,satellite_path,semi_positive_ids (semi ids are
// ';'-separated, possibly empty). Paths are relative to the manifest.
class DirectoryDataset : public PairDataset {
public:
    int size() const override { return static_cast<int>(records_.size()); }
    PairRecord get(int index) const override;
    DatasetMode mode() const override { return mode_; }
    bool has_semi_positives() const override { return has_semi_; }

    struct Row {
        std::string pair_id;
        std::string ground_path;
        std::string satellite_path;
        std::vector<std::string> semi_positive_ids;
    };
    const std::vector<Row>& rows() const { return records_; }

    friend DirectoryDataset load_directory_dataset(const std::string& root,
                                                   const std::string& manifest_file);

private:
    std::vector<Row> records_;
    std::string root_;
    DatasetMode mode_ = DatasetMode::center_aligned;
    bool has_semi_ = false;
};

// Validates the whole manifest and reports every problem at once.
DirectoryDataset load_directory_dataset(const std::string& root, const std::string& manifest_file);

// Writes images plus manifest.csv for cmd_synth.
void write_dataset(const PairDataset& data, const std::string& out_dir);

} // namespace clnet
