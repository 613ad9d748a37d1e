#pragma once

// Procedural tamper-data engine. Scenes are a smooth background gradient plus
// a few textured shapes; every textured region carries its own noise sigma,
// which is the low-level signature the trace path can learn. Splice pastes a
// donor-scene region whose noise level sits well above the host's, copy-move
// duplicates a region at a disjoint location, remove fills a shape with
// statistics sampled from a surrounding ring. (seed -> sample) is a pure
// function of the documented RNG streams.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tamperlab/image.hpp"
#include "tamperlab/vocab.hpp"

namespace tlab {

struct GenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ManipulationType { Splice, CopyMove, Remove, Authentic };

std::string to_string(ManipulationType t);
ManipulationType manip_from_string(const std::string& s);

struct GenConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t min_shapes = 2, max_shapes = 5;
    double bg_noise_min = 0.004, bg_noise_max = 0.012;
    double shape_noise_min = 0.02, shape_noise_max = 0.05;
    double donor_noise_min = 0.10, donor_noise_max = 0.16;
    double min_mask_frac = 0.02, max_mask_frac = 0.25;
    double remove_fill_noise = 0.3; // fraction of the ring's estimated sigma
    double splice_margin = 0.04;    // required donor-vs-host sigma separation
    bool feather = false;           // 1-pixel splice boundary feathering

    std::string canonical() const; // fixed-order key=value lines
    std::uint64_t hash() const;    // FNV-1a over canonical()
    void validate() const;
};

struct Rect {
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0; // half-open

    std::size_t area() const { return (x1 - x0) * (y1 - y0); }
    bool intersects(const Rect& o) const {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
};

struct SceneShape {
    bool ellipse = false;
    std::ptrdiff_t cx = 0, cy = 0, rx = 0, ry = 0;
    float color[3] = {0, 0, 0};
    double sigma = 0.0;

    bool contains(std::ptrdiff_t x, std::ptrdiff_t y) const;
};

// Full scene description, exposed for oracle tests (variance estimation,
// removal rasters). `owner` holds the topmost shape index per pixel, -1 for
// background.
struct Scene {
    ImageRGB image;
    ImageRGB clean;
    std::vector<int> owner;
    std::vector<SceneShape> shapes;
    double bg_sigma = 0.0;
};

Scene render_scene(std::uint64_t seed, const GenConfig& cfg, bool donor_palette = false);

struct ImageSample {
    ImageRGB image;
    ImageF mask; // binary, 1 = altered pixel
    bool fake = false;
    ManipulationType manip = ManipulationType::Authentic;
    std::vector<std::size_t> text;
    std::uint64_t seed = 0;
    // generator-side geometry, for oracle tests; not serialized
    Rect src_rect{}, dst_rect{};
};

ImageSample gen_authentic(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v);
ImageSample gen_splice(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v);
ImageSample gen_copy_move(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v);
ImageSample gen_remove(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v);
ImageSample gen_sample(ManipulationType t, std::uint64_t seed, const GenConfig& cfg,
                       const Vocabulary& v);

// 5-slot template: FAKE -> [<BOS>, <FAKE>, type, [SEG], <EOS>],
// REAL -> [<BOS>, <REAL>, <NONE>, [NOSEG], <EOS>].
std::vector<std::size_t> render_coc_text(bool fake, ManipulationType manip,
                                         const Vocabulary& v);

struct ManifestRecord {
    std::string image;
    std::string mask;
    bool fake = false;
    ManipulationType manip = ManipulationType::Authentic;
    std::string text; // space-joined tokens
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::uint64_t config_hash = 0;
    std::string dir; // directory the relative paths resolve against

    std::string image_path(std::size_t i) const { return dir + "/" + records[i].image; }
    std::string mask_path(std::size_t i) const { return dir + "/" + records[i].mask; }
};

struct DatasetMix {
    double splice = 0.25, copy_move = 0.25, remove = 0.25, authentic = 0.25;

    void validate() const;
};

DatasetManifest build_dataset(std::size_t n, const DatasetMix& mix, std::uint64_t seed,
                              const std::string& out_dir, const GenConfig& cfg,
                              const Vocabulary& v);
DatasetManifest load_manifest(const std::string& manifest_path);

// In-memory sample loaded back from disk.
struct LoadedSample {
    ImageRGB image;
    ImageF mask;
    bool fake = false;
    ManipulationType manip = ManipulationType::Authentic;
    std::vector<std::size_t> text;
};

LoadedSample load_sample(const DatasetManifest& m, std::size_t i, const Vocabulary& v);

} // namespace tlab
