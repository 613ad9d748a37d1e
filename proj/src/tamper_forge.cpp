#include "tamperlab/tamper_forge.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tamperlab/rng.hpp"

namespace tlab {

namespace fs = std::filesystem;

std::string to_string(ManipulationType t) {
    switch (t) {
        case ManipulationType::Splice: return "SPLICE";
        case ManipulationType::CopyMove: return "COPY_MOVE";
        case ManipulationType::Remove: return "REMOVE";
        case ManipulationType::Authentic: return "AUTHENTIC";
    }
    return "?";
}

ManipulationType manip_from_string(const std::string& s) {
    if (s == "SPLICE") return ManipulationType::Splice;
    if (s == "COPY_MOVE") return ManipulationType::CopyMove;
    if (s == "REMOVE") return ManipulationType::Remove;
    if (s == "AUTHENTIC") return ManipulationType::Authentic;
    throw GenError("unknown manipulation type '" + s + "'");
}

void GenConfig::validate() const {
    if (height < 16 || width < 16) throw GenError("gen config: image too small");
    if (min_shapes < 1 || max_shapes < min_shapes) throw GenError("gen config: bad shape counts");
    if (min_mask_frac <= 0 || max_mask_frac > 0.5 || min_mask_frac >= max_mask_frac)
        throw GenError("gen config: bad mask fraction range");
}

std::string GenConfig::canonical() const {
    std::ostringstream os;
    os << "height=" << height << "\nwidth=" << width << "\nmin_shapes=" << min_shapes
       << "\nmax_shapes=" << max_shapes << "\nbg_noise_min=" << bg_noise_min
       << "\nbg_noise_max=" << bg_noise_max << "\nshape_noise_min=" << shape_noise_min
       << "\nshape_noise_max=" << shape_noise_max << "\ndonor_noise_min=" << donor_noise_min
       << "\ndonor_noise_max=" << donor_noise_max << "\nmin_mask_frac=" << min_mask_frac
       << "\nmax_mask_frac=" << max_mask_frac << "\nremove_fill_noise=" << remove_fill_noise
       << "\nsplice_margin=" << splice_margin << "\nfeather=" << (feather ? 1 : 0) << "\n";
    return os.str();
}

std::uint64_t GenConfig::hash() const {
    const std::string c = canonical();
    return fnv1a(c.data(), c.size());
}

bool SceneShape::contains(std::ptrdiff_t x, std::ptrdiff_t y) const {
    if (ellipse) {
        const double dx = double(x - cx) / double(rx);
        const double dy = double(y - cy) / double(ry);
        return dx * dx + dy * dy <= 1.0;
    }
    return x >= cx - rx && x <= cx + rx && y >= cy - ry && y <= cy + ry;
}

namespace {

float clip01(double v) { return float(std::min(1.0, std::max(0.0, v))); }

} // namespace

Scene render_scene(std::uint64_t seed, const GenConfig& cfg, bool donor_palette) {
    Rng rng(seed);
    const std::size_t h = cfg.height, w = cfg.width;
    Scene scene;
    scene.image = ImageRGB(h, w);
    scene.clean = ImageRGB(h, w);
    scene.owner.assign(h * w, -1);

    // background: a linear gradient between two colors along a random direction
    float c0[3], c1[3];
    for (int c = 0; c < 3; ++c) c0[c] = float(rng.uniform(0.25, 0.75));
    for (int c = 0; c < 3; ++c) c1[c] = float(rng.uniform(0.25, 0.75));
    const double angle = rng.uniform(0.0, 6.283185307179586);
    const double gx = std::cos(angle), gy = std::sin(angle);
    // donor scenes are noisy throughout, so any pasted region carries a noise
    // level separated from the host background by the configured margin
    scene.bg_sigma = donor_palette ? rng.uniform(cfg.donor_noise_min, cfg.donor_noise_max)
                                   : rng.uniform(cfg.bg_noise_min, cfg.bg_noise_max);

    const double diag = std::sqrt(double(h * h + w * w));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double t = 0.5 + (gx * (double(x) - double(w) / 2) +
                                    gy * (double(y) - double(h) / 2)) /
                                       diag;
            for (int c = 0; c < 3; ++c)
                scene.clean.at(std::size_t(c), y, x) = float(c0[c] + (c1[c] - c0[c]) * t);
        }

    // textured shapes; later shapes draw over earlier ones
    const std::size_t n =
        std::size_t(rng.range(std::int64_t(cfg.min_shapes), std::int64_t(cfg.max_shapes)));
    const double smin = donor_palette ? cfg.donor_noise_min : cfg.shape_noise_min;
    const double smax = donor_palette ? cfg.donor_noise_max : cfg.shape_noise_max;
    const float cmin = donor_palette ? 0.35f : 0.20f;
    const float cmax = donor_palette ? 0.65f : 0.80f;
    for (std::size_t i = 0; i < n; ++i) {
        SceneShape s;
        s.ellipse = rng.chance(0.5);
        s.rx = rng.range(5, std::int64_t(w) / 5);
        s.ry = rng.range(5, std::int64_t(h) / 5);
        s.cx = rng.range(s.rx, std::int64_t(w) - 1 - s.rx);
        s.cy = rng.range(s.ry, std::int64_t(h) - 1 - s.ry);
        for (int c = 0; c < 3; ++c) s.color[c] = float(rng.uniform(cmin, cmax));
        s.sigma = rng.uniform(smin, smax);
        for (std::ptrdiff_t y = s.cy - s.ry; y <= s.cy + s.ry; ++y)
            for (std::ptrdiff_t x = s.cx - s.rx; x <= s.cx + s.rx; ++x) {
                if (y < 0 || y >= std::ptrdiff_t(h) || x < 0 || x >= std::ptrdiff_t(w))
                    continue;
                if (!s.contains(x, y)) continue;
                scene.owner[std::size_t(y) * w + std::size_t(x)] = int(i);
                for (int c = 0; c < 3; ++c)
                    scene.clean.at(std::size_t(c), std::size_t(y), std::size_t(x)) = s.color[c];
            }
        scene.shapes.push_back(s);
    }

    // per-pixel noise: background sigma outside shapes, the owner's sigma inside
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const int own = scene.owner[y * w + x];
            const double sigma = own < 0 ? scene.bg_sigma : scene.shapes[std::size_t(own)].sigma;
            for (int c = 0; c < 3; ++c)
                scene.image.at(std::size_t(c), y, x) =
                    clip01(scene.clean.at(std::size_t(c), y, x) + rng.normal(0.0, sigma));
        }
    return scene;
}

std::vector<std::size_t> render_coc_text(bool fake, ManipulationType manip,
                                         const Vocabulary& v) {
    if (!fake) return {v.bos, v.real, v.none, v.noseg, v.eos};
    std::size_t type_id = v.none;
    switch (manip) {
        case ManipulationType::Splice: type_id = v.splice; break;
        case ManipulationType::CopyMove: type_id = v.copy_move; break;
        case ManipulationType::Remove: type_id = v.remove; break;
        case ManipulationType::Authentic: throw GenError("authentic sample marked fake");
    }
    return {v.bos, v.fake, type_id, v.seg, v.eos};
}

namespace {

constexpr int kPlacementAttempts = 100;

Rect draw_region_rect(Rng& rng, const GenConfig& cfg) {
    const std::size_t h = cfg.height, w = cfg.width;
    const double n = double(h * w);
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        const double frac = rng.uniform(cfg.min_mask_frac * 1.15, cfg.max_mask_frac * 0.85);
        const double aspect = rng.uniform(0.6, 1.7);
        auto rw = std::size_t(std::lround(std::sqrt(frac * n * aspect)));
        auto rh = std::size_t(std::lround(std::sqrt(frac * n / aspect)));
        rw = std::min(std::max<std::size_t>(rw, 4), w - 2);
        rh = std::min(std::max<std::size_t>(rh, 4), h - 2);
        const double a = double(rw * rh) / n;
        if (a < cfg.min_mask_frac || a > cfg.max_mask_frac) continue;
        const std::size_t x0 = std::size_t(rng.below(w - rw));
        const std::size_t y0 = std::size_t(rng.below(h - rh));
        return Rect{x0, y0, x0 + rw, y0 + rh};
    }
    throw GenError("tamper generation: no admissible region rectangle after " +
                   std::to_string(kPlacementAttempts) + " attempts (mask fraction bounds)");
}

void paste_rect(ImageRGB& dst, const ImageRGB& src, const Rect& from, const Rect& to,
                bool feather) {
    const std::size_t rw = to.x1 - to.x0, rh = to.y1 - to.y0;
    for (std::size_t y = 0; y < rh; ++y)
        for (std::size_t x = 0; x < rw; ++x) {
            const bool edge = feather && (y == 0 || x == 0 || y == rh - 1 || x == rw - 1);
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = src.at(c, from.y0 + y, from.x0 + x);
                float& d = dst.at(c, to.y0 + y, to.x0 + x);
                d = edge ? 0.5f * (d + v) : v;
            }
        }
}

void mark_rect(ImageF& mask, const Rect& r) {
    for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x) mask.at(y, x) = 1.0f;
}

} // namespace

ImageSample gen_authentic(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v) {
    cfg.validate();
    Scene scene = render_scene(derive_seed(seed, 1), cfg);
    ImageSample s;
    s.image = std::move(scene.image);
    s.mask = ImageF(cfg.height, cfg.width, 0.0f);
    s.fake = false;
    s.manip = ManipulationType::Authentic;
    s.text = render_coc_text(false, s.manip, v);
    s.seed = seed;
    return s;
}

ImageSample gen_splice(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v) {
    cfg.validate();
    Scene host = render_scene(derive_seed(seed, 1), cfg);
    Scene donor = render_scene(derive_seed(seed, 2), cfg, /*donor_palette=*/true);
    Rng place(derive_seed(seed, 3));

    // donor region centered on a donor shape so the paste carries texture
    const Rect region = draw_region_rect(place, cfg);
    const std::size_t rw = region.x1 - region.x0, rh = region.y1 - region.y0;
    const SceneShape& anchor = donor.shapes[place.below(donor.shapes.size())];
    auto clamp_origin = [](std::ptrdiff_t want, std::size_t extent, std::size_t span) {
        const auto hi = std::ptrdiff_t(span - extent);
        return std::size_t(std::min(std::max<std::ptrdiff_t>(want, 0), hi));
    };
    const std::size_t sx = clamp_origin(anchor.cx - std::ptrdiff_t(rw / 2), rw, cfg.width);
    const std::size_t sy = clamp_origin(anchor.cy - std::ptrdiff_t(rh / 2), rh, cfg.height);
    const Rect src{sx, sy, sx + rw, sy + rh};

    ImageSample s;
    s.image = host.image;
    s.mask = ImageF(cfg.height, cfg.width, 0.0f);
    paste_rect(s.image, donor.image, src, region, cfg.feather);
    mark_rect(s.mask, region);
    s.fake = true;
    s.manip = ManipulationType::Splice;
    s.text = render_coc_text(true, s.manip, v);
    s.seed = seed;
    s.src_rect = src;
    s.dst_rect = region;
    return s;
}

ImageSample gen_copy_move(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v) {
    cfg.validate();
    Scene scene = render_scene(derive_seed(seed, 1), cfg);
    Rng place(derive_seed(seed, 3));

    // duplicated regions stay small enough that a disjoint destination exists
    GenConfig cm = cfg;
    cm.max_mask_frac = std::min(cfg.max_mask_frac, 0.10);
    const Rect src0 = draw_region_rect(place, cm);
    const std::size_t rw = src0.x1 - src0.x0, rh = src0.y1 - src0.y0;
    // anchor the source on a shape so the copied patch is textured
    const SceneShape& anchor = scene.shapes[place.below(scene.shapes.size())];
    auto clamp_origin = [](std::ptrdiff_t want, std::size_t extent, std::size_t span) {
        const auto hi = std::ptrdiff_t(span - extent);
        return std::size_t(std::min(std::max<std::ptrdiff_t>(want, 0), hi));
    };
    const std::size_t sx = clamp_origin(anchor.cx - std::ptrdiff_t(rw / 2), rw, cfg.width);
    const std::size_t sy = clamp_origin(anchor.cy - std::ptrdiff_t(rh / 2), rh, cfg.height);
    const Rect src{sx, sy, sx + rw, sy + rh};

    Rect dst{};
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        const std::size_t dx = std::size_t(place.below(cfg.width - rw));
        const std::size_t dy = std::size_t(place.below(cfg.height - rh));
        const Rect cand{dx, dy, dx + rw, dy + rh};
        if (!cand.intersects(src)) {
            dst = cand;
            placed = true;
            break;
        }
    }
    if (!placed)
        throw GenError("copy-move: no disjoint destination after " +
                       std::to_string(kPlacementAttempts) + " attempts");

    ImageSample s;
    s.image = scene.image;
    s.mask = ImageF(cfg.height, cfg.width, 0.0f);
    paste_rect(s.image, scene.image, src, dst, /*feather=*/false);
    mark_rect(s.mask, dst);
    s.fake = true;
    s.manip = ManipulationType::CopyMove;
    s.text = render_coc_text(true, s.manip, v);
    s.seed = seed;
    s.src_rect = src;
    s.dst_rect = dst;
    return s;
}

ImageSample gen_remove(std::uint64_t seed, const GenConfig& cfg, const Vocabulary& v) {
    cfg.validate();
    Scene scene = render_scene(derive_seed(seed, 1), cfg);
    Rng place(derive_seed(seed, 3));
    const std::size_t h = cfg.height, w = cfg.width;
    const double n = double(h * w);

    // visible raster per shape; candidates must satisfy the mask-area bounds
    std::vector<std::size_t> visible(scene.shapes.size(), 0);
    for (int own : scene.owner)
        if (own >= 0) ++visible[std::size_t(own)];
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
        const double frac = double(visible[i]) / n;
        if (frac >= cfg.min_mask_frac && frac <= cfg.max_mask_frac) candidates.push_back(i);
    }
    if (candidates.empty())
        throw GenError("remove: no shape with visible area inside the mask fraction bounds");
    const std::size_t target = candidates[place.below(candidates.size())];

    // ring statistics: mean and sigma per channel over a 3-pixel dilation
    ImageF raster(h, w, 0.0f);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (scene.owner[y * w + x] == int(target)) raster.at(y, x) = 1.0f;
    double mean[3] = {0, 0, 0}, m2[3] = {0, 0, 0};
    std::size_t count = 0;
    const int ring = 3;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (raster.at(y, x) != 0.0f) continue;
            bool near = false;
            for (int dy = -ring; dy <= ring && !near; ++dy)
                for (int dx = -ring; dx <= ring && !near; ++dx) {
                    const std::ptrdiff_t yy = std::ptrdiff_t(y) + dy;
                    const std::ptrdiff_t xx = std::ptrdiff_t(x) + dx;
                    if (yy >= 0 && yy < std::ptrdiff_t(h) && xx >= 0 && xx < std::ptrdiff_t(w) &&
                        raster.at(std::size_t(yy), std::size_t(xx)) != 0.0f)
                        near = true;
                }
            if (!near) continue;
            ++count;
            for (std::size_t c = 0; c < 3; ++c) {
                const double val = scene.image.at(c, y, x);
                mean[c] += val;
                m2[c] += val * val;
            }
        }
    if (count < 8) throw GenError("remove: ring around shape too small for fill statistics");
    double sigma[3];
    for (std::size_t c = 0; c < 3; ++c) {
        mean[c] /= double(count);
        const double var = std::max(0.0, m2[c] / double(count) - mean[c] * mean[c]);
        sigma[c] = std::sqrt(var);
    }

    ImageSample s;
    s.image = scene.image;
    s.mask = ImageF(h, w, 0.0f);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (raster.at(y, x) == 0.0f) continue;
            s.mask.at(y, x) = 1.0f;
            for (std::size_t c = 0; c < 3; ++c)
                s.image.at(c, y, x) =
                    clip01(mean[c] + place.normal(0.0, cfg.remove_fill_noise * sigma[c]));
        }
    s.fake = true;
    s.manip = ManipulationType::Remove;
    s.text = render_coc_text(true, s.manip, v);
    s.seed = seed;
    return s;
}

ImageSample gen_sample(ManipulationType t, std::uint64_t seed, const GenConfig& cfg,
                       const Vocabulary& v) {
    switch (t) {
        case ManipulationType::Splice: return gen_splice(seed, cfg, v);
        case ManipulationType::CopyMove: return gen_copy_move(seed, cfg, v);
        case ManipulationType::Remove: return gen_remove(seed, cfg, v);
        case ManipulationType::Authentic: return gen_authentic(seed, cfg, v);
    }
    throw GenError("unknown manipulation type");
}

void DatasetMix::validate() const {
    for (double f : {splice, copy_move, remove, authentic})
        if (f < 0.0) throw GenError("dataset mix: fractions must be nonnegative");
    const double sum = splice + copy_move + remove + authentic;
    if (std::abs(sum - 1.0) > 1e-9)
        throw GenError("dataset mix: fractions sum to " + std::to_string(sum) +
                       ", expected 1");
}

DatasetManifest build_dataset(std::size_t n, const DatasetMix& mix, std::uint64_t seed,
                              const std::string& out_dir, const GenConfig& cfg,
                              const Vocabulary& v) {
    mix.validate();
    cfg.validate();
    fs::create_directories(out_dir);

    // largest-remainder apportionment, deterministic ties by type order
    const double fr[4] = {mix.splice, mix.copy_move, mix.remove, mix.authentic};
    const ManipulationType types[4] = {ManipulationType::Splice, ManipulationType::CopyMove,
                                       ManipulationType::Remove, ManipulationType::Authentic};
    std::size_t counts[4];
    double rem[4];
    std::size_t total = 0;
    for (int i = 0; i < 4; ++i) {
        const double want = fr[i] * double(n);
        counts[i] = std::size_t(want);
        rem[i] = want - double(counts[i]);
        total += counts[i];
    }
    while (total < n) {
        int best = 0;
        for (int i = 1; i < 4; ++i)
            if (rem[i] > rem[best]) best = i;
        ++counts[best];
        rem[best] = -1;
        ++total;
    }

    std::vector<ManipulationType> order;
    order.reserve(n);
    for (int i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < counts[i]; ++k) order.push_back(types[i]);
    Rng shuffle_rng(derive_seed(seed, 99));
    for (std::size_t i = n; i-- > 1;)
        std::swap(order[i], order[std::size_t(shuffle_rng.below(i + 1))]);

    Rng seed_stream(derive_seed(seed, 100));
    DatasetManifest manifest;
    manifest.config_hash = cfg.hash();
    manifest.dir = out_dir;

    std::ostringstream body;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t sample_seed = seed_stream.next();
        ImageSample s = gen_sample(order[i], sample_seed, cfg, v);
        char img_name[32], msk_name[32];
        std::snprintf(img_name, sizeof img_name, "img_%05zu.ppm", i);
        std::snprintf(msk_name, sizeof msk_name, "msk_%05zu.pgm", i);
        write_ppm(out_dir + "/" + img_name, s.image);
        write_pgm(out_dir + "/" + msk_name, s.mask);
        ManifestRecord rec;
        rec.image = img_name;
        rec.mask = msk_name;
        rec.fake = s.fake;
        rec.manip = s.manip;
        rec.text = v.decode_string(s.text);
        rec.seed = sample_seed;
        manifest.records.push_back(rec);
        body << "image=" << rec.image << "\tmask=" << rec.mask
             << "\tlabel=" << (rec.fake ? "FAKE" : "REAL") << "\tmanip=" << to_string(rec.manip)
             << "\ttext=" << rec.text << "\tseed=" << rec.seed << "\n";
    }

    std::ofstream os(out_dir + "/manifest.tsv", std::ios::binary);
    if (!os) throw GenError("cannot write manifest in " + out_dir);
    os << "#tamperlab-manifest v1\n";
    os << "#config_hash=" << std::hex << manifest.config_hash << std::dec << "\n";
    os << "#n=" << n << " seed=" << seed << "\n";
    os << body.str();
    return manifest;
}

DatasetManifest load_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path, std::ios::binary);
    if (!is) throw GenError("cannot read manifest " + manifest_path);
    DatasetManifest m;
    m.dir = fs::path(manifest_path).parent_path().string();
    if (m.dir.empty()) m.dir = ".";
    std::string line;
    bool saw_magic = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("#tamperlab-manifest", 0) == 0) saw_magic = true;
            const auto pos = line.find("#config_hash=");
            if (pos == 0) m.config_hash = std::stoull(line.substr(13), nullptr, 16);
            continue;
        }
        ManifestRecord rec;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, '\t')) {
            const auto eq = field.find('=');
            if (eq == std::string::npos)
                throw GenError("manifest: malformed field '" + field + "'");
            const std::string key = field.substr(0, eq);
            const std::string val = field.substr(eq + 1);
            if (key == "image") rec.image = val;
            else if (key == "mask") rec.mask = val;
            else if (key == "label") rec.fake = (val == "FAKE");
            else if (key == "manip") rec.manip = manip_from_string(val);
            else if (key == "text") rec.text = val;
            else if (key == "seed") rec.seed = std::stoull(val);
            else throw GenError("manifest: unknown key '" + key + "'");
        }
        if (rec.image.empty() || rec.mask.empty())
            throw GenError("manifest: record missing image or mask path");
        m.records.push_back(rec);
    }
    if (!saw_magic) throw GenError("manifest: missing header line in " + manifest_path);
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        if (!fs::exists(m.image_path(i)))
            throw GenError("manifest: missing image file " + m.image_path(i));
        if (!fs::exists(m.mask_path(i)))
            throw GenError("manifest: missing mask file " + m.mask_path(i));
    }
    return m;
}

LoadedSample load_sample(const DatasetManifest& m, std::size_t i, const Vocabulary& v) {
    LoadedSample s;
    s.image = read_ppm(m.image_path(i));
    s.mask = threshold_mask(read_pgm(m.mask_path(i)));
    s.fake = m.records[i].fake;
    s.manip = m.records[i].manip;
    s.text = v.encode_string(m.records[i].text);
    return s;
}

} // namespace tlab
