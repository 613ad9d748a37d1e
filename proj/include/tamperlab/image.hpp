#pragma once

// Planar float images in [0,1] plus lossless 8-bit file I/O (binary PPM for
// color, PGM for masks). Quantization is round(clamp(v)*255); files written
// and re-read are bit-stable.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlab {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ImageRGB {
    std::size_t h = 0, w = 0;
    std::vector<float> data; // [3][h][w]

    ImageRGB() = default;
    ImageRGB(std::size_t h_, std::size_t w_) : h(h_), w(w_), data(3 * h_ * w_, 0.0f) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * h + y) * w + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * h + y) * w + x];
    }
    std::size_t pixels() const { return h * w; }
};

struct ImageF {
    std::size_t h = 0, w = 0;
    std::vector<float> data; // [h][w]

    ImageF() = default;
    ImageF(std::size_t h_, std::size_t w_, float fill = 0.0f)
        : h(h_), w(w_), data(h_ * w_, fill) {}

    float& at(std::size_t y, std::size_t x) { return data[y * w + x]; }
    float at(std::size_t y, std::size_t x) const { return data[y * w + x]; }
    std::size_t pixels() const { return h * w; }
};

unsigned char quantize8(float v);

void write_ppm(const std::string& path, const ImageRGB& img);
ImageRGB read_ppm(const std::string& path);
void write_pgm(const std::string& path, const ImageF& img);
ImageF read_pgm(const std::string& path);

// Binary mask helpers: masks are stored as 0/255 PGM.
ImageF threshold_mask(const ImageF& gray, float thr = 0.5f);

} // namespace tlab
