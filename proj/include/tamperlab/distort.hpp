#pragma once

// Robustness distortion battery: bilinear resize (mask follows via nearest
// neighbor), Gaussian blur with the kernel-size-derived sigma convention
// sigma = 0.3*((k-1)/2 - 1) + 0.8, additive seeded Gaussian noise in 8-bit
// units, and the in-repo JPEG pipeline.

#include <cstdint>
#include <string>
#include <vector>

#include "tamperlab/image.hpp"

namespace tlab {

struct DistortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DistortionKind { None, Resize, GaussBlur, GaussNoise, Jpeg };

struct DistortionSpec {
    DistortionKind kind = DistortionKind::None;
    double param = 0.0; // scale | kernel k | sigma (8-bit units) | quality q

    void validate() const;
    std::string label() const;              // report row label, Table-3 style
    static DistortionSpec parse(const std::string& text); // e.g. "resize:0.78"
    std::string spec_string() const;                      // inverse of parse
};

// The eight-setting battery plus the undistorted row.
std::vector<DistortionSpec> standard_battery();

struct DistortedPair {
    ImageRGB image;
    ImageF mask;
};

ImageRGB distort_image(const ImageRGB& img, const DistortionSpec& spec, std::uint64_t seed);

// Applies the distortion and keeps the ground truth geometrically aligned
// (resize transforms the mask nearest-neighbor; other kinds leave it alone).
DistortedPair distort(const ImageRGB& img, const ImageF& mask, const DistortionSpec& spec,
                      std::uint64_t seed);

ImageRGB resize_bilinear(const ImageRGB& img, std::size_t oh, std::size_t ow);
ImageF resize_nearest(const ImageF& img, std::size_t oh, std::size_t ow);
ImageF resize_bilinear(const ImageF& img, std::size_t oh, std::size_t ow);

} // namespace tlab
