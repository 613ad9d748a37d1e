#pragma once

// In-repo JPEG distortion: baseline sequential pixel pipeline (RGB -> JFIF
// YCbCr, 8x8 DCT, quantization with the standard Annex K tables scaled by the
// usual quality rule, dequantization, inverse DCT, back to RGB). 4:4:4, no
// subsampling. The entropy-coding stage is omitted: it is lossless and has no
// effect on pixels, and keeping the transform in-repo gives bit-stable
// behavior across platforms.
//
// Quality scaling: scale = q < 50 ? 5000/q : 200 - 2q (percent);
// table[i] = clamp((base[i]*scale + 50)/100, 1, 255).

#include "tamperlab/image.hpp"

namespace tlab {

struct JpegError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// quality in [1,100]; returns the decoded image in [0,1] floats.
ImageRGB jpeg_roundtrip(const ImageRGB& img, int quality);

// Scaled quantization tables, exposed for tests. idx 0 = luminance, 1 = chroma.
void jpeg_quant_tables(int quality, int luma[64], int chroma[64]);

} // namespace tlab
