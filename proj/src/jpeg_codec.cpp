#include "tamperlab/jpeg_codec.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tlab {

namespace {

// ITU-T T.81 Annex K reference tables.
constexpr int kLumaBase[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  //
    12, 12, 14, 19, 26,  58,  60,  55,  //
    14, 13, 16, 24, 40,  57,  69,  56,  //
    14, 17, 22, 29, 51,  87,  80,  62,  //
    18, 22, 37, 56, 68,  109, 103, 77,  //
    24, 35, 55, 64, 81,  104, 113, 92,  //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
};
constexpr int kChromaBase[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
};

// Orthonormal DCT-II matrix: C[u][x] = c(u)/2 * cos((2x+1)u*pi/16).
struct DctTables {
    double c[8][8];
    DctTables() {
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x)
                c[u][x] = (u == 0 ? std::sqrt(0.125) : 0.5) *
                          std::cos((2 * x + 1) * u * 3.14159265358979323846 / 16.0);
    }
};
const DctTables kDct;

void fdct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double acc = 0;
            for (int k = 0; k < 8; ++k) acc += kDct.c[u][k] * in[k * 8 + x];
            tmp[u * 8 + x] = acc;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int k = 0; k < 8; ++k) acc += tmp[u * 8 + k] * kDct.c[v][k];
            out[u * 8 + v] = acc;
        }
}

void idct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int x = 0; x < 8; ++x)
        for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int k = 0; k < 8; ++k) acc += kDct.c[k][x] * in[k * 8 + v];
            tmp[x * 8 + v] = acc;
        }
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double acc = 0;
            for (int k = 0; k < 8; ++k) acc += tmp[x * 8 + k] * kDct.c[k][y];
            out[x * 8 + y] = acc;
        }
}

double clamp255(double v) { return std::min(255.0, std::max(0.0, v)); }

void code_plane(std::vector<double>& plane, std::size_t h, std::size_t w, const int table[64]) {
    const std::size_t bh = (h + 7) / 8, bw = (w + 7) / 8;
    double block[64], coef[64], rec[64];
    for (std::size_t by = 0; by < bh; ++by)
        for (std::size_t bx = 0; bx < bw; ++bx) {
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    // edge-replicated padding for partial blocks
                    const std::size_t sy = std::min(h - 1, by * 8 + std::size_t(y));
                    const std::size_t sx = std::min(w - 1, bx * 8 + std::size_t(x));
                    block[y * 8 + x] = plane[sy * w + sx] - 128.0;
                }
            fdct8x8(block, coef);
            for (int i = 0; i < 64; ++i)
                coef[i] = std::round(coef[i] / double(table[i])) * double(table[i]);
            idct8x8(coef, rec);
            for (int y = 0; y < 8; ++y) {
                const std::size_t sy = by * 8 + std::size_t(y);
                if (sy >= h) break;
                for (int x = 0; x < 8; ++x) {
                    const std::size_t sx = bx * 8 + std::size_t(x);
                    if (sx >= w) break;
                    plane[sy * w + sx] = clamp255(rec[y * 8 + x] + 128.0);
                }
            }
        }
}

} // namespace

void jpeg_quant_tables(int quality, int luma[64], int chroma[64]) {
    if (quality < 1 || quality > 100)
        throw JpegError("jpeg: quality " + std::to_string(quality) + " outside [1,100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i) {
        luma[i] = std::clamp((kLumaBase[i] * scale + 50) / 100, 1, 255);
        chroma[i] = std::clamp((kChromaBase[i] * scale + 50) / 100, 1, 255);
    }
}

ImageRGB jpeg_roundtrip(const ImageRGB& img, int quality) {
    int luma[64], chroma[64];
    jpeg_quant_tables(quality, luma, chroma);
    const std::size_t h = img.h, w = img.w, n = h * w;

    // quantize to 8-bit and convert to JFIF YCbCr
    std::vector<double> Y(n), Cb(n), Cr(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = quantize8(img.data[i]);
        const double g = quantize8(img.data[n + i]);
        const double b = quantize8(img.data[2 * n + i]);
        Y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        Cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
        Cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    }
    code_plane(Y, h, w, luma);
    code_plane(Cb, h, w, chroma);
    code_plane(Cr, h, w, chroma);

    ImageRGB out(h, w);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = Y[i], cb = Cb[i] - 128.0, cr = Cr[i] - 128.0;
        const double r = clamp255(std::round(y + 1.402 * cr));
        const double g = clamp255(std::round(y - 0.344136 * cb - 0.714136 * cr));
        const double b = clamp255(std::round(y + 1.772 * cb));
        out.data[i] = float(r / 255.0);
        out.data[n + i] = float(g / 255.0);
        out.data[2 * n + i] = float(b / 255.0);
    }
    return out;
}

} // namespace tlab
