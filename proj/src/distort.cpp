#include "tamperlab/distort.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tamperlab/jpeg_codec.hpp"
#include "tamperlab/rng.hpp"

namespace tlab {

void DistortionSpec::validate() const {
    switch (kind) {
        case DistortionKind::None:
            return;
        case DistortionKind::Resize:
            if (!(param > 0.0 && param <= 1.0))
                throw DistortError("resize scale must be in (0,1], got " +
                                   std::to_string(param));
            return;
        case DistortionKind::GaussBlur: {
            const auto k = std::llround(param);
            if (k < 3 || k % 2 == 0)
                throw DistortError("blur kernel must be odd and >= 3, got " +
                                   std::to_string(param));
            return;
        }
        case DistortionKind::GaussNoise:
            if (param < 0.0)
                throw DistortError("noise sigma must be nonnegative, got " +
                                   std::to_string(param));
            return;
        case DistortionKind::Jpeg: {
            const auto q = std::llround(param);
            if (q < 1 || q > 100)
                throw DistortError("jpeg quality must be in [1,100], got " +
                                   std::to_string(param));
            return;
        }
    }
    throw DistortError("unknown distortion kind");
}

std::string DistortionSpec::label() const {
    std::ostringstream os;
    switch (kind) {
        case DistortionKind::None: os << "w/o distortion"; break;
        case DistortionKind::Resize: os << "Resize (" << param << "x)"; break;
        case DistortionKind::GaussBlur: os << "GSBr (k=" << int(param) << ")"; break;
        case DistortionKind::GaussNoise: os << "GSN (sigma=" << int(param) << ")"; break;
        case DistortionKind::Jpeg: os << "JPEG (q=" << int(param) << ")"; break;
    }
    return os.str();
}

DistortionSpec DistortionSpec::parse(const std::string& text) {
    DistortionSpec s;
    if (text == "none") {
        s.kind = DistortionKind::None;
        return s;
    }
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw DistortError("bad distortion spec '" + text +
                           "' (expected kind:param, e.g. resize:0.78)");
    const std::string kind = text.substr(0, colon);
    const std::string val = text.substr(colon + 1);
    try {
        s.param = std::stod(val);
    } catch (const std::exception&) {
        throw DistortError("bad distortion parameter '" + val + "'");
    }
    if (kind == "resize") s.kind = DistortionKind::Resize;
    else if (kind == "blur") s.kind = DistortionKind::GaussBlur;
    else if (kind == "noise") s.kind = DistortionKind::GaussNoise;
    else if (kind == "jpeg") s.kind = DistortionKind::Jpeg;
    else throw DistortError("unknown distortion kind '" + kind + "'");
    s.validate();
    return s;
}

std::string DistortionSpec::spec_string() const {
    std::ostringstream os;
    switch (kind) {
        case DistortionKind::None: return "none";
        case DistortionKind::Resize: os << "resize:" << param; break;
        case DistortionKind::GaussBlur: os << "blur:" << int(param); break;
        case DistortionKind::GaussNoise: os << "noise:" << param; break;
        case DistortionKind::Jpeg: os << "jpeg:" << int(param); break;
    }
    return os.str();
}

std::vector<DistortionSpec> standard_battery() {
    return {
        {DistortionKind::None, 0.0},       {DistortionKind::Resize, 0.78},
        {DistortionKind::Resize, 0.25},    {DistortionKind::GaussBlur, 3},
        {DistortionKind::GaussBlur, 15},   {DistortionKind::GaussNoise, 3},
        {DistortionKind::GaussNoise, 15},  {DistortionKind::Jpeg, 100},
        {DistortionKind::Jpeg, 50},
    };
}

ImageRGB resize_bilinear(const ImageRGB& img, std::size_t oh, std::size_t ow) {
    ImageRGB out(oh, ow);
    const double sy = double(img.h) / double(oh);
    const double sx = double(img.w) / double(ow);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                // pixel-center convention
                const double fy = std::max(0.0, (double(y) + 0.5) * sy - 0.5);
                const double fx = std::max(0.0, (double(x) + 0.5) * sx - 0.5);
                const std::size_t y0 = std::min(img.h - 1, std::size_t(fy));
                const std::size_t x0 = std::min(img.w - 1, std::size_t(fx));
                const std::size_t y1 = std::min(img.h - 1, y0 + 1);
                const std::size_t x1 = std::min(img.w - 1, x0 + 1);
                const double wy = fy - double(y0), wx = fx - double(x0);
                const double v =
                    (1 - wy) * ((1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1)) +
                    wy * ((1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1));
                out.at(c, y, x) = float(v);
            }
    return out;
}

ImageF resize_bilinear(const ImageF& img, std::size_t oh, std::size_t ow) {
    ImageF out(oh, ow);
    const double sy = double(img.h) / double(oh);
    const double sx = double(img.w) / double(ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            const double fy = std::max(0.0, (double(y) + 0.5) * sy - 0.5);
            const double fx = std::max(0.0, (double(x) + 0.5) * sx - 0.5);
            const std::size_t y0 = std::min(img.h - 1, std::size_t(fy));
            const std::size_t x0 = std::min(img.w - 1, std::size_t(fx));
            const std::size_t y1 = std::min(img.h - 1, y0 + 1);
            const std::size_t x1 = std::min(img.w - 1, x0 + 1);
            const double wy = fy - double(y0), wx = fx - double(x0);
            const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                             wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
            out.at(y, x) = float(v);
        }
    return out;
}

ImageF resize_nearest(const ImageF& img, std::size_t oh, std::size_t ow) {
    ImageF out(oh, ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            const std::size_t sy =
                std::min(img.h - 1, std::size_t((double(y) + 0.5) * double(img.h) / double(oh)));
            const std::size_t sx =
                std::min(img.w - 1, std::size_t((double(x) + 0.5) * double(img.w) / double(ow)));
            out.at(y, x) = img.at(sy, sx);
        }
    return out;
}

namespace {

ImageRGB gauss_blur(const ImageRGB& img, int k) {
    const int r = (k - 1) / 2;
    const double sigma = 0.3 * (double(r) - 1.0) + 0.8;
    std::vector<double> kern(static_cast<std::size_t>(k));
    double sum = 0;
    for (int i = 0; i < k; ++i) {
        const double d = double(i - r);
        kern[std::size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
        sum += kern[std::size_t(i)];
    }
    for (auto& v : kern) v /= sum;

    const auto H = std::ptrdiff_t(img.h), W = std::ptrdiff_t(img.w);
    ImageRGB tmp(img.h, img.w), out(img.h, img.w);
    // horizontal then vertical, replicate border
    for (std::size_t c = 0; c < 3; ++c)
        for (std::ptrdiff_t y = 0; y < H; ++y)
            for (std::ptrdiff_t x = 0; x < W; ++x) {
                double acc = 0;
                for (int i = -r; i <= r; ++i) {
                    const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + i, 0, W - 1);
                    acc += kern[std::size_t(i + r)] *
                           img.at(c, std::size_t(y), std::size_t(xx));
                }
                tmp.at(c, std::size_t(y), std::size_t(x)) = float(acc);
            }
    for (std::size_t c = 0; c < 3; ++c)
        for (std::ptrdiff_t y = 0; y < H; ++y)
            for (std::ptrdiff_t x = 0; x < W; ++x) {
                double acc = 0;
                for (int i = -r; i <= r; ++i) {
                    const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + i, 0, H - 1);
                    acc += kern[std::size_t(i + r)] *
                           tmp.at(c, std::size_t(yy), std::size_t(x));
                }
                out.at(c, std::size_t(y), std::size_t(x)) = float(acc);
            }
    return out;
}

} // namespace

ImageRGB distort_image(const ImageRGB& img, const DistortionSpec& spec, std::uint64_t seed) {
    spec.validate();
    switch (spec.kind) {
        case DistortionKind::None:
            return img;
        case DistortionKind::Resize: {
            const auto oh = std::max<std::size_t>(1, std::size_t(std::lround(double(img.h) * spec.param)));
            const auto ow = std::max<std::size_t>(1, std::size_t(std::lround(double(img.w) * spec.param)));
            return resize_bilinear(img, oh, ow);
        }
        case DistortionKind::GaussBlur:
            return gauss_blur(img, int(std::llround(spec.param)));
        case DistortionKind::GaussNoise: {
            ImageRGB out = img;
            Rng rng(seed);
            const double s = spec.param / 255.0;
            for (auto& v : out.data)
                v = float(std::min(1.0, std::max(0.0, double(v) + rng.normal(0.0, s))));
            return out;
        }
        case DistortionKind::Jpeg:
            return jpeg_roundtrip(img, int(std::llround(spec.param)));
    }
    throw DistortError("unknown distortion kind");
}

DistortedPair distort(const ImageRGB& img, const ImageF& mask, const DistortionSpec& spec,
                      std::uint64_t seed) {
    DistortedPair out;
    out.image = distort_image(img, spec, seed);
    if (spec.kind == DistortionKind::Resize)
        out.mask = resize_nearest(mask, out.image.h, out.image.w);
    else
        out.mask = mask;
    return out;
}

} // namespace tlab
