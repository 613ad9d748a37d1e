#include "tamperlab/image.hpp"

#include <cmath>
#include <fstream>

namespace tlab {

unsigned char quantize8(float v) {
    if (v <= 0.0f) return 0;
    if (v >= 1.0f) return 255;
    return static_cast<unsigned char>(std::lround(v * 255.0f));
}

namespace {

void skip_ws_comments(std::istream& is) {
    for (;;) {
        int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            return;
        }
    }
}

void read_header(std::istream& is, const char* magic, std::size_t& w, std::size_t& h) {
    std::string m;
    is >> m;
    if (m != magic) throw ImageError(std::string("bad magic, expected ") + magic);
    skip_ws_comments(is);
    std::size_t maxval = 0;
    is >> w;
    skip_ws_comments(is);
    is >> h;
    skip_ws_comments(is);
    is >> maxval;
    if (!is || maxval != 255) throw ImageError("unsupported header (need maxval 255)");
    is.get(); // single whitespace before raster
}

} // namespace

void write_ppm(const std::string& path, const ImageRGB& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ImageError("cannot write " + path);
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(img.w * 3);
    for (std::size_t y = 0; y < img.h; ++y) {
        for (std::size_t x = 0; x < img.w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                row[x * 3 + c] = quantize8(img.at(c, y, x));
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw ImageError("short write on " + path);
}

ImageRGB read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ImageError("cannot read " + path);
    std::size_t w = 0, h = 0;
    read_header(is, "P6", w, h);
    ImageRGB img(h, w);
    std::vector<unsigned char> row(w * 3);
    for (std::size_t y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw ImageError("short read on " + path);
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = float(row[x * 3 + c]) / 255.0f;
    }
    return img;
}

void write_pgm(const std::string& path, const ImageF& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ImageError("cannot write " + path);
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(img.w);
    for (std::size_t y = 0; y < img.h; ++y) {
        for (std::size_t x = 0; x < img.w; ++x) row[x] = quantize8(img.at(y, x));
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw ImageError("short write on " + path);
}

ImageF read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ImageError("cannot read " + path);
    std::size_t w = 0, h = 0;
    read_header(is, "P5", w, h);
    ImageF img(h, w);
    std::vector<unsigned char> row(w);
    for (std::size_t y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw ImageError("short read on " + path);
        for (std::size_t x = 0; x < w; ++x) img.at(y, x) = float(row[x]) / 255.0f;
    }
    return img;
}

ImageF threshold_mask(const ImageF& gray, float thr) {
    ImageF out(gray.h, gray.w);
    for (std::size_t i = 0; i < gray.data.size(); ++i)
        out.data[i] = gray.data[i] >= thr ? 1.0f : 0.0f;
    return out;
}

} // namespace tlab
