#include "tamperlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace tlab {

namespace {
constexpr char kMagic[4] = {'T', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void write_pod(std::ostream& os, U v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U read_pod(std::istream& is) {
    U v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw CheckpointError("checkpoint: truncated file");
    return v;
}
} // namespace

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U64: return 8;
        case DType::U8: return 1;
    }
    throw CheckpointError("checkpoint: bad dtype");
}

void CheckpointFile::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot write " + path);
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, std::uint32_t(arrays.size()));
    for (const auto& a : arrays) {
        write_pod(os, std::uint32_t(a.name.size()));
        os.write(a.name.data(), std::streamsize(a.name.size()));
        write_pod(os, std::uint8_t(a.dtype));
        write_pod(os, std::uint32_t(a.shape.size()));
        for (std::size_t e : a.shape) write_pod(os, std::uint64_t(e));
        if (a.raw.size() != a.count() * dtype_size(a.dtype))
            throw CheckpointError("checkpoint: array " + a.name + " has inconsistent size");
        os.write(reinterpret_cast<const char*>(a.raw.data()), std::streamsize(a.raw.size()));
    }
    if (!os) throw CheckpointError("checkpoint: short write on " + path);
}

CheckpointFile CheckpointFile::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot read " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = read_pod<std::uint32_t>(is);
    CheckpointFile ck;
    ck.arrays.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        const auto name_len = read_pod<std::uint32_t>(is);
        a.name.resize(name_len);
        is.read(a.name.data(), name_len);
        const auto dt = read_pod<std::uint8_t>(is);
        if (dt > 3) throw CheckpointError("checkpoint: bad dtype code");
        a.dtype = DType(dt);
        const auto rank = read_pod<std::uint32_t>(is);
        a.shape.resize(rank);
        for (auto& e : a.shape) e = std::size_t(read_pod<std::uint64_t>(is));
        a.raw.resize(a.count() * dtype_size(a.dtype));
        is.read(reinterpret_cast<char*>(a.raw.data()), std::streamsize(a.raw.size()));
        if (!is) throw CheckpointError("checkpoint: truncated array " + a.name);
        ck.arrays.push_back(std::move(a));
    }
    return ck;
}

const NamedArray* CheckpointFile::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

const NamedArray& CheckpointFile::require(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw CheckpointError("checkpoint: missing array '" + name + "'");
    return *a;
}

void CheckpointFile::put_f32(const std::string& name, const Shape& shape, const float* data) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::F32;
    a.shape = shape;
    a.raw.resize(a.count() * 4);
    std::memcpy(a.raw.data(), data, a.raw.size());
    arrays.push_back(std::move(a));
}

void CheckpointFile::put_f64(const std::string& name, const Shape& shape, const double* data) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::F64;
    a.shape = shape;
    a.raw.resize(a.count() * 8);
    std::memcpy(a.raw.data(), data, a.raw.size());
    arrays.push_back(std::move(a));
}

void CheckpointFile::put_u64(const std::string& name, const std::vector<std::uint64_t>& vals) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::U64;
    a.shape = {vals.size()};
    a.raw.resize(vals.size() * 8);
    std::memcpy(a.raw.data(), vals.data(), a.raw.size());
    arrays.push_back(std::move(a));
}

void CheckpointFile::put_text(const std::string& name, const std::string& text) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::U8;
    a.shape = {text.size()};
    a.raw.assign(text.begin(), text.end());
    arrays.push_back(std::move(a));
}

std::vector<std::uint64_t> CheckpointFile::get_u64(const std::string& name) const {
    const NamedArray& a = require(name);
    if (a.dtype != DType::U64) throw CheckpointError("checkpoint: " + name + " is not u64");
    std::vector<std::uint64_t> out(a.count());
    std::memcpy(out.data(), a.raw.data(), a.raw.size());
    return out;
}

std::string CheckpointFile::get_text(const std::string& name) const {
    const NamedArray& a = require(name);
    if (a.dtype != DType::U8) throw CheckpointError("checkpoint: " + name + " is not text");
    return std::string(a.raw.begin(), a.raw.end());
}

} // namespace tlab
