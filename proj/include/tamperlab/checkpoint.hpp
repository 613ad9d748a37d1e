#pragma once

// Checkpoint container. Binary layout: magic "TFCK", version u32, array count
// u32, then per array: name length u32 + name bytes, dtype u8 (0=f32, 1=f64,
// 2=u64, 3=u8), rank u32, extents u64[rank], raw little-endian values.
// Metadata (config text, iteration counter, RNG state) rides along as
// reserved "__meta/..." arrays.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tamperlab/nn.hpp"

namespace tlab {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U64 = 2, U8 = 3 };

std::size_t dtype_size(DType t);

struct NamedArray {
    std::string name;
    DType dtype = DType::F32;
    Shape shape;
    std::vector<std::uint8_t> raw;

    std::size_t count() const { return numel(shape); }
};

struct CheckpointFile {
    std::vector<NamedArray> arrays;

    void save(const std::string& path) const;
    static CheckpointFile load(const std::string& path);

    const NamedArray* find(const std::string& name) const;
    const NamedArray& require(const std::string& name) const;

    void put_f32(const std::string& name, const Shape& shape, const float* data);
    void put_f64(const std::string& name, const Shape& shape, const double* data);
    void put_u64(const std::string& name, const std::vector<std::uint64_t>& vals);
    void put_text(const std::string& name, const std::string& text);

    std::vector<std::uint64_t> get_u64(const std::string& name) const;
    std::string get_text(const std::string& name) const;
};

// Parameter bridging. Saves as the tensor's native precision; loading checks
// name, dtype, and shape and copies raw values (bit-exact for matching T).
template <typename T>
void put_params(CheckpointFile& ck, const ParamMap<T>& params) {
    for (const auto& [name, t] : params) {
        if constexpr (sizeof(T) == 4)
            ck.put_f32(name, t.shape(), reinterpret_cast<const float*>(t.data()));
        else
            ck.put_f64(name, t.shape(), reinterpret_cast<const double*>(t.data()));
    }
}

template <typename T>
void load_params(const CheckpointFile& ck, ParamMap<T>& params) {
    const DType want = sizeof(T) == 4 ? DType::F32 : DType::F64;
    for (auto& [name, t] : params) {
        const NamedArray& a = ck.require(name);
        if (a.dtype != want)
            throw CheckpointError("checkpoint: dtype mismatch for " + name);
        if (a.shape != t.shape())
            throw CheckpointError("checkpoint: shape mismatch for " + name + ": file " +
                                  shape_str(a.shape) + " vs model " + shape_str(t.shape()));
        std::memcpy(t.data(), a.raw.data(), a.raw.size());
    }
}

} // namespace tlab
