#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/jsonl.hpp"

namespace vsfa::tio {

namespace fs = std::filesystem;

// Binary tensor container: raw 32-bit little-endian floats, row-major, with a
// JSON sidecar manifest next to the .bin describing shapes and offsets.

inline fs::path manifest_path(const fs::path& bin_path) {
    fs::path p = bin_path;
    p.replace_extension(".json");
    return p;
}

inline void write_f32(const fs::path& bin_path, const std::vector<float>& data) {
    static_assert(sizeof(float) == 4);
    std::string bytes(reinterpret_cast<const char*>(data.data()), data.size() * 4);
    atomic_write_file(bin_path, bytes);
}

inline std::vector<float> read_f32(const fs::path& bin_path) {
    std::string bytes = read_file(bin_path);
    if (bytes.size() % 4 != 0)
        throw Error(ErrorKind::data_integrity,
                    bin_path.string() + ": size is not a multiple of 4 bytes");
    std::vector<float> data(bytes.size() / 4);
    std::memcpy(data.data(), bytes.data(), bytes.size());
    return data;
}

inline std::vector<double> widen(const std::vector<float>& v, size_t offset, size_t count) {
    if (offset + count > v.size())
        throw Error(ErrorKind::data_integrity, "tensor data shorter than its manifest claims");
    std::vector<double> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = static_cast<double>(v[offset + i]);
    return out;
}

inline std::vector<float> narrow(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

inline nlohmann::json base_manifest() {
    return {{"dtype", "float32"}, {"byte_order", "little"}, {"order", "row_major"}};
}

inline void check_dtype(const nlohmann::json& manifest, const fs::path& path) {
    if (manifest.value("dtype", "float32") != "float32")
        throw Error(ErrorKind::data_integrity, path.string() + ": unsupported dtype");
    if (manifest.value("byte_order", "little") != "little")
        throw Error(ErrorKind::data_integrity, path.string() + ": unsupported byte order");
}

inline nlohmann::json load_manifest(const fs::path& bin_path) {
    fs::path mp = manifest_path(bin_path);
    nlohmann::json manifest = nlohmann::json::parse(read_file(mp));
    check_dtype(manifest, mp);
    return manifest;
}

}  // namespace vsfa::tio
