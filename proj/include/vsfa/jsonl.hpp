#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsfa/errors.hpp"

namespace vsfa {

namespace fs = std::filesystem;

/// Write-temp-then-rename so readers never observe a partial file. Temp names
/// are unique per call, so concurrent writers of the same path cannot collide.
inline void atomic_write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    static std::atomic<uint64_t> counter{0};
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::data_integrity, "cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorKind::data_integrity, "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data_integrity, "cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <typename T>
void write_jsonl(const fs::path& path, const std::vector<T>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j = r;
        out += j.dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

template <typename T>
std::vector<T> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data_integrity, "cannot read " + path.string());
    std::vector<T> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(nlohmann::json::parse(line).get<T>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::data_integrity, path.string() + ":" +
                                                       std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace vsfa
