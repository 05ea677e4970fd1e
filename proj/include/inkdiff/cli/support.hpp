#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "inkdiff/errors.hpp"
#include "inkdiff/tensor.hpp"

#include "json.hpp"

namespace inkdiff::cli {

constexpr const char* kVersion = "0.1.0";

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Relative output paths are rebased onto INKDIFF_OUT_DIR when set.
inline std::string resolve_out_path(const std::string& path) {
    const char* base = std::getenv("INKDIFF_OUT_DIR");
    if (!base || !*base) return path;
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base) / p).string();
}

inline int env_thread_cap() {
    const char* v = std::getenv("INKDIFF_THREADS");
    if (!v || !*v) return 0;
    return std::max(1, std::atoi(v));
}

// Every run drops one of these next to its outputs. Re-running the stored
// argv reproduces the outputs at fixed precision.
struct RunManifest {
    std::string command;
    nlohmann::json resolved = nlohmann::json::object();
    std::vector<std::string> inputs, outputs;
    std::string started_at, finished_at;

    void write(const std::string& path) const {
        nlohmann::json j{{"command", command},       {"resolved", resolved},
                         {"inputs", inputs},         {"outputs", outputs},
                         {"code_version", kVersion}, {"started_at", started_at},
                         {"finished_at", finished_at}};
        std::ofstream f(path);
        if (!f) throw IoError("cannot write manifest: " + path);
        f << j.dump(1) << "\n";
    }
};

// Flat key=value configuration files; '#' starts a comment.
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r\n");
            if (a == std::string::npos) return std::string{};
            const auto b = s.find_last_not_of(" \t\r\n");
            return s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
        out[key] = val;
    }
    return out;
}

// --- feature map files (pluggable style extractor exchange) --------------

template <typename T>
void write_feature_map(const std::string& path, const Tensor<T>& t) {
    if (t.rank() != 2) throw DataError("feature map must be [positions x channels]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write: " + path);
    const char magic[4] = {'I', 'D', 'F', 'M'};
    f.write(magic, 4);
    const int32_t dims[2] = {t.rows(), t.cols()};
    const int32_t width = sizeof(T);
    f.write(reinterpret_cast<const char*>(dims), sizeof dims);
    f.write(reinterpret_cast<const char*>(&width), sizeof width);
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(t.numel())));
    if (!f) throw IoError("short write: " + path);
}

template <typename T>
Tensor<T> read_feature_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::string(magic, 4) != "IDFM")
        throw DataError("not a feature map file: " + path);
    int32_t dims[2], width;
    f.read(reinterpret_cast<char*>(dims), sizeof dims);
    f.read(reinterpret_cast<char*>(&width), sizeof width);
    if (!f || dims[0] < 1 || dims[1] < 1) throw DataError("bad feature map header: " + path);
    if (width != sizeof(T)) throw DataError("feature map scalar width mismatch: " + path);
    Tensor<T> t({dims[0], dims[1]});
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(t.numel())));
    if (f.gcount() != static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(t.numel())))
        throw DataError("truncated feature map: " + path);
    return t;
}

}  // namespace inkdiff::cli
