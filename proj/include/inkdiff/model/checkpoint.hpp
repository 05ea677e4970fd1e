#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "inkdiff/diffusion.hpp"
#include "inkdiff/errors.hpp"
#include "inkdiff/model/config.hpp"
#include "inkdiff/model/params.hpp"
#include "inkdiff/tensor.hpp"

#include "json.hpp"

namespace inkdiff::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores raw little-endian arrays");

// A checkpoint is a directory with manifest.json plus params.bin holding the
// raw scalar data of every listed tensor, in manifest order. Optimizer
// moments and the training rng ride along so a resumed run continues
// bit-exactly.
template <typename T>
struct Checkpoint {
    int64_t step = 0;
    ModelConfig config;
    nlohmann::json schedule;  // construction parameters of the noise schedule
    uint64_t vocab_hash = 0;
    double data_scale = 1.0;
    std::string rng_state;  // empty when not saved
    ParamStore<T> params;
    std::optional<ParamStore<T>> adam_m, adam_v;
};

namespace detail {
template <typename T>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<T, float>) return "f32";
    else return "f64";
}

template <typename T>
void append_tensors(nlohmann::json& list, std::ofstream& bin, const ParamStore<T>& ps,
                    const std::string& prefix, int64_t& offset) {
    for (const auto& name : ps.names()) {
        const auto& t = ps.at(name);
        list.push_back({{"name", prefix + name}, {"shape", t.shape()}, {"offset", offset},
                        {"count", t.numel()}});
        bin.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(t.numel())));
        offset += t.numel();
    }
}
}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& dir, const Checkpoint<T>& ck) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw IoError("cannot write checkpoint arrays in " + dir);

    nlohmann::json tensors = nlohmann::json::array();
    int64_t offset = 0;
    detail::append_tensors(tensors, bin, ck.params, "", offset);
    if (ck.adam_m) detail::append_tensors(tensors, bin, *ck.adam_m, "adam.m/", offset);
    if (ck.adam_v) detail::append_tensors(tensors, bin, *ck.adam_v, "adam.v/", offset);
    bin.close();
    if (!bin) throw IoError("short write of checkpoint arrays in " + dir);

    nlohmann::json manifest{{"format_version", 1},
                            {"dtype", detail::dtype_name<T>()},
                            {"step", ck.step},
                            {"model", ck.config.to_json()},
                            {"schedule", ck.schedule},
                            {"vocab_hash", ck.vocab_hash},
                            {"data_scale", ck.data_scale},
                            {"tensors", std::move(tensors)}};
    if (!ck.rng_state.empty()) manifest["rng"] = ck.rng_state;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot write checkpoint manifest in " + dir);
    mf << manifest.dump(1) << "\n";
    if (!mf) throw IoError("short write of checkpoint manifest in " + dir);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot open checkpoint manifest in " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (manifest.value("format_version", 0) != 1)
        throw DataError("unsupported checkpoint format version");
    if (manifest.value("dtype", "") != detail::dtype_name<T>())
        throw DataError("checkpoint dtype is " + manifest.value("dtype", std::string("?")) +
                        ", expected " + detail::dtype_name<T>());

    Checkpoint<T> ck;
    ck.step = manifest.value("step", int64_t{0});
    ck.config = ModelConfig::from_json(manifest.at("model"));
    ck.schedule = manifest.value("schedule", nlohmann::json::object());
    ck.vocab_hash = manifest.value("vocab_hash", uint64_t{0});
    ck.data_scale = manifest.value("data_scale", 1.0);
    ck.rng_state = manifest.value("rng", std::string{});

    std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw IoError("cannot open checkpoint arrays in " + dir);
    for (const auto& e : manifest.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<int>>();
        const int64_t count = e.at("count").get<int64_t>();
        Tensor<T> t(shape);
        if (t.numel() != count) throw DataError("checkpoint tensor count mismatch: " + name);
        bin.seekg(static_cast<std::streamoff>(e.at("offset").get<int64_t>() *
                                              static_cast<int64_t>(sizeof(T))));
        bin.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(count)));
        if (bin.gcount() != static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(count)))
            throw DataError("checkpoint arrays truncated at " + name);
        if (name.starts_with("adam.m/")) {
            if (!ck.adam_m) ck.adam_m.emplace();
            ck.adam_m->add(name.substr(7), std::move(t));
        } else if (name.starts_with("adam.v/")) {
            if (!ck.adam_v) ck.adam_v.emplace();
            ck.adam_v->add(name.substr(7), std::move(t));
        } else {
            ck.params.add(name, std::move(t));
        }
    }
    return ck;
}

}  // namespace inkdiff::model
