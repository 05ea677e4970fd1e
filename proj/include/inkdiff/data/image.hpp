#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/errors.hpp"

namespace inkdiff::data {

// On disk we use portable graymaps with the usual photographic convention:
// 0 = black ink, maxval = white paper. In memory ink intensity is 1.

inline void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "P5\n" << img.w << " " << img.h << "\n255\n";
    std::string row(static_cast<size_t>(img.w), '\0');
    for (int r = 0; r < img.h; ++r) {
        for (int c = 0; c < img.w; ++c) {
            double v = std::clamp(img.at(r, c), 0.0, 1.0);
            row[static_cast<size_t>(c)] = static_cast<char>(std::lround((1.0 - v) * 255.0));
        }
        f.write(row.data(), img.w);
    }
    if (!f) throw IoError("short write: " + path);
}

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P2") throw DataError("not a PGM file: " + path);
    auto next_int = [&f, &path]() {
        // skip whitespace and # comments
        for (;;) {
            int ch = f.peek();
            if (ch == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(ch)) {
                f.get();
            } else {
                break;
            }
        }
        long v = -1;
        f >> v;
        if (!f || v < 0) throw DataError("bad PGM header: " + path);
        return v;
    };
    long w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw DataError("bad PGM dimensions: " + path);
    GrayImage img(static_cast<int>(h), static_cast<int>(w));
    if (magic == "P5") {
        f.get();  // single whitespace after maxval
        if (maxval > 255) throw DataError("16-bit PGM not supported: " + path);
        std::string buf(static_cast<size_t>(w * h), '\0');
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (f.gcount() != static_cast<std::streamsize>(buf.size()))
            throw DataError("truncated PGM: " + path);
        for (size_t i = 0; i < buf.size(); ++i)
            img.px[i] = 1.0 - static_cast<double>(static_cast<unsigned char>(buf[i])) / maxval;
    } else {
        for (auto& p : img.px) {
            long v = next_int();
            p = 1.0 - static_cast<double>(v) / maxval;
        }
    }
    return img;
}

// Center-pad (background) or center-crop to exactly h x w.
inline GrayImage fit_image(const GrayImage& in, int h, int w) {
    if (h <= 0 || w <= 0) throw DataError("fit_image: non-positive target dims");
    GrayImage out(h, w);
    const int dr = (h - in.h) / 2, dc = (w - in.w) / 2;
    for (int r = 0; r < h; ++r) {
        const int sr = r - dr;
        if (sr < 0 || sr >= in.h) continue;
        for (int c = 0; c < w; ++c) {
            const int sc = c - dc;
            if (sc < 0 || sc >= in.w) continue;
            out.at(r, c) = in.at(sr, sc);
        }
    }
    return out;
}

}  // namespace inkdiff::data
