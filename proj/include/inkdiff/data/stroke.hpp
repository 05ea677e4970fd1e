#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inkdiff/errors.hpp"

namespace inkdiff::data {

// Offsets are interleaved (dx, dy) pairs so the diffusion core can treat a
// sequence as one flat span. pen_lift[i] == 1 means the pen leaves the paper
// after drawing offset i; rendering breaks the polyline there.
struct StrokeSequence {
    std::vector<double> offsets;   // size 2*N
    std::vector<uint8_t> pen_lift; // size N

    size_t size() const { return pen_lift.size(); }
    bool empty() const { return pen_lift.empty(); }

    double dx(size_t i) const { return offsets[2 * i]; }
    double dy(size_t i) const { return offsets[2 * i + 1]; }

    void push(double dx, double dy, uint8_t lift) {
        offsets.push_back(dx);
        offsets.push_back(dy);
        pen_lift.push_back(lift);
    }

    void validate() const {
        if (offsets.size() != 2 * pen_lift.size())
            throw DataError("stroke sequence: offsets/pen_lift length mismatch");
        for (double v : offsets)
            if (!std::isfinite(v)) throw DataError("stroke sequence: non-finite offset");
        for (uint8_t f : pen_lift)
            if (f != 0 && f != 1) throw DataError("stroke sequence: pen_lift not in {0,1}");
    }
};

struct GrayImage {
    int h = 0, w = 0;
    std::vector<double> px;  // row-major, ink intensity in [0,1], 1 = ink

    GrayImage() = default;
    GrayImage(int h_, int w_) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_, 0.0) {}

    double& at(int r, int c) { return px[static_cast<size_t>(r) * w + c]; }
    double at(int r, int c) const { return px[static_cast<size_t>(r) * w + c]; }
    bool empty() const { return px.empty(); }
};

struct DatasetRecord {
    StrokeSequence strokes;
    std::string text;
    std::string writer_id;
    std::string style_image_path;  // as referenced by the interchange file; may be empty
    GrayImage style_image;         // empty when no style image was given

    void validate(int max_style_h, int max_style_w) const {
        strokes.validate();
        if (text.empty()) throw DataError("record has empty text");
        if (!style_image.empty() &&
            (style_image.h > max_style_h || style_image.w > max_style_w))
            throw DataError("style image exceeds configured bounds");
    }
};

// Padded training batch. Flat row-major arrays; mask value 1 marks real data.
struct Batch {
    int B = 0, N_max = 0, L_max = 0, H = 0, W = 0;
    std::vector<double> y0;            // B * N_max * 2
    std::vector<uint8_t> d0;           // B * N_max
    std::vector<uint8_t> stroke_mask;  // B * N_max
    std::vector<int> tokens;           // B * L_max
    std::vector<uint8_t> token_mask;   // B * L_max
    std::vector<double> style_images;  // B * H * W
    std::vector<std::string> record_tags;  // provenance, one per row

    int stroke_len(int b) const {
        int n = 0;
        for (int i = 0; i < N_max; ++i) n += stroke_mask[static_cast<size_t>(b) * N_max + i];
        return n;
    }
    int token_len(int b) const {
        int n = 0;
        for (int i = 0; i < L_max; ++i) n += token_mask[static_cast<size_t>(b) * L_max + i];
        return n;
    }
};

}  // namespace inkdiff::data
