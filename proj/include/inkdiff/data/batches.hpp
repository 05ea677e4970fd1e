#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/data/vocab.hpp"
#include "inkdiff/errors.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff::data {

struct BatchOptions {
    int batch_size = 16;
    int style_h = 64;
    int style_w = 512;
};

// Pad one group of records into a Batch. Masked-out slots stay zero.
inline Batch pack_batch(const std::vector<DatasetRecord>& records,
                        const std::vector<size_t>& indices, const Vocab& vocab,
                        const BatchOptions& opt) {
    Batch b;
    b.B = static_cast<int>(indices.size());
    b.H = opt.style_h;
    b.W = opt.style_w;
    std::vector<std::vector<int>> toks;
    toks.reserve(indices.size());
    for (size_t idx : indices) {
        const auto& r = records[idx];
        b.N_max = std::max(b.N_max, static_cast<int>(r.strokes.size()));
        toks.push_back(vocab.tokenize(r.text).ids);
        b.L_max = std::max(b.L_max, static_cast<int>(toks.back().size()));
    }
    b.y0.assign(static_cast<size_t>(b.B) * b.N_max * 2, 0.0);
    b.d0.assign(static_cast<size_t>(b.B) * b.N_max, 0);
    b.stroke_mask.assign(static_cast<size_t>(b.B) * b.N_max, 0);
    b.tokens.assign(static_cast<size_t>(b.B) * b.L_max, Vocab::pad_id);
    b.token_mask.assign(static_cast<size_t>(b.B) * b.L_max, 0);
    b.style_images.assign(static_cast<size_t>(b.B) * b.H * b.W, 0.0);

    for (int row = 0; row < b.B; ++row) {
        const auto& r = records[indices[static_cast<size_t>(row)]];
        const int n = static_cast<int>(r.strokes.size());
        for (int i = 0; i < n; ++i) {
            b.y0[(static_cast<size_t>(row) * b.N_max + i) * 2] = r.strokes.dx(static_cast<size_t>(i));
            b.y0[(static_cast<size_t>(row) * b.N_max + i) * 2 + 1] =
                r.strokes.dy(static_cast<size_t>(i));
            b.d0[static_cast<size_t>(row) * b.N_max + i] = r.strokes.pen_lift[static_cast<size_t>(i)];
            b.stroke_mask[static_cast<size_t>(row) * b.N_max + i] = 1;
        }
        const auto& ids = toks[static_cast<size_t>(row)];
        for (size_t i = 0; i < ids.size(); ++i) {
            b.tokens[static_cast<size_t>(row) * b.L_max + i] = ids[i];
            b.token_mask[static_cast<size_t>(row) * b.L_max + i] = 1;
        }
        if (!r.style_image.empty()) {
            const GrayImage fitted = (r.style_image.h == b.H && r.style_image.w == b.W)
                                         ? r.style_image
                                         : fit_image(r.style_image, b.H, b.W);
            std::copy(fitted.px.begin(), fitted.px.end(),
                      b.style_images.begin() + static_cast<size_t>(row) * b.H * b.W);
        }
        b.record_tags.push_back(r.writer_id + "#" + std::to_string(indices[static_cast<size_t>(row)]));
    }
    return b;
}

// Bucket records by stroke length to limit padding, then emit batches in an
// order shuffled by the caller's rng. Same seed, same stream.
inline std::vector<Batch> make_batches(const std::vector<DatasetRecord>& records,
                                       const Vocab& vocab, const BatchOptions& opt, Rng& rng) {
    if (opt.batch_size < 1) throw DataError("batch_size must be >= 1");
    if (records.empty()) return {};
    std::vector<size_t> order(records.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&records](size_t a, size_t b) {
        return records[a].strokes.size() < records[b].strokes.size();
    });
    std::vector<std::vector<size_t>> groups;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(opt.batch_size)) {
        const size_t end = std::min(order.size(), i + static_cast<size_t>(opt.batch_size));
        groups.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
    }
    // Fisher-Yates on group order
    for (size_t i = groups.size(); i > 1; --i)
        std::swap(groups[i - 1], groups[static_cast<size_t>(rng.below(static_cast<int64_t>(i)))]);
    std::vector<Batch> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(pack_batch(records, g, vocab, opt));
    return out;
}

}  // namespace inkdiff::data
