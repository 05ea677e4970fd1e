#pragma once

#include <cmath>
#include <vector>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/model/network.hpp"
#include "inkdiff/tensor.hpp"

namespace inkdiff::gen {

// Scores for one [strokes x text] cross-attention weight matrix.
//   monotonicity: fraction of adjacent stroke positions whose argmax text
//     index does not decrease (1.0 for a clean left-to-right alignment).
//   deviation: mean over stroke rows of |argmax_i - floor(i*L/N)| / L,
//     zero when every row attends to its diagonal cell.
struct AlignmentReport {
    Tensor<double> weights;
    std::vector<int> argmax;
    double monotonicity = 0.0;
    double deviation = 0.0;
};

inline AlignmentReport alignment_from_weights(Tensor<double> weights) {
    if (weights.rank() != 2 || weights.rows() < 1 || weights.cols() < 1)
        throw DataError("alignment: weights must be a non-empty matrix");
    const int N = weights.rows(), L = weights.cols();
    AlignmentReport rep;
    rep.argmax.resize(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        int best = 0;
        for (int j = 1; j < L; ++j)
            if (weights(i, j) > weights(i, best)) best = j;
        rep.argmax[static_cast<size_t>(i)] = best;
    }
    if (N == 1) {
        rep.monotonicity = 1.0;
    } else {
        int nondec = 0;
        for (int i = 0; i + 1 < N; ++i)
            if (rep.argmax[static_cast<size_t>(i + 1)] >= rep.argmax[static_cast<size_t>(i)])
                ++nondec;
        rep.monotonicity = static_cast<double>(nondec) / (N - 1);
    }
    double dev = 0.0;
    for (int i = 0; i < N; ++i) {
        const int ideal = static_cast<int>((static_cast<int64_t>(i) * L) / N);
        dev += std::abs(rep.argmax[static_cast<size_t>(i)] - ideal);
    }
    rep.deviation = dev / (static_cast<double>(N) * L);
    rep.weights = std::move(weights);
    return rep;
}

// Run the denoiser once and score the chosen attentional block's
// text-to-stroke weights.
template <typename T>
AlignmentReport attention_alignment(const model::ParamStore<T>& params,
                                    const model::ModelConfig& cfg, const Tensor<T>& y_t,
                                    const std::vector<int>& tokens,
                                    const data::GrayImage& style, double level,
                                    size_t block_index = 0) {
    const auto eval = model::evaluate_denoiser(params, cfg, y_t, tokens,
                                               model::style_tensor<T>(style, cfg), level);
    if (eval.cross_attn.empty()) throw DataError("model has no attentional blocks");
    if (block_index >= eval.cross_attn.size())
        throw DataError("attention block index out of range");
    return alignment_from_weights(eval.cross_attn[block_index]);
}

}  // namespace inkdiff::gen
