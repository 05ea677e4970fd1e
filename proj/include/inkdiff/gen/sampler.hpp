#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/data/vocab.hpp"
#include "inkdiff/diffusion.hpp"
#include "inkdiff/model/network.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff::gen {

enum class SamplerKind { modified, original };

inline SamplerKind sampler_from_string(const std::string& s) {
    if (s == "modified") return SamplerKind::modified;
    if (s == "original") return SamplerKind::original;
    throw DataError("unknown sampler: " + s + " (expected modified|original)");
}

struct SampleRequest {
    std::string text;
    SamplerKind sampler = SamplerKind::modified;
    int num_steps = 0;  // 0 = full schedule; n < T runs the last n grid steps
    int length = 0;     // output points; 0 = points_per_char heuristic
    uint64_t seed = 0;
    double max_unknown_fraction = 0.2;
    double points_per_char = 20.0;  // heuristic for length == 0
};

struct GenerateResult {
    data::StrokeSequence strokes;       // denormalized offsets
    std::vector<double> pen_prob;       // final d evaluation, before thresholding
    int steps_run = 0;
};

template <typename T>
Tensor<T> extract_style_features(const model::ParamStore<T>& params,
                                 const model::ModelConfig& cfg, const data::GrayImage& img) {
    nn::Tape<T> tape;
    model::Leaves<T> P(tape, params);
    const int node = model::style_features(tape, P, cfg,
                                           tape.constant(model::style_tensor<T>(img, cfg)));
    return tape.val(node);
}

// lambda * f0 + (1 - lambda) * f1, elementwise on extracted feature maps
template <typename T>
Tensor<T> interpolate_styles(const Tensor<T>& f0, const Tensor<T>& f1, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("lambda must be in [0, 1]");
    if (!f0.same_shape(f1)) throw DataError("style feature maps have different shapes");
    Tensor<T> out(f0.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(lambda * static_cast<double>(f0[i]) +
                                (1.0 - lambda) * static_cast<double>(f1[i]));
    return out;
}

// Ancestral sampling from noise, conditioned on text and a style feature
// map. Runs the last num_steps grid steps t = n..1; fresh z is added only
// for t > 1; pen states come from the final d evaluation, thresholded at 0.5.
template <typename T>
GenerateResult generate_with_features(const SampleRequest& req,
                                      const model::ParamStore<T>& params,
                                      const model::ModelConfig& cfg, const NoiseSchedule& sched,
                                      const data::Vocab& vocab, double data_scale,
                                      const Tensor<T>& style_feat) {
    const auto tok = vocab.tokenize(req.text);
    const double unk_frac =
        static_cast<double>(tok.unknown_count) / static_cast<double>(tok.ids.size());
    if (unk_frac > req.max_unknown_fraction)
        throw DataError("text has too many unknown characters (" + std::to_string(unk_frac) +
                        " > " + std::to_string(req.max_unknown_fraction) + ")");

    const int n_steps = req.num_steps == 0 ? sched.T : req.num_steps;
    if (n_steps < 1 || n_steps > sched.T) throw DataError("num_steps must be in 1..T");
    const int N = req.length > 0
                      ? req.length
                      : static_cast<int>(std::ceil(req.points_per_char *
                                                   static_cast<double>(tok.ids.size())));
    if (N < 1) throw DataError("output length must be >= 1");

    Rng rng(req.seed);
    std::vector<double> y(static_cast<size_t>(2 * N));
    rng.fill_gaussian(y);

    GenerateResult res;
    res.steps_run = n_steps;
    std::vector<double> z(y.size(), 0.0);
    for (int t = n_steps; t >= 1; --t) {
        Tensor<T> yt({N, 2});
        for (int i = 0; i < 2 * N; ++i) yt[i] = static_cast<T>(y[static_cast<size_t>(i)]);

        nn::Tape<T> tape;
        model::Leaves<T> P(tape, params);
        const auto out = model::denoiser_forward_feat(tape, P, cfg, tape.constant(std::move(yt)),
                                                      tok.ids, nullptr,
                                                      tape.constant(style_feat), sched.l_at(t));
        std::vector<double> eps_hat(y.size());
        const auto& ev = tape.val(out.eps);
        for (int i = 0; i < 2 * N; ++i) eps_hat[static_cast<size_t>(i)] = static_cast<double>(ev[i]);

        if (t > 1) {
            rng.fill_gaussian(z);
        } else {
            std::fill(z.begin(), z.end(), 0.0);
        }
        y = req.sampler == SamplerKind::modified
                ? reverse_step_modified(y, eps_hat, z, sched, t)
                : reverse_step_original(y, eps_hat, z, sched, t);
        for (double v : y)
            if (!std::isfinite(v))
                throw NumericError("non-finite state during sampling at t=" + std::to_string(t));

        if (t == 1) {
            const auto& pp = tape.val(out.pen_prob);
            res.pen_prob.resize(static_cast<size_t>(N));
            for (int i = 0; i < N; ++i)
                res.pen_prob[static_cast<size_t>(i)] = static_cast<double>(pp[i]);
        }
    }

    res.strokes.offsets.resize(y.size());
    for (size_t i = 0; i < y.size(); ++i) res.strokes.offsets[i] = y[i] * data_scale;
    res.strokes.pen_lift.resize(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i)
        res.strokes.pen_lift[static_cast<size_t>(i)] =
            res.pen_prob[static_cast<size_t>(i)] > 0.5 ? 1 : 0;
    return res;
}

template <typename T>
GenerateResult generate(const SampleRequest& req, const model::ParamStore<T>& params,
                        const model::ModelConfig& cfg, const NoiseSchedule& sched,
                        const data::Vocab& vocab, double data_scale,
                        const data::GrayImage& style_image) {
    const Tensor<T> feat = extract_style_features(params, cfg, style_image);
    return generate_with_features(req, params, cfg, sched, vocab, data_scale, feat);
}

// --- ablation harness ----------------------------------------------------

struct StrokeStats {
    double offset_std = 0;     // pooled component std
    double mean_run_length = 0;  // points per pen-down run
    double pen_lift_rate = 0;
};

inline StrokeStats stroke_stats(const data::StrokeSequence& s) {
    StrokeStats st;
    if (s.empty()) return st;
    double sum = 0, sumsq = 0;
    for (double v : s.offsets) {
        sum += v;
        sumsq += v * v;
    }
    const double n = static_cast<double>(s.offsets.size());
    const double mean = sum / n;
    st.offset_std = std::sqrt(std::max(0.0, sumsq / n - mean * mean));
    int lifts = 0;
    for (uint8_t f : s.pen_lift) lifts += f;
    st.pen_lift_rate = static_cast<double>(lifts) / static_cast<double>(s.size());
    // runs are maximal pen-down stretches; a trailing lift does not open a new run
    int runs = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i)
        if (s.pen_lift[i]) ++runs;
    st.mean_run_length = static_cast<double>(s.size()) / runs;
    return st;
}

struct AblationEntry {
    std::string text;
    uint64_t seed = 0;
    data::StrokeSequence modified, original;
    StrokeStats modified_stats, original_stats;
};

// Generate each record's text under both samplers at the same per-record
// seed; everything but the y-update rule is shared code.
template <typename T>
std::vector<AblationEntry> ablation_run(const std::vector<data::DatasetRecord>& slice,
                                        const model::ParamStore<T>& params,
                                        const model::ModelConfig& cfg,
                                        const NoiseSchedule& sched, const data::Vocab& vocab,
                                        double data_scale, uint64_t base_seed) {
    std::vector<AblationEntry> out;
    for (size_t i = 0; i < slice.size(); ++i) {
        const auto& rec = slice[i];
        AblationEntry e;
        e.text = rec.text;
        e.seed = base_seed + i;
        SampleRequest req;
        req.text = rec.text;
        req.seed = e.seed;
        req.length = static_cast<int>(rec.strokes.size());
        const Tensor<T> feat = extract_style_features(params, cfg, rec.style_image);
        req.sampler = SamplerKind::modified;
        e.modified = generate_with_features(req, params, cfg, sched, vocab, data_scale, feat).strokes;
        req.sampler = SamplerKind::original;
        e.original = generate_with_features(req, params, cfg, sched, vocab, data_scale, feat).strokes;
        e.modified_stats = stroke_stats(e.modified);
        e.original_stats = stroke_stats(e.original);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace inkdiff::gen
