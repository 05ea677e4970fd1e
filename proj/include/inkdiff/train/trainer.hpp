#pragma once

#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "inkdiff/data/batches.hpp"
#include "inkdiff/data/stroke.hpp"
#include "inkdiff/diffusion.hpp"
#include "inkdiff/model/checkpoint.hpp"
#include "inkdiff/model/network.hpp"
#include "inkdiff/model/params.hpp"
#include "inkdiff/nn/tape.hpp"
#include "inkdiff/rng.hpp"
#include "inkdiff/train/optimizer.hpp"

namespace inkdiff::train {

struct TrainConfig {
    int T = 60;
    double sched_base = 0.02, sched_lo = 1e-5, sched_hi = 0.4;
    int batch_size = 16;
    int64_t total_steps = 2000;
    double beta1 = 0.9, beta2 = 0.98, adam_eps = 1e-8;
    int64_t warmup_steps = 10000;
    int lr_d_model = 256;  // the schedule's d_model argument, not the network width
    double grad_clip_norm = 100.0;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0 = final only
    model::ModelConfig model;

    NoiseSchedule make_noise_schedule() const {
        return make_schedule(T, sched_base, sched_lo, sched_hi);
    }
};

struct StepMetrics {
    int64_t step = 0;
    double loss_stroke = 0, loss_pen = 0, loss_combined = 0;
    double level_mean = 0, grad_norm = 0, lr = 0;
};

inline std::string metrics_csv_header() { return "step,loss_stroke,loss_pen,level,grad_norm,lr"; }

inline std::string metrics_csv_row(const StepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<long long>(m.step), m.loss_stroke, m.loss_pen, m.level_mean,
                  m.grad_norm, m.lr);
    return buf;
}

template <typename T>
struct TrainState {
    model::ParamStore<T> params;
    AdamState<T> adam;
    Rng rng;
    int64_t step = 0;  // completed optimizer updates
};

template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg) {
    TrainState<T> st;
    st.params = model::init_params<T>(cfg.model, cfg.seed);
    st.adam = AdamState<T>::zeros_like(st.params);
    st.rng = Rng(cfg.seed);
    return st;
}

// One update following the training procedure: per record draw a step t,
// a continuous level inside that step's band, and fresh noise; descend on
// stroke loss + abar-weighted pen loss, averaged over the batch.
template <typename T>
StepMetrics train_step(const data::Batch& batch, TrainState<T>& st, const NoiseSchedule& sched,
                       const TrainConfig& cfg) {
    if (batch.B < 1) throw DataError("train_step: empty batch");
    nn::Tape<T> tape;
    model::Leaves<T> P(tape, st.params);

    StepMetrics m;
    m.step = st.step + 1;
    std::vector<std::pair<int, double>> terms;
    std::vector<int> stroke_ids, pen_ids;
    std::vector<double> levels, abars;
    std::vector<int> ts;

    for (int r = 0; r < batch.B; ++r) {
        const int n = batch.stroke_len(r);
        const int L = batch.token_len(r);
        if (n < 1 || L < 1) throw DataError("train_step: record with empty strokes or text");

        const int t = 1 + static_cast<int>(st.rng.below(sched.T));
        const double level = sample_noise_level(sched, t, st.rng);
        const double abar = level * level;
        ts.push_back(t);
        levels.push_back(level);
        abars.push_back(abar);

        std::vector<double> y0(static_cast<size_t>(2 * n));
        for (int i = 0; i < 2 * n; ++i)
            y0[static_cast<size_t>(i)] = batch.y0[static_cast<size_t>(r) * batch.N_max * 2 + i];
        std::vector<double> eps(y0.size());
        st.rng.fill_gaussian(eps);
        const std::vector<double> y_t = forward_diffuse(y0, abar, eps);

        Tensor<T> yt_t({n, 2});
        Tensor<T> eps_t({n, 2});
        for (int i = 0; i < 2 * n; ++i) {
            yt_t[i] = static_cast<T>(y_t[static_cast<size_t>(i)]);
            eps_t[i] = static_cast<T>(eps[static_cast<size_t>(i)]);
        }
        std::vector<int> tokens(batch.tokens.begin() + static_cast<long>(r) * batch.L_max,
                                batch.tokens.begin() + static_cast<long>(r) * batch.L_max + L);
        Tensor<T> img({batch.H, batch.W, 1});
        for (int64_t i = 0; i < img.numel(); ++i)
            img[i] = static_cast<T>(
                batch.style_images[static_cast<size_t>(r) * batch.H * batch.W +
                                   static_cast<size_t>(i)]);

        auto out = model::denoiser_forward(tape, P, cfg.model, tape.constant(std::move(yt_t)),
                                           tokens, nullptr, tape.constant(std::move(img)), level);

        std::vector<uint8_t> ones(static_cast<size_t>(n), 1);
        const int ls = nn::mse_masked(tape, out.eps, std::move(eps_t), ones);
        Tensor<T> d0_t({n, 1});
        for (int i = 0; i < n; ++i)
            d0_t[i] = static_cast<T>(batch.d0[static_cast<size_t>(r) * batch.N_max + i]);
        const int lp = nn::bce_masked(tape, out.pen_prob, std::move(d0_t), ones);

        stroke_ids.push_back(ls);
        pen_ids.push_back(lp);
        terms.push_back({ls, 1.0 / batch.B});
        terms.push_back({lp, abar / batch.B});
    }

    const int root = nn::weighted_sum(tape, terms);
    m.loss_combined = static_cast<double>(tape.val(root)[0]);
    for (int i = 0; i < batch.B; ++i) {
        m.loss_stroke += static_cast<double>(tape.val(stroke_ids[static_cast<size_t>(i)])[0]);
        m.loss_pen += static_cast<double>(tape.val(pen_ids[static_cast<size_t>(i)])[0]);
        m.level_mean += levels[static_cast<size_t>(i)];
    }
    m.loss_stroke /= batch.B;
    m.loss_pen /= batch.B;
    m.level_mean /= batch.B;

    if (!std::isfinite(m.loss_combined)) {
        std::ostringstream os;
        os << "non-finite loss at step " << m.step << ": stroke=" << m.loss_stroke
           << " pen=" << m.loss_pen << " levels=";
        for (double l : levels) os << l << " ";
        os << "ts=";
        for (int t : ts) os << t << " ";
        throw NumericError(os.str());
    }

    tape.backward(root);

    model::ParamStore<T> grads;
    for (const auto& name : st.params.names()) {
        auto it = P.ids().find(name);
        if (it != P.ids().end()) {
            grads.add(name, tape.grad(it->second));
        } else {
            grads.add(name, Tensor<T>(st.params.at(name).shape()));
        }
    }
    m.grad_norm = clip_global_norm(grads, cfg.grad_clip_norm);
    if (!std::isfinite(m.grad_norm))
        throw NumericError("non-finite gradient norm at step " + std::to_string(m.step));

    m.lr = lr_at(m.step, cfg.lr_d_model, cfg.warmup_steps);
    AdamConfig ac{cfg.beta1, cfg.beta2, cfg.adam_eps};
    adam_step(st.params, grads, st.adam, ac, m.lr);
    st.step = m.step;
    return m;
}

// Deterministic batch stream: bucketed batches built once from a seed
// derived from the config, then cycled. The training rng drives only the
// per-step stochasticity, so a restored rng resumes the exact stream.
template <typename T>
void train_loop(const std::vector<data::DatasetRecord>& records, const data::Vocab& vocab,
                TrainState<T>& st, const TrainConfig& cfg, const NoiseSchedule& sched,
                const std::function<void(const StepMetrics&)>& on_step) {
    data::BatchOptions bo;
    bo.batch_size = cfg.batch_size;
    bo.style_h = cfg.model.style_h;
    bo.style_w = cfg.model.style_w;
    Rng data_rng(cfg.seed + 0x9E3779B97F4A7C15ull);
    const std::vector<data::Batch> batches = data::make_batches(records, vocab, bo, data_rng);
    if (batches.empty()) throw DataError("train_loop: no batches");
    while (st.step < cfg.total_steps) {
        const auto& b = batches[static_cast<size_t>(st.step % static_cast<int64_t>(batches.size()))];
        const StepMetrics m = train_step(b, st, sched, cfg);
        if (on_step) on_step(m);
    }
}

template <typename T>
model::Checkpoint<T> make_checkpoint(const TrainState<T>& st, const TrainConfig& cfg,
                                     uint64_t vocab_hash, double data_scale) {
    model::Checkpoint<T> ck;
    ck.step = st.step;
    ck.config = cfg.model;
    ck.schedule = nlohmann::json{
        {"T", cfg.T}, {"base", cfg.sched_base}, {"lo", cfg.sched_lo}, {"hi", cfg.sched_hi}};
    ck.vocab_hash = vocab_hash;
    ck.data_scale = data_scale;
    ck.rng_state = st.rng.serialize();
    ck.params = st.params;
    ck.adam_m = st.adam.m;
    ck.adam_v = st.adam.v;
    return ck;
}

template <typename T>
TrainState<T> restore_train_state(const model::Checkpoint<T>& ck) {
    TrainState<T> st;
    st.params = ck.params;
    if (ck.adam_m && ck.adam_v) {
        st.adam.m = *ck.adam_m;
        st.adam.v = *ck.adam_v;
        st.adam.t = ck.step;
    } else {
        st.adam = AdamState<T>::zeros_like(st.params);
    }
    if (!ck.rng_state.empty()) st.rng = Rng::deserialize(ck.rng_state);
    st.step = ck.step;
    return st;
}

}  // namespace inkdiff::train
