#pragma once

#include <cmath>
#include <cstdint>

#include "inkdiff/model/params.hpp"

namespace inkdiff::train {

// Inverse-square-root schedule with linear warmup:
// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
inline double lr_at(int64_t step, int d_model, int64_t warmup) {
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    return std::pow(static_cast<double>(d_model), -0.5) *
           std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

// Scale all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(model::ParamStore<T>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& name : grads.names()) {
        const auto& g = grads.at(name);
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double v = static_cast<double>(g[i]);
            sq += v * v;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& name : grads.names()) {
            auto& g = grads.at(name);
            for (int64_t i = 0; i < g.numel(); ++i)
                g[i] = static_cast<T>(static_cast<double>(g[i]) * s);
        }
    }
    return norm;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    int64_t t = 0;  // update count, drives bias correction
    model::ParamStore<T> m, v;

    static AdamState zeros_like(const model::ParamStore<T>& params) {
        AdamState st;
        for (const auto& name : params.names()) {
            st.m.add(name, Tensor<T>(params.at(name).shape()));
            st.v.add(name, Tensor<T>(params.at(name).shape()));
        }
        return st;
    }
};

template <typename T>
void adam_step(model::ParamStore<T>& params, const model::ParamStore<T>& grads,
               AdamState<T>& st, const AdamConfig& cfg, double lr) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (const auto& name : params.names()) {
        auto& p = params.at(name);
        const auto& g = grads.at(name);
        auto& m = st.m.at(name);
        auto& v = st.v.at(name);
        for (int64_t i = 0; i < p.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1, vhat = vi / bc2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) -
                                  lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

}  // namespace inkdiff::train
