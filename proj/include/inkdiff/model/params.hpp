#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "inkdiff/errors.hpp"
#include "inkdiff/model/config.hpp"
#include "inkdiff/rng.hpp"
#include "inkdiff/tensor.hpp"

namespace inkdiff::model {

// Named parameter tensors in a stable declaration order.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        if (map_.count(name)) throw DataError("duplicate parameter: " + name);
        order_.push_back(name);
        return map_.emplace(name, std::move(t)).first->second;
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw DataError("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw DataError("unknown parameter: " + name);
        return it->second;
    }

    const std::vector<std::string>& names() const { return order_; }
    size_t count() const { return order_.size(); }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& name : order_) n += map_.at(name).numel();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& name : order_) out.add(name, map_.at(name).template cast<U>());
        return out;
    }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor<T>> map_;
};

namespace detail {

template <typename T>
void add_fanin(ParamStore<T>& ps, Rng& rng, const std::string& name, std::vector<int> shape,
               int fan_in) {
    Tensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(rng.uniform(-bound, bound));
    ps.add(name, std::move(t));
}

template <typename T>
void add_zeros(ParamStore<T>& ps, const std::string& name, std::vector<int> shape) {
    ps.add(name, Tensor<T>(std::move(shape)));
}

// fully connected pair w [in x out], b [out]
template <typename T>
void add_linear(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int in, int out) {
    add_fanin(ps, rng, prefix + ".w", {in, out}, in);
    add_zeros(ps, prefix + ".b", {out});
}

// conv1d pair: w [(K*cin) x cout], b [cout]
template <typename T>
void add_conv1d(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int K, int cin, int cout) {
    add_fanin(ps, rng, prefix + ".w", {K * cin, cout}, K * cin);
    add_zeros(ps, prefix + ".b", {cout});
}

template <typename T>
void add_conv2d(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int KH, int KW, int cin,
                int cout) {
    add_fanin(ps, rng, prefix + ".w", {KH * KW * cin, cout}, KH * KW * cin);
    add_zeros(ps, prefix + ".b", {cout});
}

// Noise conditioner mapping the noise embedding to (scale, bias); initialized
// to the identity transform: zero weight, bias = [1...1, 0...0].
template <typename T>
void add_affine_cond(ParamStore<T>& ps, const std::string& prefix, int emb_dim, int channels) {
    add_zeros(ps, prefix + ".fc.w", {emb_dim, 2 * channels});
    Tensor<T> b({2 * channels});
    for (int c = 0; c < channels; ++c) b[c] = T(1);
    ps.add(prefix + ".fc.b", std::move(b));
}

template <typename T>
void add_mha(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int q_dim, int kv_dim,
             int d_model) {
    add_linear(ps, rng, prefix + ".wq", q_dim, d_model);
    add_linear(ps, rng, prefix + ".wk", kv_dim, d_model);
    add_linear(ps, rng, prefix + ".wv", kv_dim, d_model);
    add_linear(ps, rng, prefix + ".wo", d_model, d_model);
}

template <typename T>
void add_conv_block(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int K, int cin,
                    int cout, int emb_dim) {
    add_conv1d(ps, rng, prefix + ".conv1", K, cin, cout);
    add_affine_cond(ps, prefix + ".aff1", emb_dim, cout);
    add_conv1d(ps, rng, prefix + ".conv2", K, cout, cout);
    add_affine_cond(ps, prefix + ".aff2", emb_dim, cout);
    add_conv1d(ps, rng, prefix + ".conv3", K, cout, cout);
    add_affine_cond(ps, prefix + ".aff3", emb_dim, cout);
    add_conv1d(ps, rng, prefix + ".skip", 1, cin, cout);
}

template <typename T>
void add_attn_block(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int d_model,
                    int ff_mult, int emb_dim) {
    add_mha(ps, rng, prefix + ".cross", d_model, d_model, d_model);
    add_affine_cond(ps, prefix + ".aff1", emb_dim, d_model);
    add_mha(ps, rng, prefix + ".self", d_model, d_model, d_model);
    add_affine_cond(ps, prefix + ".aff2", emb_dim, d_model);
    add_linear(ps, rng, prefix + ".ffn.fc1", d_model, ff_mult * d_model);
    add_linear(ps, rng, prefix + ".ffn.fc2", ff_mult * d_model, d_model);
    add_affine_cond(ps, prefix + ".aff3", emb_dim, d_model);
}

}  // namespace detail

// Whether an attention block follows the conv block at the given resolution
// index (1..levels for the down path, counted after each downsample).
inline bool attn_at_down(const ModelConfig& cfg, int res_index) {
    return res_index >= cfg.levels + 1 - cfg.attn_levels;
}
inline bool attn_at_up(const ModelConfig& cfg, int res_index) {
    return res_index >= cfg.levels + 1 - cfg.attn_levels;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore<T> ps;
    const int d = cfg.d_model, K = cfg.kernel;

    detail::add_linear(ps, rng, "noise_emb.fc1", 1, d);
    detail::add_linear(ps, rng, "noise_emb.fc2", d, d);

    int cin = 1;
    for (size_t i = 0; i < cfg.style_channels.size(); ++i) {
        detail::add_conv2d(ps, rng, "style.s" + std::to_string(i), 3, 3, cin,
                           cfg.style_channels[i]);
        cin = cfg.style_channels[i];
    }

    detail::add_fanin(ps, rng, "encoder.char_emb", {cfg.vocab_size, d}, d);
    detail::add_mha(ps, rng, "encoder.attn", d, cfg.style_channels.back(), d);
    detail::add_linear(ps, rng, "encoder.ffn.fc1", d, cfg.ff_mult * d);
    detail::add_linear(ps, rng, "encoder.ffn.fc2", cfg.ff_mult * d, d);
    detail::add_affine_cond(ps, "encoder.aff", d, d);

    detail::add_conv1d(ps, rng, "stem", K, 2, d);
    for (int i = 0; i < cfg.levels; ++i) {
        detail::add_conv_block(ps, rng, "down" + std::to_string(i), K, d, d, d);
        if (attn_at_down(cfg, i + 1))
            detail::add_attn_block(ps, rng, "dattn" + std::to_string(i), d, cfg.ff_mult, d);
    }
    detail::add_conv_block(ps, rng, "mid", K, d, d, d);
    for (int i = cfg.levels - 1; i >= 0; --i) {
        detail::add_conv1d(ps, rng, "up" + std::to_string(i) + ".lateral", 1, d, d);
        detail::add_conv_block(ps, rng, "up" + std::to_string(i), K, d, d, d);
        if (attn_at_up(cfg, i))
            detail::add_attn_block(ps, rng, "uattn" + std::to_string(i), d, cfg.ff_mult, d);
    }
    detail::add_linear(ps, rng, "head.eps", d, 2);
    detail::add_linear(ps, rng, "head.pen", d, 1);
    return ps;
}

}  // namespace inkdiff::model
