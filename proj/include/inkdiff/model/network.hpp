#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/model/config.hpp"
#include "inkdiff/model/params.hpp"
#include "inkdiff/nn/tape.hpp"

namespace inkdiff::model {

// Standard sinusoidal encoding evaluated at position i * multiplier.
// Scaling the text positions up to stroke resolution puts the expected
// text-stroke alignment on the diagonal of the encoding space.
template <typename T>
Tensor<T> positional_encode(int length, int d_model, double multiplier) {
    if (multiplier <= 0.0) throw DataError("positional_encode: multiplier must be > 0");
    if (d_model % 2 != 0) throw DataError("positional_encode: d_model must be even");
    Tensor<T> pe({length, d_model});
    for (int i = 0; i < length; ++i) {
        const double pos = static_cast<double>(i) * multiplier;
        for (int k = 0; k < d_model / 2; ++k) {
            const double freq = std::pow(10000.0, -2.0 * k / d_model);
            pe(i, 2 * k) = static_cast<T>(std::sin(pos * freq));
            pe(i, 2 * k + 1) = static_cast<T>(std::cos(pos * freq));
        }
    }
    return pe;
}

// Places parameters on a tape lazily, one leaf per name, so a single tape can
// evaluate several records against the same leaves and accumulate gradients.
template <typename T>
class Leaves {
public:
    Leaves(nn::Tape<T>& tape, const ParamStore<T>& store) : tape_(&tape), store_(&store) {}

    int operator()(const std::string& name) {
        auto it = ids_.find(name);
        if (it != ids_.end()) return it->second;
        const int id = tape_->leaf(store_->at(name));
        ids_.emplace(name, id);
        return id;
    }

    const std::map<std::string, int>& ids() const { return ids_; }

private:
    nn::Tape<T>* tape_;
    const ParamStore<T>* store_;
    std::map<std::string, int> ids_;
};

// x -> x * scale + bias per channel, (scale, bias) read off the noise
// embedding through one fully connected layer.
template <typename T>
int affine_condition(nn::Tape<T>& tp, Leaves<T>& P, const std::string& prefix, int x, int emb) {
    const int C = tp.val(x).cols();
    const int sb = nn::linear(tp, emb, P(prefix + ".fc.w"), P(prefix + ".fc.b"));
    if (tp.val(sb).cols() != 2 * C) throw DataError("affine_condition: channel mismatch");
    const int s = nn::slice_cols(tp, sb, 0, C);
    const int b = nn::slice_cols(tp, sb, C, 2 * C);
    return nn::rowwise_affine(tp, x, s, b);
}

// Three conditioned convolutions plus a 1x1 convolutional skip path.
template <typename T>
int conv_block(nn::Tape<T>& tp, Leaves<T>& P, const std::string& prefix, int x, int emb, int K,
               int stride) {
    int h = nn::conv1d(tp, x, P(prefix + ".conv1.w"), P(prefix + ".conv1.b"), K, stride);
    h = affine_condition(tp, P, prefix + ".aff1", h, emb);
    h = nn::silu(tp, h);
    h = nn::conv1d(tp, h, P(prefix + ".conv2.w"), P(prefix + ".conv2.b"), K, 1);
    h = affine_condition(tp, P, prefix + ".aff2", h, emb);
    h = nn::silu(tp, h);
    h = nn::conv1d(tp, h, P(prefix + ".conv3.w"), P(prefix + ".conv3.b"), K, 1);
    h = affine_condition(tp, P, prefix + ".aff3", h, emb);
    h = nn::silu(tp, h);
    const int skip = nn::conv1d(tp, x, P(prefix + ".skip.w"), P(prefix + ".skip.b"), 1, stride);
    return nn::add(tp, h, skip);
}

struct MhaOut {
    int out = -1;
    std::vector<int> prob_ids;  // one [N x M] softmax node per head
};

template <typename T>
MhaOut multi_head_attention(nn::Tape<T>& tp, Leaves<T>& P, const std::string& prefix, int q_in,
                            int k_in, int v_in, int n_heads,
                            const std::vector<uint8_t>* key_mask) {
    const int q = nn::linear(tp, q_in, P(prefix + ".wq.w"), P(prefix + ".wq.b"));
    const int k = nn::linear(tp, k_in, P(prefix + ".wk.w"), P(prefix + ".wk.b"));
    const int v = nn::linear(tp, v_in, P(prefix + ".wv.w"), P(prefix + ".wv.b"));
    const int d_model = tp.val(q).cols();
    const int dh = d_model / n_heads;
    MhaOut res;
    std::vector<int> heads;
    for (int h = 0; h < n_heads; ++h) {
        const int qh = nn::slice_cols(tp, q, h * dh, (h + 1) * dh);
        const int kh = nn::slice_cols(tp, k, h * dh, (h + 1) * dh);
        const int vh = nn::slice_cols(tp, v, h * dh, (h + 1) * dh);
        const int logits = nn::scale(tp, nn::matmul_nt(tp, qh, kh), 1.0 / std::sqrt(double(dh)));
        const int probs = nn::softmax_rows_masked(tp, logits, key_mask);
        res.prob_ids.push_back(probs);
        heads.push_back(nn::matmul_nn(tp, probs, vh));
    }
    const int cat = nn::concat_cols(tp, heads);
    res.out = nn::linear(tp, cat, P(prefix + ".wo.w"), P(prefix + ".wo.b"));
    return res;
}

struct AttnBlockOut {
    int out = -1;
    Tensor<double> cross_weights;  // head-mean [strokes x text], value copy
};

// Cross attention to the encoder output, self attention, feedforward.
// Layer norm then noise conditioning after each stage; positional encodings
// go onto queries and keys only, text positions scaled by pos_mult.
template <typename T>
AttnBlockOut attn_block(nn::Tape<T>& tp, Leaves<T>& P, const std::string& prefix, int x,
                        int enc, int emb, const std::vector<uint8_t>* text_mask,
                        double pos_mult, int n_heads) {
    const int N = tp.val(x).rows(), C = tp.val(x).cols(), L = tp.val(enc).rows();
    const int q_in = nn::add_const(tp, x, positional_encode<T>(N, C, 1.0));
    const int k_in = nn::add_const(tp, enc, positional_encode<T>(L, C, pos_mult));
    const MhaOut cross = multi_head_attention(tp, P, prefix + ".cross", q_in, k_in, enc, n_heads,
                                              text_mask);
    int h = nn::layer_norm_rows(tp, nn::add(tp, x, cross.out));
    h = affine_condition(tp, P, prefix + ".aff1", h, emb);

    const int q2 = nn::add_const(tp, h, positional_encode<T>(N, C, 1.0));
    const MhaOut self = multi_head_attention(tp, P, prefix + ".self", q2, q2, h, n_heads, nullptr);
    h = nn::layer_norm_rows(tp, nn::add(tp, h, self.out));
    h = affine_condition(tp, P, prefix + ".aff2", h, emb);

    int f = nn::linear(tp, h, P(prefix + ".ffn.fc1.w"), P(prefix + ".ffn.fc1.b"));
    f = nn::silu(tp, f);
    f = nn::linear(tp, f, P(prefix + ".ffn.fc2.w"), P(prefix + ".ffn.fc2.b"));
    h = nn::layer_norm_rows(tp, nn::add(tp, h, f));
    h = affine_condition(tp, P, prefix + ".aff3", h, emb);

    AttnBlockOut out;
    out.out = h;
    // head-mean cross weights for diagnostics
    Tensor<double> W({N, L});
    for (int pid : cross.prob_ids) {
        const auto& pv = tp.val(pid);
        for (int r = 0; r < N; ++r)
            for (int c = 0; c < L; ++c) W(r, c) += static_cast<double>(pv(r, c));
    }
    for (int64_t i = 0; i < W.numel(); ++i) W[i] /= static_cast<double>(cross.prob_ids.size());
    out.cross_weights = std::move(W);
    return out;
}

// Strided convolutional trunk over the style image; pluggable in the sense
// that the denoiser consumes any [positions x channels] feature map.
template <typename T>
int style_features(nn::Tape<T>& tp, Leaves<T>& P, const ModelConfig& cfg, int img) {
    int x = img;  // [H x W x 1]
    for (size_t i = 0; i < cfg.style_channels.size(); ++i) {
        const std::string prefix = "style.s" + std::to_string(i);
        x = nn::conv2d(tp, x, P(prefix + ".w"), P(prefix + ".b"), 3, 3, 2);
        x = nn::silu(tp, x);
    }
    const auto& shape = tp.val(x).shape();
    return nn::reshape(tp, x, {shape[0] * shape[1], shape[2]});
}

// Character embeddings attend over the style feature map; the attended
// result is added to the text representation and refined by a feedforward
// stage, then conditioned on the noise level.
template <typename T>
int encode_text_style(nn::Tape<T>& tp, Leaves<T>& P, const ModelConfig& cfg,
                      const std::vector<int>& tokens, const std::vector<uint8_t>* token_mask,
                      int style_feat, int emb) {
    if (tokens.empty()) throw DataError("encoder: empty token sequence");
    const int d = cfg.d_model;
    const int E = nn::embedding(tp, P("encoder.char_emb"), tokens);
    const int L = static_cast<int>(tokens.size());
    const int Pn = tp.val(style_feat).rows(), Cs = tp.val(style_feat).cols();
    const int q_in = nn::add_const(tp, E, positional_encode<T>(L, d, 1.0));
    const int k_in = nn::add_const(tp, style_feat, positional_encode<T>(Pn, Cs, 1.0));
    const MhaOut att = multi_head_attention(tp, P, "encoder.attn", q_in, k_in, style_feat,
                                            cfg.n_heads, nullptr);
    int h = nn::add(tp, E, att.out);
    int f = nn::linear(tp, h, P("encoder.ffn.fc1.w"), P("encoder.ffn.fc1.b"));
    f = nn::silu(tp, f);
    f = nn::linear(tp, f, P("encoder.ffn.fc2.w"), P("encoder.ffn.fc2.b"));
    h = nn::layer_norm_rows(tp, nn::add(tp, h, f));
    h = affine_condition(tp, P, "encoder.aff", h, emb);
    if (token_mask) h = nn::zero_rows(tp, h, *token_mask);
    return h;
}

template <typename T>
int noise_embedding(nn::Tape<T>& tp, Leaves<T>& P, double level) {
    if (!(level > 0.0) || !(level <= 1.0)) throw DataError("noise level must be in (0, 1]");
    Tensor<T> lvl({1, 1});
    lvl[0] = static_cast<T>(level);
    int e = nn::linear(tp, tp.constant(std::move(lvl)), P("noise_emb.fc1.w"),
                       P("noise_emb.fc1.b"));
    e = nn::silu(tp, e);
    e = nn::linear(tp, e, P("noise_emb.fc2.w"), P("noise_emb.fc2.b"));
    return e;
}

struct DenoiserResult {
    int eps = -1;       // [N x 2]
    int pen_prob = -1;  // [N x 1], strictly inside (0, 1)
    std::vector<std::string> attn_names;
    std::vector<Tensor<double>> cross_attn;  // per attention block, [strokes x text]
};

// Full assembly: stem conv, stride-2 down path with attention at the lowest
// resolutions, mirrored upsampling with 1x1 lateral skips, two output heads
// off one trunk. Takes the style input as a [positions x channels] feature
// map so an external extractor can be substituted.
template <typename T>
DenoiserResult denoiser_forward_feat(nn::Tape<T>& tp, Leaves<T>& P, const ModelConfig& cfg,
                                     int y_t, const std::vector<int>& tokens,
                                     const std::vector<uint8_t>* token_mask, int style_feat,
                                     double level) {
    cfg.validate();
    if (tp.val(y_t).rank() != 2 || tp.val(y_t).cols() != 2)
        throw DataError("denoiser: y_t must be [N x 2]");
    const int N = tp.val(y_t).rows();
    const int L = static_cast<int>(tokens.size());
    DenoiserResult res;

    const int emb = noise_embedding(tp, P, level);
    const int enc = encode_text_style(tp, P, cfg, tokens, token_mask, style_feat, emb);

    int x = nn::conv1d(tp, y_t, P("stem.w"), P("stem.b"), cfg.kernel, 1);
    std::vector<int> skips;  // feature node per resolution, index 0 = full
    skips.push_back(x);
    for (int i = 0; i < cfg.levels; ++i) {
        x = conv_block(tp, P, "down" + std::to_string(i), x, emb, cfg.kernel, 2);
        if (attn_at_down(cfg, i + 1)) {
            auto ab = attn_block(tp, P, "dattn" + std::to_string(i), x, enc, emb, token_mask,
                                 static_cast<double>(tp.val(x).rows()) / L, cfg.n_heads);
            x = ab.out;
            res.attn_names.push_back("dattn" + std::to_string(i));
            res.cross_attn.push_back(std::move(ab.cross_weights));
        }
        if (i + 1 < cfg.levels) skips.push_back(x);
    }
    x = conv_block(tp, P, "mid", x, emb, cfg.kernel, 1);
    for (int i = cfg.levels - 1; i >= 0; --i) {
        const int target_n = tp.val(skips[static_cast<size_t>(i)]).rows();
        x = nn::upsample2_rows(tp, x);
        if (tp.val(x).rows() != target_n) x = nn::crop_rows(tp, x, target_n);
        const int lat = nn::conv1d(tp, skips[static_cast<size_t>(i)],
                                   P("up" + std::to_string(i) + ".lateral.w"),
                                   P("up" + std::to_string(i) + ".lateral.b"), 1, 1);
        x = nn::add(tp, x, lat);
        x = conv_block(tp, P, "up" + std::to_string(i), x, emb, cfg.kernel, 1);
        if (attn_at_up(cfg, i)) {
            auto ab = attn_block(tp, P, "uattn" + std::to_string(i), x, enc, emb, token_mask,
                                 static_cast<double>(tp.val(x).rows()) / L, cfg.n_heads);
            x = ab.out;
            res.attn_names.push_back("uattn" + std::to_string(i));
            res.cross_attn.push_back(std::move(ab.cross_weights));
        }
    }
    if (tp.val(x).rows() != N) throw NumericError("denoiser: trunk length drifted");

    res.eps = nn::linear(tp, x, P("head.eps.w"), P("head.eps.b"));
    const int logit = nn::linear(tp, x, P("head.pen.w"), P("head.pen.b"));
    res.pen_prob = nn::clamp(tp, nn::sigmoid(tp, logit), 1e-7, 1.0 - 1e-7);
    return res;
}

// Same, but extracting style features from a raw [H x W x 1] image node
// with the built-in trunk.
template <typename T>
DenoiserResult denoiser_forward(nn::Tape<T>& tp, Leaves<T>& P, const ModelConfig& cfg, int y_t,
                                const std::vector<int>& tokens,
                                const std::vector<uint8_t>* token_mask, int style_img,
                                double level) {
    const int sfeat = style_features(tp, P, cfg, style_img);
    return denoiser_forward_feat(tp, P, cfg, y_t, tokens, token_mask, sfeat, level);
}

// Convenience: run the denoiser on plain arrays, no gradient use.
template <typename T>
struct DenoiserEval {
    Tensor<T> eps;                           // [N x 2]
    Tensor<T> pen_prob;                      // [N x 1]
    std::vector<std::string> attn_names;
    std::vector<Tensor<double>> cross_attn;
};

template <typename T>
DenoiserEval<T> evaluate_denoiser(const ParamStore<T>& params, const ModelConfig& cfg,
                                  const Tensor<T>& y_t, const std::vector<int>& tokens,
                                  const Tensor<T>& style_img_hw1, double level) {
    nn::Tape<T> tape;
    Leaves<T> P(tape, params);
    const int y_id = tape.constant(y_t);
    const int img_id = tape.constant(style_img_hw1);
    auto r = denoiser_forward(tape, P, cfg, y_id, tokens, nullptr, img_id, level);
    DenoiserEval<T> out;
    out.eps = tape.val(r.eps);
    out.pen_prob = tape.val(r.pen_prob);
    out.attn_names = std::move(r.attn_names);
    out.cross_attn = std::move(r.cross_attn);
    return out;
}

// Style image as a rank-3 [H x W x 1] tensor of the configured size.
template <typename T>
Tensor<T> style_tensor(const data::GrayImage& img, const ModelConfig& cfg) {
    data::GrayImage fitted;
    const data::GrayImage* src = &img;
    if (img.empty()) {
        fitted = data::GrayImage(cfg.style_h, cfg.style_w);
        src = &fitted;
    } else if (img.h != cfg.style_h || img.w != cfg.style_w) {
        fitted = data::fit_image(img, cfg.style_h, cfg.style_w);
        src = &fitted;
    }
    Tensor<T> t({cfg.style_h, cfg.style_w, 1});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(src->px[static_cast<size_t>(i)]);
    return t;
}

}  // namespace inkdiff::model
