#pragma once

#include <vector>

#include "inkdiff/errors.hpp"

#include "json.hpp"

namespace inkdiff::model {

// Figure-level structure is fixed by the architecture; the counts and widths
// here are engineering defaults, all overridable from config files.
struct ModelConfig {
    int d_model = 128;
    int n_heads = 4;
    int ff_mult = 2;       // feedforward width = ff_mult * d_model
    int levels = 3;        // stride-2 downsampling conv blocks
    int attn_levels = 2;   // attention at this many of the lowest resolutions
    int kernel = 3;
    std::vector<int> style_channels = {8, 16, 32, 64};  // stride-2 stages
    int style_h = 64;
    int style_w = 512;
    int vocab_size = 2;  // pad + unk; grows with the real vocabulary

    void validate() const {
        if (d_model < 2 || d_model % 2 != 0) throw DataError("d_model must be even and >= 2");
        if (n_heads < 1 || d_model % n_heads != 0)
            throw DataError("d_model must be divisible by n_heads");
        if (levels < 1) throw DataError("levels must be >= 1");
        if (attn_levels < 0 || attn_levels > levels)
            throw DataError("attn_levels must be in [0, levels]");
        if (kernel < 1 || kernel % 2 == 0) throw DataError("kernel must be odd");
        if (style_channels.empty()) throw DataError("style_channels must be non-empty");
        if (style_h < 1 || style_w < 1) throw DataError("style dims must be positive");
        if (vocab_size < 2) throw DataError("vocab_size must be >= 2");
        if (ff_mult < 1) throw DataError("ff_mult must be >= 1");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"d_model", d_model},
                              {"n_heads", n_heads},
                              {"ff_mult", ff_mult},
                              {"levels", levels},
                              {"attn_levels", attn_levels},
                              {"kernel", kernel},
                              {"style_channels", style_channels},
                              {"style_h", style_h},
                              {"style_w", style_w},
                              {"vocab_size", vocab_size}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.d_model = j.value("d_model", c.d_model);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.ff_mult = j.value("ff_mult", c.ff_mult);
        c.levels = j.value("levels", c.levels);
        c.attn_levels = j.value("attn_levels", c.attn_levels);
        c.kernel = j.value("kernel", c.kernel);
        if (j.contains("style_channels"))
            c.style_channels = j["style_channels"].get<std::vector<int>>();
        c.style_h = j.value("style_h", c.style_h);
        c.style_w = j.value("style_w", c.style_w);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.validate();
        return c;
    }
};

}  // namespace inkdiff::model
