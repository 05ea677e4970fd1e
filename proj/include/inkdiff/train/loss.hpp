#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "inkdiff/errors.hpp"

namespace inkdiff::train {

// Mean over unmasked positions of the squared L2 error between noise
// vectors. eps/eps_hat are interleaved (dx, dy) pairs, mask is per position.
inline double stroke_loss(std::span<const double> eps, std::span<const double> eps_hat,
                          std::span<const uint8_t> mask) {
    if (eps.size() != eps_hat.size() || eps.size() != 2 * mask.size())
        throw DataError("stroke_loss: shape mismatch");
    double acc = 0.0;
    int64_t kept = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double dx = eps[2 * i] - eps_hat[2 * i];
        const double dy = eps[2 * i + 1] - eps_hat[2 * i + 1];
        acc += dx * dx + dy * dy;
        ++kept;
    }
    if (kept == 0) throw DataError("stroke_loss: empty mask");
    return acc / static_cast<double>(kept);
}

// Mean over unmasked positions of binary cross-entropy. Probabilities must
// lie strictly inside (0, 1); the network head guarantees that via its
// clamp, callers feeding raw values must do the same.
inline double pen_loss(std::span<const uint8_t> d0, std::span<const double> pen_prob,
                       std::span<const uint8_t> mask) {
    if (d0.size() != pen_prob.size() || d0.size() != mask.size())
        throw DataError("pen_loss: shape mismatch");
    double acc = 0.0;
    int64_t kept = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double p = pen_prob[i];
        if (!(p > 0.0) || !(p < 1.0)) throw DataError("pen_loss: probability not in (0, 1)");
        acc += d0[i] ? -std::log(p) : -std::log1p(-p);
        ++kept;
    }
    if (kept == 0) throw DataError("pen_loss: empty mask");
    return acc / static_cast<double>(kept);
}

}  // namespace inkdiff::train
