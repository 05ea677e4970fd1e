#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "inkdiff/data/image.hpp"
#include "inkdiff/render/polyline.hpp"

namespace inkdiff::render {

namespace detail {
// classic integer line walk, all octants, endpoints included
inline void draw_line(data::GrayImage& img, int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        if (y0 >= 0 && y0 < img.h && x0 >= 0 && x0 < img.w) img.at(y0, x0) = 1.0;
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}
}  // namespace detail

// Aspect-preserving binary rasterization: fit the bounding box into the
// canvas, walk each run with an integer line algorithm. Positive y maps to
// increasing row index. A degenerate bounding box becomes a centered dot.
inline data::GrayImage rasterize(const std::vector<Polyline>& polys, int height, int width) {
    if (height < 1 || width < 1) throw DataError("rasterize: non-positive dims");
    const BBox bb = bounding_box(polys);
    data::GrayImage img(height, width);

    const double bw = bb.width(), bh = bb.height();
    double s;
    if (bw <= 0.0 && bh <= 0.0) {
        s = 0.0;  // single point
    } else {
        s = 1e300;
        if (bw > 0.0) s = std::min(s, (width - 1) / bw);
        if (bh > 0.0) s = std::min(s, (height - 1) / bh);
    }
    const double off_x = (width - 1 - bw * s) / 2.0;
    const double off_y = (height - 1 - bh * s) / 2.0;
    auto to_px = [&](const std::array<double, 2>& p) {
        const int cx = static_cast<int>(std::lround((p[0] - bb.min_x) * s + off_x));
        const int cy = static_cast<int>(std::lround((p[1] - bb.min_y) * s + off_y));
        return std::array<int, 2>{cx, cy};
    };
    for (const auto& pl : polys) {
        if (pl.pts.empty()) continue;
        auto prev = to_px(pl.pts[0]);
        if (pl.pts.size() == 1) {
            if (prev[1] >= 0 && prev[1] < height && prev[0] >= 0 && prev[0] < width)
                img.at(prev[1], prev[0]) = 1.0;
            continue;
        }
        for (size_t i = 1; i < pl.pts.size(); ++i) {
            const auto cur = to_px(pl.pts[i]);
            detail::draw_line(img, prev[0], prev[1], cur[0], cur[1]);
            prev = cur;
        }
    }
    return img;
}

// Rasterize at ss-times resolution, then box-average down to [0, 1] values.
inline data::GrayImage rasterize_soft(const std::vector<Polyline>& polys, int height, int width,
                                      int ss = 4) {
    if (ss < 1) throw DataError("rasterize_soft: bad supersample factor");
    const data::GrayImage big = rasterize(polys, height * ss, width * ss);
    data::GrayImage out(height, width);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double acc = 0;
            for (int dr = 0; dr < ss; ++dr)
                for (int dc = 0; dc < ss; ++dc) acc += big.at(r * ss + dr, c * ss + dc);
            out.at(r, c) = acc / (ss * ss);
        }
    return out;
}

}  // namespace inkdiff::render
