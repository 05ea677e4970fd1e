#pragma once

#include <array>
#include <vector>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/errors.hpp"

namespace inkdiff::render {

// One pen-down run in absolute coordinates.
struct Polyline {
    std::vector<std::array<double, 2>> pts;
};

// Prefix-sum the offsets from the (0,0) anchor. The arrival point of each
// offset joins the current polyline; a pen lift closes it, so the next
// offset's arrival point starts a new one.
inline std::vector<Polyline> to_polylines(const data::StrokeSequence& s) {
    s.validate();
    std::vector<Polyline> out;
    Polyline cur;
    cur.pts.push_back({0.0, 0.0});
    double x = 0.0, y = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
        x += s.dx(i);
        y += s.dy(i);
        cur.pts.push_back({x, y});
        if (s.pen_lift[i]) {
            out.push_back(std::move(cur));
            cur = Polyline{};
        }
    }
    if (!cur.pts.empty()) out.push_back(std::move(cur));
    return out;
}

// Inverse of to_polylines: consecutive point differences, within and across
// polylines. Offsets are recovered exactly; the final point's lift flag is
// not representable and comes back as 0.
inline data::StrokeSequence difference_polylines(const std::vector<Polyline>& polys) {
    data::StrokeSequence s;
    double px = 0.0, py = 0.0;
    bool first_point = true;
    for (size_t pi = 0; pi < polys.size(); ++pi) {
        if (polys[pi].pts.empty()) throw DataError("empty polyline");
        for (size_t k = 0; k < polys[pi].pts.size(); ++k) {
            const auto& p = polys[pi].pts[k];
            if (first_point) {
                first_point = false;
            } else {
                s.push(p[0] - px, p[1] - py, 0);
            }
            px = p[0];
            py = p[1];
        }
        // the run's last offset carries the lift, except at the very end
        if (!s.pen_lift.empty() && pi + 1 < polys.size()) s.pen_lift.back() = 1;
    }
    return s;
}

struct BBox {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
};

inline BBox bounding_box(const std::vector<Polyline>& polys) {
    BBox b{1e300, 1e300, -1e300, -1e300};
    size_t npts = 0;
    for (const auto& pl : polys)
        for (const auto& p : pl.pts) {
            b.min_x = std::min(b.min_x, p[0]);
            b.min_y = std::min(b.min_y, p[1]);
            b.max_x = std::max(b.max_x, p[0]);
            b.max_y = std::max(b.max_y, p[1]);
            ++npts;
        }
    if (npts == 0) throw DataError("bounding_box: no points");
    return b;
}

}  // namespace inkdiff::render
