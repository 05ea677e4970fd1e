#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "inkdiff/render/polyline.hpp"

namespace inkdiff::render {

namespace detail {
// fixed 4-decimal formatting keeps golden files byte-stable across platforms
inline std::string fmt4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    // avoid the two spellings of zero
    if (std::string(buf) == "-0.0000") return "0.0000";
    return buf;
}
}  // namespace detail

// One path element per pen-down run; dots for single-point runs. Stroke data
// grows y downward, so the vector output flips y to read upright.
inline std::string render_svg(const std::vector<Polyline>& polys, double stroke_width = 0.05) {
    if (polys.empty()) throw DataError("render_svg: no polylines");
    std::vector<Polyline> flipped = polys;
    for (auto& pl : flipped)
        for (auto& p : pl.pts) p[1] = -p[1];
    const BBox bb = bounding_box(flipped);
    const double margin_x = 0.05 * std::max(bb.width(), 1e-9);
    const double margin_y = 0.05 * std::max(bb.height(), 1e-9);
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"";
    svg += detail::fmt4(bb.min_x - margin_x) + " " + detail::fmt4(bb.min_y - margin_y) + " " +
           detail::fmt4(bb.width() + 2 * margin_x) + " " + detail::fmt4(bb.height() + 2 * margin_y) +
           "\">\n";
    for (const auto& pl : flipped) {
        if (pl.pts.empty()) continue;
        if (pl.pts.size() == 1) {
            svg += "<circle cx=\"" + detail::fmt4(pl.pts[0][0]) + "\" cy=\"" +
                   detail::fmt4(pl.pts[0][1]) + "\" r=\"" + detail::fmt4(stroke_width / 2) +
                   "\" fill=\"black\"/>\n";
            continue;
        }
        svg += "<path d=\"M " + detail::fmt4(pl.pts[0][0]) + " " + detail::fmt4(pl.pts[0][1]);
        for (size_t i = 1; i < pl.pts.size(); ++i)
            svg += " L " + detail::fmt4(pl.pts[i][0]) + " " + detail::fmt4(pl.pts[i][1]);
        svg += "\" fill=\"none\" stroke=\"black\" stroke-width=\"" +
               detail::fmt4(stroke_width) + "\" stroke-linecap=\"round\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline void emit_svg(const std::vector<Polyline>& polys, const std::string& path,
                     double stroke_width = 0.05) {
    const std::string svg = render_svg(polys, stroke_width);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write: " + path);
    f << svg;
    if (!f) throw IoError("short write: " + path);
}

}  // namespace inkdiff::render
