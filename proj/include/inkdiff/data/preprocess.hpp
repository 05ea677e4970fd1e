#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "inkdiff/data/stroke.hpp"
#include "inkdiff/errors.hpp"

namespace inkdiff::data {

// Pooled population std over all 2N offset components of one example.
inline double pooled_offset_std(const StrokeSequence& s) {
    if (s.size() < 2) throw DataError("normalize needs at least 2 points");
    double sum = 0.0, sumsq = 0.0;
    for (double v : s.offsets) {
        sum += v;
        sumsq += v * v;
    }
    const double n = static_cast<double>(s.offsets.size());
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    return std::sqrt(std::max(var, 0.0));
}

// Divide offsets by the example's pooled std; returns the scale divided out.
// A degenerate example (zero variance) is a data error to be reported upstream.
inline double normalize_in_place(StrokeSequence& s) {
    const double sd = pooled_offset_std(s);
    if (!(sd > 0.0)) throw DataError("degenerate record: zero offset variance");
    for (double& v : s.offsets) v /= sd;
    return sd;
}

struct DropReport {
    struct Entry {
        size_t index;
        std::string tag;
        double worst_magnitude;
    };
    double mean = 0.0, stddev = 0.0, threshold = 0.0;
    std::vector<Entry> dropped;

    std::string to_text() const {
        std::string out = "offset magnitude mean=" + std::to_string(mean) +
                          " std=" + std::to_string(stddev) +
                          " threshold=" + std::to_string(threshold) + "\n";
        out += "dropped " + std::to_string(dropped.size()) + " record(s)\n";
        for (const auto& e : dropped)
            out += "  record " + std::to_string(e.index) + " (" + e.tag +
                   "): max offset magnitude " + std::to_string(e.worst_magnitude) + "\n";
        return out;
    }
};

// Drop every record containing an offset whose Euclidean magnitude exceeds
// mean + k*std of the magnitudes pooled over the whole split.
inline std::vector<DatasetRecord> filter_outliers(std::vector<DatasetRecord> records, double k,
                                                  DropReport& report) {
    if (records.empty()) throw DataError("filter_outliers: empty dataset");
    double sum = 0.0, sumsq = 0.0;
    size_t n = 0;
    for (const auto& r : records) {
        for (size_t i = 0; i < r.strokes.size(); ++i) {
            const double m = std::hypot(r.strokes.dx(i), r.strokes.dy(i));
            sum += m;
            sumsq += m * m;
            ++n;
        }
    }
    if (n == 0) throw DataError("filter_outliers: dataset has no offsets");
    report.mean = sum / static_cast<double>(n);
    const double var = sumsq / static_cast<double>(n) - report.mean * report.mean;
    report.stddev = std::sqrt(std::max(var, 0.0));
    report.threshold = report.stddev == 0.0 ? report.mean : report.mean + k * report.stddev;

    std::vector<DatasetRecord> kept;
    kept.reserve(records.size());
    for (size_t idx = 0; idx < records.size(); ++idx) {
        auto& r = records[idx];
        double worst = 0.0;
        for (size_t i = 0; i < r.strokes.size(); ++i)
            worst = std::max(worst, std::hypot(r.strokes.dx(i), r.strokes.dy(i)));
        if (worst > report.threshold) {
            report.dropped.push_back({idx, r.writer_id + "/" + r.text, worst});
        } else {
            kept.push_back(std::move(r));
        }
    }
    return kept;
}

namespace detail {
inline double angle_between(double ax, double ay, double bx, double by) {
    const double na = std::hypot(ax, ay), nb = std::hypot(bx, by);
    if (na == 0.0 || nb == 0.0) return 0.0;  // zero offsets merge freely
    const double dot = ax * bx + ay * by;
    const double cross = ax * by - ay * bx;
    return std::atan2(std::abs(cross), dot);  // in [0, pi]
}

inline bool merge_pass(StrokeSequence& s, double angle_tol) {
    StrokeSequence out;
    out.offsets.reserve(s.offsets.size());
    out.pen_lift.reserve(s.pen_lift.size());
    bool changed = false;
    size_t i = 0;
    while (i < s.size()) {
        double ax = s.dx(i), ay = s.dy(i);
        uint8_t lift = s.pen_lift[i];
        size_t j = i + 1;
        // absorb following offsets while the pen stays down and direction holds
        while (j < s.size() && lift == 0 &&
               detail::angle_between(ax, ay, s.dx(j), s.dy(j)) <= angle_tol) {
            ax += s.dx(j);
            ay += s.dy(j);
            lift = s.pen_lift[j];
            ++j;
            changed = true;
        }
        out.push(ax, ay, lift);
        i = j;
    }
    s = std::move(out);
    return changed;
}
}  // namespace detail

// Sum consecutive pen-down offsets pointing in approximately the same
// direction. Iterated to a fixed point so the operation is idempotent.
// Pen-down run endpoints are unchanged up to float reassociation.
inline StrokeSequence merge_collinear(StrokeSequence s, double angle_tol) {
    if (angle_tol < 0.0) throw DataError("merge_collinear: negative tolerance");
    while (detail::merge_pass(s, angle_tol)) {
    }
    return s;
}

}  // namespace inkdiff::data
