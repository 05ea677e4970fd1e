#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "inkdiff/data/image.hpp"
#include "inkdiff/data/stroke.hpp"
#include "inkdiff/errors.hpp"

#include "json.hpp"

namespace inkdiff::data {

// Interchange format: one JSON object per line, UTF-8.
//   {"text": "...", "writer": "...", "points": [[dx, dy, lift], ...],
//    "style_image": "relative/path.pgm"}   (style_image optional)

inline DatasetRecord record_from_json(const nlohmann::json& j, const std::string& base_dir,
                                      bool load_images) {
    DatasetRecord rec;
    try {
        rec.text = j.at("text").get<std::string>();
        rec.writer_id = j.value("writer", std::string{});
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 3)
                throw DataError("record point must be [dx, dy, lift]");
            const double lift = p[2].get<double>();
            if (lift != 0.0 && lift != 1.0) throw DataError("pen lift flag must be 0 or 1");
            rec.strokes.push(p[0].get<double>(), p[1].get<double>(),
                             static_cast<uint8_t>(lift));
        }
        if (j.contains("style_image") && !j["style_image"].is_null()) {
            rec.style_image_path = j["style_image"].get<std::string>();
            if (load_images && !rec.style_image_path.empty()) {
                auto p = std::filesystem::path(rec.style_image_path);
                if (p.is_relative() && !base_dir.empty())
                    p = std::filesystem::path(base_dir) / p;
                rec.style_image = read_pgm(p.string());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad record json: ") + e.what());
    }
    return rec;
}

inline nlohmann::json record_to_json(const DatasetRecord& rec) {
    nlohmann::json pts = nlohmann::json::array();
    for (size_t i = 0; i < rec.strokes.size(); ++i)
        pts.push_back({rec.strokes.dx(i), rec.strokes.dy(i),
                       static_cast<int>(rec.strokes.pen_lift[i])});
    nlohmann::json j{{"text", rec.text}, {"writer", rec.writer_id}, {"points", std::move(pts)}};
    if (!rec.style_image_path.empty()) j["style_image"] = rec.style_image_path;
    return j;
}

inline std::vector<DatasetRecord> read_records(const std::string& path, bool load_images = true) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open records file: " + path);
    const std::string base_dir = std::filesystem::path(path).parent_path().string();
    std::vector<DatasetRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(record_from_json(j, base_dir, load_images));
    }
    return out;
}

inline void write_records(const std::string& path, const std::vector<DatasetRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write records file: " + path);
    for (const auto& r : records) f << record_to_json(r).dump() << "\n";
    if (!f) throw IoError("short write: " + path);
}

// --- IAM-OnDB stroke XML adapter ---------------------------------------
//
// Reads the <StrokeSet> portion of an IAM-OnDB file: absolute pen positions
// grouped into <Stroke> elements. Output offsets difference consecutive
// points; the last point of each stroke carries pen_lift = 1.

inline StrokeSequence strokes_from_iam_xml(const std::string& xml) {
    struct Pt {
        double x, y;
        bool stroke_end;
    };
    std::vector<Pt> pts;
    size_t pos = 0;
    bool in_stroke = false;
    auto read_attr = [&xml](size_t from, size_t until, const char* name) {
        const std::string key = std::string(name) + "=\"";
        const size_t a = xml.find(key, from);
        if (a == std::string::npos || a >= until) throw DataError("IAM xml: missing attr");
        const size_t b = xml.find('"', a + key.size());
        if (b == std::string::npos) throw DataError("IAM xml: unterminated attr");
        return std::stod(xml.substr(a + key.size(), b - a - key.size()));
    };
    while (true) {
        const size_t lt = xml.find('<', pos);
        if (lt == std::string::npos) break;
        const size_t gt = xml.find('>', lt);
        if (gt == std::string::npos) throw DataError("IAM xml: unterminated tag");
        const std::string_view tag(xml.data() + lt + 1, gt - lt - 1);
        if (tag.starts_with("Stroke ") || tag == "Stroke") {
            in_stroke = true;
        } else if (tag.starts_with("/Stroke")) {
            if (in_stroke && !pts.empty()) pts.back().stroke_end = true;
            in_stroke = false;
        } else if (in_stroke && tag.starts_with("Point")) {
            pts.push_back({read_attr(lt, gt, "x"), read_attr(lt, gt, "y"), false});
        }
        pos = gt + 1;
    }
    if (pts.size() < 2) throw DataError("IAM xml: fewer than 2 points");
    StrokeSequence s;
    for (size_t i = 1; i < pts.size(); ++i)
        s.push(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y, pts[i].stroke_end ? 1 : 0);
    return s;
}

inline StrokeSequence read_iam_xml_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return strokes_from_iam_xml(ss.str());
}

}  // namespace inkdiff::data
