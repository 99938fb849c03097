#include "vtm/markers.hpp"

#include "vtm/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vtm {

std::string_view to_string(MarkerSource source) {
    return source == MarkerSource::mre ? "mre" : "direct";
}

std::string_view to_string(MarkerTag tag) {
    switch (tag) {
        case MarkerTag::clean: return "clean";
        case MarkerTag::deformed: return "deformed";
        case MarkerTag::overlapped: return "overlapped";
    }
    return "clean";
}

MarkerTag parse_marker_tag(std::string_view text) {
    if (text == "clean") return MarkerTag::clean;
    if (text == "deformed") return MarkerTag::deformed;
    if (text == "overlapped") return MarkerTag::overlapped;
    throw InputError("unknown marker tag: " + std::string(text));
}

double distance(const Marker& a, const Marker& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

namespace {

// %.17g round-trips a double exactly and is locale independent enough for CSV.
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

double parse_double(const std::string& text, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InputError("bad number '" + text + "' in " + path.string());
    }
}

std::ifstream open_csv(const std::filesystem::path& path, std::string_view expected_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != expected_header) {
        throw InputError("unexpected CSV header '" + header + "' in " + path.string());
    }
    return in;
}

}  // namespace

void write_marker_csv(const std::vector<LocalizedMarker>& markers, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "x,y,c,source\n";
    for (const auto& m : markers) {
        out << fmt(m.marker.x) << ',' << fmt(m.marker.y) << ',' << fmt(m.marker.c) << ','
            << to_string(m.source) << '\n';
    }
}

std::vector<LocalizedMarker> read_marker_csv(const std::filesystem::path& path) {
    auto in = open_csv(path, "x,y,c,source");
    std::vector<LocalizedMarker> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_row(line);
        if (f.size() != 4) throw InputError("expected 4 fields in " + path.string());
        LocalizedMarker m;
        m.marker = {parse_double(f[0], path), parse_double(f[1], path), parse_double(f[2], path)};
        if (f[3] == "mre") {
            m.source = MarkerSource::mre;
        } else if (f[3] != "direct") {
            throw InputError("unknown source '" + f[3] + "' in " + path.string());
        }
        out.push_back(m);
    }
    return out;
}

void write_label_csv(const MarkerSet& truth, const std::vector<MarkerTag>& tags,
                     const std::filesystem::path& path) {
    if (truth.size() != tags.size()) throw ConfigError("label count does not match tag count");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "x,y,tag\n";
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out << fmt(truth[i].x) << ',' << fmt(truth[i].y) << ',' << to_string(tags[i]) << '\n';
    }
}

void read_label_csv(const std::filesystem::path& path, MarkerSet& truth, std::vector<MarkerTag>& tags) {
    auto in = open_csv(path, "x,y,tag");
    truth.clear();
    tags.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_row(line);
        if (f.size() != 3) throw InputError("expected 3 fields in " + path.string());
        truth.push_back({parse_double(f[0], path), parse_double(f[1], path), 1.0});
        tags.push_back(parse_marker_tag(f[2]));
    }
}

}  // namespace vtm
