#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vtm {

/// A 2D marker position in image pixels with a confidence in (0,1].
struct Marker {
    double x = 0.0;
    double y = 0.0;
    double c = 1.0;
};

using MarkerSet = std::vector<Marker>;

/// How a localized marker was admitted.
enum class MarkerSource { direct, mre };

std::string_view to_string(MarkerSource source);

struct LocalizedMarker {
    Marker marker;
    MarkerSource source = MarkerSource::direct;
};

/// Marker CSV with header `x,y,c,source`.
void write_marker_csv(const std::vector<LocalizedMarker>& markers, const std::filesystem::path& path);
std::vector<LocalizedMarker> read_marker_csv(const std::filesystem::path& path);

/// Tag of a ground-truth marker in a synthetic scene.
enum class MarkerTag { clean, deformed, overlapped };

std::string_view to_string(MarkerTag tag);
MarkerTag parse_marker_tag(std::string_view text);

/// Label CSV with header `x,y,tag`.
void write_label_csv(const MarkerSet& truth, const std::vector<MarkerTag>& tags,
                     const std::filesystem::path& path);
void read_label_csv(const std::filesystem::path& path, MarkerSet& truth, std::vector<MarkerTag>& tags);

double distance(const Marker& a, const Marker& b);

}  // namespace vtm
