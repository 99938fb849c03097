#include "vtm/blob/blob.hpp"

#include "vtm/errors.hpp"
#include "vtm/eval/match.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace vtm::blob {

namespace {

constexpr double kPi = 3.14159265358979323846;

int find_root(std::vector<int>& parent, int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

void unite(std::vector<int>& parent, int a, int b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[static_cast<std::size_t>(a)] = b;
}

// Clockwise 8-neighborhood starting west: W, NW, N, NE, E, SE, S, SW.
constexpr std::array<int, 8> kDx{-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kDy{0, -1, -1, -1, 0, 1, 1, 1};

// Moore-neighbor trace of the outer boundary starting at the first raster
// pixel of the component; returns chain-code length.
double trace_perimeter(const std::vector<int>& labels, int width, int height, int label, int sx, int sy) {
    auto inside = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < width && y < height &&
               labels[static_cast<std::size_t>(y) * width + x] == label;
    };
    // Backtrack direction: we arrived at the start from the west (a background pixel).
    int bx = sx, by = sy;
    int dir = 0;  // index of the backtrack neighbor (west)
    double length = 0.0;
    int first_nx = -1, first_ny = -1;
    bool first = true;
    const std::size_t guard = static_cast<std::size_t>(width) * height * 8 + 16;
    for (std::size_t iter = 0; iter < guard; ++iter) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int d = (dir + k) % 8;
            if (inside(bx + kDx[static_cast<std::size_t>(d)], by + kDy[static_cast<std::size_t>(d)])) {
                found = d;
                break;
            }
        }
        if (found < 0) return 0.0;  // isolated pixel
        const int nx = bx + kDx[static_cast<std::size_t>(found)];
        const int ny = by + kDy[static_cast<std::size_t>(found)];
        if (first) {
            first_nx = nx;
            first_ny = ny;
            first = false;
        } else if (bx == sx && by == sy && nx == first_nx && ny == first_ny) {
            break;
        }
        length += (found % 2 == 0) ? 1.0 : std::sqrt(2.0);
        // New backtrack: the neighbor examined just before `found`, seen from the new pixel.
        const int prev = (found + 7) % 8;
        const int px = bx + kDx[static_cast<std::size_t>(prev)];
        const int py = by + kDy[static_cast<std::size_t>(prev)];
        bx = nx;
        by = ny;
        for (int d = 0; d < 8; ++d) {
            if (bx + kDx[static_cast<std::size_t>(d)] == px && by + kDy[static_cast<std::size_t>(d)] == py) {
                dir = d;
                break;
            }
        }
    }
    return length;
}

}  // namespace

void BlobParams::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("blob threshold must lie in [0,1]");
    if (!(min_area >= 0.0 && min_area <= max_area)) throw ConfigError("blob areas need 0 <= min <= max");
    if (!(min_circularity >= 0.0 && min_circularity <= 1.0)) throw ConfigError("min circularity must lie in [0,1]");
    if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
}

std::string to_string(Polarity p) { return p == Polarity::dark_on_light ? "dark" : "light"; }

Polarity parse_polarity(const std::string& text) {
    if (text == "dark") return Polarity::dark_on_light;
    if (text == "light") return Polarity::light_on_dark;
    throw ConfigError("unknown polarity '" + text + "' (expected dark|light)");
}

std::vector<int> label_components(const std::vector<std::uint8_t>& mask, int width, int height, int connectivity,
                                  int* count) {
    if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
    if (mask.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ConfigError("mask size does not match dimensions");
    }
    std::vector<int> labels(mask.size(), 0);
    std::vector<int> parent{0};
    auto at = [&](int x, int y) -> int& { return labels[static_cast<std::size_t>(y) * width + x]; };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!mask[static_cast<std::size_t>(y) * width + x]) continue;
            // Previously visited neighbors: W, N, and for 8-connectivity NW, NE.
            std::array<int, 4> nb{};
            int k = 0;
            if (x > 0 && at(x - 1, y)) nb[static_cast<std::size_t>(k++)] = at(x - 1, y);
            if (y > 0 && at(x, y - 1)) nb[static_cast<std::size_t>(k++)] = at(x, y - 1);
            if (connectivity == 8 && y > 0) {
                if (x > 0 && at(x - 1, y - 1)) nb[static_cast<std::size_t>(k++)] = at(x - 1, y - 1);
                if (x + 1 < width && at(x + 1, y - 1)) nb[static_cast<std::size_t>(k++)] = at(x + 1, y - 1);
            }
            if (k == 0) {
                const int id = static_cast<int>(parent.size());
                parent.push_back(id);
                at(x, y) = id;
                continue;
            }
            int smallest = nb[0];
            for (int i = 1; i < k; ++i) smallest = std::min(smallest, nb[static_cast<std::size_t>(i)]);
            at(x, y) = smallest;
            for (int i = 0; i < k; ++i) unite(parent, smallest, nb[static_cast<std::size_t>(i)]);
        }
    }
    // Compact to 1..n in raster order of first appearance.
    std::vector<int> remap(parent.size(), 0);
    int next = 0;
    for (int& l : labels) {
        if (!l) continue;
        const int root = find_root(parent, l);
        if (!remap[static_cast<std::size_t>(root)]) remap[static_cast<std::size_t>(root)] = ++next;
        l = remap[static_cast<std::size_t>(root)];
    }
    if (count) *count = next;
    return labels;
}

std::vector<std::uint8_t> binarize(const Image& image, const BlobParams& params) {
    std::vector<std::uint8_t> mask(image.pixels().size(), 0);
    auto px = image.pixels();
    const bool dark = params.polarity == Polarity::dark_on_light;
    for (std::size_t i = 0; i < px.size(); ++i) {
        mask[i] = dark ? (px[i] < params.threshold) : (px[i] > params.threshold);
    }
    return mask;
}

std::vector<Component> measure_components(const std::vector<int>& labels, int width, int height, int count) {
    std::vector<Component> comps(static_cast<std::size_t>(count));
    std::vector<int> first_x(static_cast<std::size_t>(count), -1), first_y(static_cast<std::size_t>(count), -1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int l = labels[static_cast<std::size_t>(y) * width + x];
            if (!l) continue;
            Component& c = comps[static_cast<std::size_t>(l - 1)];
            c.label = l;
            c.area += 1.0;
            c.cx += x + 0.5;
            c.cy += y + 0.5;
            if (first_x[static_cast<std::size_t>(l - 1)] < 0) {
                first_x[static_cast<std::size_t>(l - 1)] = x;
                first_y[static_cast<std::size_t>(l - 1)] = y;
            }
        }
    }
    for (std::size_t i = 0; i < comps.size(); ++i) {
        Component& c = comps[i];
        c.cx /= c.area;
        c.cy /= c.area;
        c.perimeter = trace_perimeter(labels, width, height, c.label, first_x[i], first_y[i]);
        c.circularity = c.perimeter > 0.0 ? std::min(1.0, 4.0 * kPi * c.area / (c.perimeter * c.perimeter)) : 1.0;
    }
    return comps;
}

MarkerSet detect_blobs(const Image& image, const BlobParams& params) {
    params.validate();
    int count = 0;
    const auto labels = label_components(binarize(image, params), image.width(), image.height(), params.connectivity,
                                         &count);
    MarkerSet out;
    for (const Component& c : measure_components(labels, image.width(), image.height(), count)) {
        if (c.area < params.min_area || c.area > params.max_area) continue;
        if (c.circularity < params.min_circularity) continue;
        out.push_back({c.cx, c.cy, 1.0});
    }
    std::sort(out.begin(), out.end(), [](const Marker& a, const Marker& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    return out;
}

std::size_t BlobLattice::size() const {
    return thresholds.size() * min_areas.size() * max_areas.size() * min_circularities.size() * connectivities.size();
}

TuneResult tune_params(const std::vector<LabeledFrame>& split, double tau, const BlobLattice& lattice) {
    if (split.empty()) throw InputError("blob tuning split is empty");
    TuneResult best;
    best.params.polarity = lattice.polarity;
    best.f1 = -1.0;
    for (double th : lattice.thresholds) {
        for (int conn : lattice.connectivities) {
            // Components depend only on threshold and connectivity; filter afterwards.
            std::vector<std::vector<Component>> comps;
            comps.reserve(split.size());
            for (const auto& f : split) {
                BlobParams p;
                p.threshold = th;
                p.polarity = lattice.polarity;
                p.connectivity = conn;
                int count = 0;
                const auto labels = label_components(binarize(*f.image, p), f.image->width(), f.image->height(), conn, &count);
                comps.push_back(measure_components(labels, f.image->width(), f.image->height(), count));
            }
            for (double amin : lattice.min_areas) {
                for (double amax : lattice.max_areas) {
                    if (amin > amax) continue;
                    for (double circ : lattice.min_circularities) {
                        eval::Counts total;
                        for (std::size_t i = 0; i < split.size(); ++i) {
                            MarkerSet found;
                            for (const Component& c : comps[i]) {
                                if (c.area < amin || c.area > amax || c.circularity < circ) continue;
                                found.push_back({c.cx, c.cy, 1.0});
                            }
                            total += eval::counts_of(eval::match_predictions(found, *split[i].truth, tau));
                        }
                        const auto report = eval::metrics(total);
                        const double f1 = report.f1();
                        if (f1 > best.f1) {
                            best.f1 = f1;
                            best.precision = report.precision.value_or(0.0);
                            best.recall = report.recall.value_or(0.0);
                            best.params = {th, lattice.polarity, amin, amax, circ, conn};
                        }
                    }
                }
            }
        }
    }
    if (best.f1 <= 0.0) {
        best = TuneResult{};
        best.params.polarity = lattice.polarity;
        best.degenerate = true;
    }
    return best;
}

}  // namespace vtm::blob
