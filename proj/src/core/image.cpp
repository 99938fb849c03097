#include "vtm/image.hpp"

#include "vtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

namespace vtm {

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ConfigError("image dimensions must be non-negative");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

void Image::clamp() {
    for (double& v : pixels_) v = std::clamp(v, 0.0, 1.0);
}

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string token;
    char ch = 0;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(ch);
    }
    return token;
}

}  // namespace

void write_pgm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
    std::vector<char> bytes;
    bytes.reserve(image.pixels().size());
    for (double v : image.pixels()) bytes.push_back(static_cast<char>(to_byte(v)));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    if (next_token(in) != "P5") throw InputError("not a binary PGM: " + path.string());
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(next_token(in));
        height = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw InputError("malformed PGM header: " + path.string());
    }
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw InputError("unsupported PGM (need 8-bit, positive size): " + path.string());
    }
    std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw InputError("truncated PGM payload: " + path.string());
    }
    Image image(width, height);
    auto px = image.pixels();
    for (std::size_t i = 0; i < bytes.size(); ++i) px[i] = bytes[i] / 255.0;
    return image;
}

Image quantize8(const Image& image) {
    Image out = image;
    for (double& v : out.pixels()) v = to_byte(v) / 255.0;
    return out;
}

}  // namespace vtm
