#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace vtm {

/// Single-channel intensity raster, row-major, values in [0,1].
///
/// Pixel (col, row) covers the square [col, col+1) x [row, row+1) of the image
/// plane, so its center sits at (col + 0.5, row + 0.5). Marker coordinates use
/// the same continuous frame.
class Image {
public:
    Image() = default;
    Image(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return pixels_.empty(); }

    double& at(int col, int row) { return pixels_[static_cast<std::size_t>(row) * width_ + col]; }
    double at(int col, int row) const { return pixels_[static_cast<std::size_t>(row) * width_ + col]; }

    std::span<double> pixels() { return pixels_; }
    std::span<const double> pixels() const { return pixels_; }

    /// Clamp every value into [0,1].
    void clamp();

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> pixels_;
};

/// Binary (P5) 8-bit portable graymap. Values are quantized with round(v * 255).
void write_pgm(const Image& image, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

/// Quantize to 8 bits and back; what a PGM round trip yields.
Image quantize8(const Image& image);

}  // namespace vtm
