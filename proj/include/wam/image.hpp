#pragma once

// Binary PGM (P5) / PPM (P6) images with maxval 255 and 8-bit palettes.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace wam {

using Palette = std::vector<std::vector<double>>;

// Features normalized to [0, 1] (8-bit value / 255), interleaved per pixel.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<double> features;

  std::size_t pixel_count() const { return width * height; }
  const double* pixel(std::size_t index) const { return features.data() + index * channels; }
};

Image read_pnm(std::istream& in);
Image read_pnm_file(const std::string& path);

/// Writes P5 for one channel and P6 for three; features are scaled by 255
/// and rounded.
void write_pnm(std::ostream& out, const Image& image);
void write_pnm_file(const std::string& path, const Image& image);

/// Grayscale image whose gray values are the raw label indices.
void write_label_pgm(std::ostream& out, std::size_t width, std::size_t height,
                     const std::vector<std::size_t>& labels);
std::vector<std::size_t> read_label_pgm(std::istream& in, std::size_t& width, std::size_t& height);

/// One palette entry per non-empty line, `channels` integers in [0, 255].
Palette read_palette(std::istream& in, std::size_t channels);
Palette read_palette_file(const std::string& path, std::size_t channels);
void write_palette(std::ostream& out, const Palette& palette);

/// Image with each pixel replaced by the palette color of its label.
Image render_labels(std::size_t width, std::size_t height, const std::vector<std::size_t>& labels,
                    const Palette& palette);

}  // namespace wam
