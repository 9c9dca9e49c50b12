#include "wam/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "wam/error.hpp"

namespace wam {
namespace {

// Reads one header integer, skipping whitespace and '#' comments.
std::size_t header_value(std::istream& in) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else {
      in.get();
    }
    c = in.peek();
  }
  std::size_t v = 0;
  if (!(in >> v)) throw InvalidInput("malformed PNM header");
  return v;
}

std::string read_magic(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P') throw InvalidInput("not a binary PNM image");
  return std::string(magic, 2);
}

std::uint8_t to_byte(double v) {
  const double scaled = std::round(v * 255.0);
  if (!(scaled >= 0.0)) return 0;
  if (scaled > 255.0) return 255;
  return static_cast<std::uint8_t>(scaled);
}

}  // namespace

Image read_pnm(std::istream& in) {
  const std::string magic = read_magic(in);
  Image image;
  if (magic == "P5")
    image.channels = 1;
  else if (magic == "P6")
    image.channels = 3;
  else
    throw InvalidInput("unsupported PNM type " + magic + " (need P5 or P6)");
  image.width = header_value(in);
  image.height = header_value(in);
  const std::size_t maxval = header_value(in);
  if (maxval != 255) throw InvalidInput("only maxval 255 is supported");
  if (image.width == 0 || image.height == 0) throw InvalidInput("empty image");
  in.get();  // single whitespace before the raster

  std::vector<unsigned char> raw(image.pixel_count() * image.channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw InvalidInput("truncated PNM raster");
  image.features.resize(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) image.features[k] = raw[k] / 255.0;
  return image;
}

Image read_pnm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open image '" + path + "'");
  return read_pnm(in);
}

void write_pnm(std::ostream& out, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidInput("write_pnm: need 1 or 3 channels");
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> raw(image.features.size());
  for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = static_cast<char>(to_byte(image.features[k]));
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

void write_pnm_file(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write image '" + path + "'");
  write_pnm(out, image);
}

void write_label_pgm(std::ostream& out, std::size_t width, std::size_t height,
                     const std::vector<std::size_t>& labels) {
  if (labels.size() != width * height) throw InvalidInput("write_label_pgm: size mismatch");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (std::size_t l : labels) {
    if (l > 255) throw InvalidInput("write_label_pgm: label index exceeds 255");
    out.put(static_cast<char>(l));
  }
}

std::vector<std::size_t> read_label_pgm(std::istream& in, std::size_t& width, std::size_t& height) {
  Image image = read_pnm(in);
  if (image.channels != 1) throw InvalidInput("label image must be single channel");
  width = image.width;
  height = image.height;
  std::vector<std::size_t> labels(image.pixel_count());
  for (std::size_t k = 0; k < labels.size(); ++k)
    labels[k] = static_cast<std::size_t>(std::lround(image.features[k] * 255.0));
  return labels;
}

Palette read_palette(std::istream& in, std::size_t channels) {
  Palette palette;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<double> color;
    for (long v; ss >> v;) {
      if (v < 0 || v > 255) throw ParseError(line_no, "palette value out of [0,255]");
      color.push_back(v / 255.0);
    }
    if (!ss.eof()) throw ParseError(line_no, "invalid palette entry");
    if (color.empty()) continue;
    if (color.size() != channels)
      throw ParseError(line_no, "palette entry has " + std::to_string(color.size()) + " values, expected " +
                                    std::to_string(channels));
    palette.push_back(std::move(color));
  }
  if (palette.empty()) throw InvalidInput("empty palette");
  return palette;
}

Palette read_palette_file(const std::string& path, std::size_t channels) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open palette '" + path + "'");
  return read_palette(in, channels);
}

void write_palette(std::ostream& out, const Palette& palette) {
  for (const auto& color : palette) {
    for (std::size_t c = 0; c < color.size(); ++c) out << (c ? " " : "") << static_cast<int>(to_byte(color[c]));
    out << '\n';
  }
}

Image render_labels(std::size_t width, std::size_t height, const std::vector<std::size_t>& labels,
                    const Palette& palette) {
  if (labels.size() != width * height) throw InvalidInput("render_labels: size mismatch");
  if (palette.empty()) throw InvalidInput("render_labels: empty palette");
  Image image;
  image.width = width;
  image.height = height;
  image.channels = palette.front().size();
  image.features.reserve(labels.size() * image.channels);
  for (std::size_t l : labels) {
    if (l >= palette.size()) throw InvalidInput("render_labels: label outside palette");
    image.features.insert(image.features.end(), palette[l].begin(), palette[l].end());
  }
  return image;
}

}  // namespace wam
