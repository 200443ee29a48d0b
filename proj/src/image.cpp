#include "xmatch/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "xmatch/binary_io.hpp"
#include "xmatch/error.hpp"

namespace xmatch {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::vector<char>& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return std::string(bytes.data() + start, pos - start);
}

int header_int(const std::string& path, const std::vector<char>& bytes, std::size_t& pos) {
  const std::string tok = header_token(bytes, pos);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) {
    throw Error(ErrorKind::ParseError, path + ": bad header field '" + tok + "'");
  }
  return std::stoi(tok);
}

}  // namespace

Image load_image(const std::string& path) {
  const std::vector<char> bytes = read_file_bytes(path);
  std::size_t pos = 0;
  const std::string magic = header_token(bytes, pos);
  if (magic != "P5" && magic != "P6") {
    throw Error(ErrorKind::UnsupportedFormat, path + ": only binary P5/P6 images are supported");
  }
  const int w = header_int(path, bytes, pos);
  const int h = header_int(path, bytes, pos);
  const int maxval = header_int(path, bytes, pos);
  if (w <= 0 || h <= 0) throw Error(ErrorKind::ParseError, path + ": empty image");
  if (maxval <= 0 || maxval > 255) {
    throw Error(ErrorKind::UnsupportedFormat, path + ": only 8-bit images are supported");
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorKind::ParseError, path + ": truncated header");
  }
  ++pos;
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t expected = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos != expected) {
    throw Error(ErrorKind::ParseError, path + ": raster has " + std::to_string(bytes.size() - pos) +
                                           " bytes, expected " + std::to_string(expected));
  }
  Image img(w, h);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  const double scale = 1.0 / maxval;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    double value;
    if (channels == 1) {
      value = raster[i] * scale;
    } else {
      const auto* px = raster + 3 * i;
      value = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) * scale;
    }
    img.pixels[i] = static_cast<float>(std::clamp(value, 0.0, 1.0));
  }
  return img;
}

void save_pgm(const std::string& path, const Image& img) {
  std::ostringstream head;
  head << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  ByteWriter w;
  w.magic(head.str());
  for (float v : img.pixels) {
    w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  w.write_file(path);
}

}  // namespace xmatch
