#include "xmatch/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "xmatch/binary_io.hpp"
#include "xmatch/error.hpp"

namespace xmatch {

void PointCloud::validate() const {
  if (positions.size() != intensities.size()) {
    throw Error(ErrorKind::InvalidArgument, "positions and intensities differ in length");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "non-finite position at " + std::to_string(i));
    }
    if (!(intensities[i] >= 0.0 && intensities[i] <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "intensity outside [0,1] at " + std::to_string(i));
    }
  }
}

namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<ScalarType> parse_scalar_type(const std::string& name) {
  if (name == "char" || name == "int8") return ScalarType::Int8;
  if (name == "uchar" || name == "uint8") return ScalarType::UInt8;
  if (name == "short" || name == "int16") return ScalarType::Int16;
  if (name == "ushort" || name == "uint16") return ScalarType::UInt16;
  if (name == "int" || name == "int32") return ScalarType::Int32;
  if (name == "uint" || name == "uint32") return ScalarType::UInt32;
  if (name == "float" || name == "float32") return ScalarType::Float32;
  if (name == "double" || name == "float64") return ScalarType::Float64;
  return std::nullopt;
}

std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
  }
  return 0;
}

// Range used to normalize integer color/intensity channels into [0, 1].
double channel_scale(ScalarType t) {
  switch (t) {
    case ScalarType::Int8: return 127.0;
    case ScalarType::UInt8: return 255.0;
    case ScalarType::Int16: return 32767.0;
    case ScalarType::UInt16: return 65535.0;
    case ScalarType::Int32: return 2147483647.0;
    case ScalarType::UInt32: return 4294967295.0;
    default: return 1.0;
  }
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::Float32;
  bool is_list = false;
  ScalarType count_type = ScalarType::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
  std::size_t body_offset = 0;
};

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ParseError, path + ": " + what);
}

Header parse_header(const std::string& path, const std::vector<char>& bytes) {
  Header header;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= bytes.size()) return std::nullopt;
    std::size_t end = pos;
    while (end < bytes.size() && bytes[end] != '\n') ++end;
    std::string line(bytes.data() + pos, end - pos);
    pos = std::min(end + 1, bytes.size());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  auto first = next_line();
  if (!first || *first != "ply") parse_fail(path, "missing 'ply' signature");
  bool have_format = false;
  for (;;) {
    auto line = next_line();
    if (!line) parse_fail(path, "header not terminated by end_header");
    std::istringstream ss(*line);
    std::string keyword;
    ss >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string fmt, version;
      ss >> fmt >> version;
      if (fmt == "ascii") {
        header.binary = false;
      } else if (fmt == "binary_little_endian") {
        header.binary = true;
      } else if (fmt == "binary_big_endian") {
        throw Error(ErrorKind::UnsupportedFormat, path + ": big-endian PLY is not supported");
      } else {
        parse_fail(path, "unknown format '" + fmt + "'");
      }
      have_format = true;
    } else if (keyword == "element") {
      Element el;
      long long count = -1;
      ss >> el.name >> count;
      if (el.name.empty() || count < 0 || ss.fail()) parse_fail(path, "malformed element line");
      el.count = static_cast<std::size_t>(count);
      header.elements.push_back(std::move(el));
    } else if (keyword == "property") {
      if (header.elements.empty()) parse_fail(path, "property before any element");
      Property prop;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type >> prop.name;
        auto ct = parse_scalar_type(count_type);
        auto it = parse_scalar_type(item_type);
        if (!ct || !it || prop.name.empty()) parse_fail(path, "malformed list property");
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *it;
      } else {
        auto t = parse_scalar_type(type);
        ss >> prop.name;
        if (!t || prop.name.empty()) parse_fail(path, "malformed property '" + *line + "'");
        prop.type = *t;
      }
      header.elements.back().properties.push_back(std::move(prop));
    } else {
      parse_fail(path, "unknown header keyword '" + keyword + "'");
    }
  }
  if (!have_format) parse_fail(path, "missing format line");
  header.body_offset = pos;
  return header;
}

double read_binary_scalar(const char* p, ScalarType t) {
  switch (t) {
    case ScalarType::Int8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case ScalarType::UInt8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case ScalarType::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case ScalarType::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case ScalarType::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case ScalarType::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case ScalarType::Float32: { float v; std::memcpy(&v, p, 4); return v; }
    case ScalarType::Float64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

// Pulls scalar values out of the body, one property at a time.
class BodyCursor {
 public:
  BodyCursor(const std::string& path, const std::vector<char>& bytes, std::size_t offset,
             bool binary)
      : path_(path), bytes_(bytes), pos_(offset), binary_(binary) {}

  double scalar(ScalarType t) {
    if (binary_) {
      const std::size_t n = scalar_size(t);
      if (pos_ + n > bytes_.size()) parse_fail(path_, "body shorter than declared element counts");
      const double v = read_binary_scalar(bytes_.data() + pos_, t);
      pos_ += n;
      return v;
    }
    skip_space();
    if (pos_ >= bytes_.size()) parse_fail(path_, "body shorter than declared element counts");
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !is_space(bytes_[pos_])) ++pos_;
    const std::string token(bytes_.data() + start, pos_ - start);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') parse_fail(path_, "bad number '" + token + "'");
    return v;
  }

  bool exhausted() {
    if (binary_) return pos_ == bytes_.size();
    skip_space();
    return pos_ == bytes_.size();
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }
  void skip_space() {
    while (pos_ < bytes_.size() && is_space(bytes_[pos_])) ++pos_;
  }

  const std::string& path_;
  const std::vector<char>& bytes_;
  std::size_t pos_;
  bool binary_;
};

}  // namespace

PointCloud load_ply(const std::string& path) {
  const std::vector<char> bytes = read_file_bytes(path);
  const Header header = parse_header(path, bytes);

  const auto vertex_it = std::find_if(header.elements.begin(), header.elements.end(),
                                      [](const Element& e) { return e.name == "vertex"; });
  if (vertex_it == header.elements.end()) {
    throw Error(ErrorKind::MissingProperty, path + ": no vertex element");
  }
  auto find_prop = [&](std::initializer_list<const char*> names) -> int {
    for (const char* name : names) {
      for (std::size_t i = 0; i < vertex_it->properties.size(); ++i) {
        const auto& p = vertex_it->properties[i];
        if (!p.is_list && p.name == name) return static_cast<int>(i);
      }
    }
    return -1;
  };
  const int ix = find_prop({"x"}), iy = find_prop({"y"}), iz = find_prop({"z"});
  if (ix < 0 || iy < 0 || iz < 0) {
    throw Error(ErrorKind::MissingProperty, path + ": vertex element lacks x/y/z");
  }
  const int ii = find_prop({"intensity", "scalar_intensity"});
  const int ir = find_prop({"red", "r", "diffuse_red"});
  const int ig = find_prop({"green", "g", "diffuse_green"});
  const int ib = find_prop({"blue", "b", "diffuse_blue"});
  const bool has_rgb = ir >= 0 && ig >= 0 && ib >= 0;

  auto channel = [&](int idx, const std::vector<double>& values) {
    const auto& prop = vertex_it->properties[static_cast<std::size_t>(idx)];
    return values[static_cast<std::size_t>(idx)] / channel_scale(prop.type);
  };

  PointCloud cloud;
  BodyCursor cursor(path, bytes, header.body_offset, header.binary);
  for (const Element& el : header.elements) {
    const bool is_vertex = &el == &*vertex_it;
    if (is_vertex) {
      cloud.positions.reserve(el.count);
      cloud.intensities.reserve(el.count);
    }
    std::vector<double> values(el.properties.size());
    for (std::size_t row = 0; row < el.count; ++row) {
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        const Property& prop = el.properties[k];
        if (prop.is_list) {
          const double n = cursor.scalar(prop.count_type);
          if (n < 0) parse_fail(path, "negative list length");
          for (long long j = 0; j < static_cast<long long>(n); ++j) cursor.scalar(prop.type);
          values[k] = n;
        } else {
          values[k] = cursor.scalar(prop.type);
        }
      }
      if (!is_vertex) continue;
      const Vec3 p(values[ix], values[iy], values[iz]);
      if (!p.allFinite()) parse_fail(path, "non-finite vertex coordinate");
      double intensity = kDefaultPlyIntensity;
      if (ii >= 0) {
        intensity = channel(ii, values);
      } else if (has_rgb) {
        intensity = 0.299 * channel(ir, values) + 0.587 * channel(ig, values) +
                    0.114 * channel(ib, values);
      }
      if (!std::isfinite(intensity)) parse_fail(path, "non-finite intensity");
      cloud.add(p, std::clamp(intensity, 0.0, 1.0));
    }
  }
  if (!cursor.exhausted()) parse_fail(path, "body longer than declared element counts");
  if (cloud.empty()) parse_fail(path, "cloud has no vertices");
  return cloud;
}

void save_ply(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::ostringstream head;
  head << "ply\nformat binary_little_endian 1.0\n"
       << "comment xmatch point cloud\n"
       << "element vertex " << cloud.size() << "\n"
       << "property double x\nproperty double y\nproperty double z\n"
       << "property float intensity\nend_header\n";
  ByteWriter w;
  w.magic(head.str());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    w.f64(cloud.positions[i].x());
    w.f64(cloud.positions[i].y());
    w.f64(cloud.positions[i].z());
    w.f32(static_cast<float>(cloud.intensities[i]));
  }
  w.write_file(path);
}

}  // namespace xmatch
