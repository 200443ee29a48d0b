#include "xmatch/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace xmatch {

void ByteWriter::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path);
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ByteReader ByteReader::from_file(const std::string& path) {
  return ByteReader(read_file_bytes(path), path);
}

std::string ByteReader::trailer() {
  if (at_end()) return {};
  const std::uint32_t len = u32();
  need(len);
  std::string json(bytes_.data() + pos_, len);
  pos_ += len;
  return json;
}

}  // namespace xmatch
