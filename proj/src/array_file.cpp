#include "pdsep/array_file.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pdsep/binary_io.hpp"
#include "pdsep/error.hpp"

namespace pdsep {

std::vector<std::uint8_t> encode_array(const ArrayFile& a) {
  if (shape_size(a.shape) != a.values.size())
    throw InvalidArgument("array: shape " + shape_string(a.shape) + " does not hold " + std::to_string(a.values.size()) +
                          " values");
  io::Writer w;
  w.magic("PDA1");
  w.u32(static_cast<std::uint32_t>(a.shape.size()));
  for (auto e : a.shape) w.u32(static_cast<std::uint32_t>(e));
  w.f32s(a.values);
  return std::move(w.buffer());
}

ArrayFile decode_array(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes, "array file");
  r.expect_magic("PDA1");
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 8) throw FormatError("array file: implausible rank " + std::to_string(rank));
  ArrayFile a;
  for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(r.u32());
  a.values = r.f32s(shape_size(a.shape));
  if (r.remaining() != 0) throw FormatError("array file: trailing bytes");
  return a;
}

void save_array(const std::filesystem::path& path, const ArrayFile& a) { io::write_file(path, encode_array(a)); }

ArrayFile load_array(const std::filesystem::path& path) { return decode_array(io::read_file(path)); }

void save_pgm(const std::filesystem::path& path, const ArrayFile& a) {
  Shape s = a.shape;
  if (s.size() == 3 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 2) throw InvalidArgument("pgm: need a single-channel image, got shape " + shape_string(a.shape));
  std::string out = "P5\n" + std::to_string(s[1]) + " " + std::to_string(s[0]) + "\n255\n";
  for (float v : a.values) {
    const double u = std::clamp((static_cast<double>(v) + 1.0) / 2.0, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
  }
  io::write_text_file(path, out);
}

}  // namespace pdsep
