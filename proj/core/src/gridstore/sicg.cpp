#include "icefuse/gridstore/sicg.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "icefuse/common/error.hpp"

namespace icefuse::grid {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'I', 'C', 'G'};
constexpr std::size_t kHeaderBytes = 16;

template <typename T>
void put_le(std::vector<unsigned char>& buf, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_grid(const Grid& g, std::ostream& out, SampleType type) {
  if (g.size() == 0) throw ContractError("write_grid: empty grid");
  if (g.height() > std::numeric_limits<std::uint32_t>::max() || g.width() > std::numeric_limits<std::uint32_t>::max())
    throw DimensionError("write_grid: extent exceeds u32");
  const std::size_t sample = type == SampleType::f32 ? 4 : 8;
  std::vector<unsigned char> buf;
  buf.reserve(kHeaderBytes + g.size() * sample);
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint16_t>(buf, kSicgVersion);
  put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(type));
  put_le<std::uint8_t>(buf, 0);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(g.height()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(g.width()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (type == SampleType::f32)
      put_le<float>(buf, g.valid(i) ? static_cast<float>(g[i]) : std::numeric_limits<float>::quiet_NaN());
    else
      put_le<double>(buf, g.valid(i) ? g[i] : std::numeric_limits<double>::quiet_NaN());
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("write_grid: stream write failed");
}

void write_grid(const Grid& g, const std::filesystem::path& path, SampleType type) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  write_grid(g, out, type);
}

Grid read_grid(std::istream& in) {
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw FormatError("SICG: truncated header");
  if (std::memcmp(header.data(), kMagic.data(), 4) != 0) throw FormatError("SICG: bad magic");
  const auto version = get_le<std::uint16_t>(&header[4]);
  if (version != kSicgVersion) throw FormatError("SICG: unsupported version " + std::to_string(version));
  const auto dtype = header[6];
  if (dtype > 1) throw FormatError("SICG: unknown dtype code " + std::to_string(dtype));
  const auto height = get_le<std::uint32_t>(&header[8]);
  const auto width = get_le<std::uint32_t>(&header[12]);
  if (height == 0 || width == 0) throw FormatError("SICG: zero extent");

  const std::size_t sample = dtype == 0 ? 4 : 8;
  const std::size_t count = static_cast<std::size_t>(height) * width;
  std::vector<unsigned char> payload(count * sample);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) throw FormatError("SICG: truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("SICG: trailing bytes after payload");

  Grid g(height, width);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = dtype == 0 ? static_cast<double>(get_le<float>(&payload[i * 4])) : get_le<double>(&payload[i * 8]);
    g.set(i, v);
  }
  return g;
}

Grid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open grid: " + path.string());
  try {
    return read_grid(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace icefuse::grid
