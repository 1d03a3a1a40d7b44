#include "s2ct/rvol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "s2ct/error.hpp"

namespace s2ct {

namespace {

constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxExtent = 1u << 14;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("rvol: truncated header in " + path);
  return v;
}

struct RvolHeader {
  RvolKind kind;
  std::array<int, 3> dims;
  std::array<float, 3> spacing;
};

void write_rvol_header(std::ofstream& os, RvolKind kind, const std::array<int, 3>& dims,
                       const std::array<float, 3>& spacing, const std::string& path) {
  if (!os) throw DataError("rvol: cannot open for write: " + path);
  os.write("RVOL", 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint8_t>(kind));
  for (int d : dims) write_pod(os, static_cast<uint32_t>(d));
  for (float s : spacing) write_pod(os, s);
}

RvolHeader read_rvol_header(std::ifstream& is, const std::string& path) {
  if (!is) throw DataError("rvol: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RVOL", 4) != 0) throw DataError("rvol: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(is, path);
  if (version != kVersion)
    throw DataError("rvol: unsupported version " + std::to_string(version) + " in " + path);
  const uint8_t kind = read_pod<uint8_t>(is, path);
  if (kind > 3) throw DataError("rvol: unknown kind " + std::to_string(kind) + " in " + path);
  RvolHeader h;
  h.kind = static_cast<RvolKind>(kind);
  for (int i = 0; i < 3; ++i) {
    const uint32_t e = read_pod<uint32_t>(is, path);
    if (e == 0 || e > kMaxExtent)
      throw DataError("rvol: dimension " + std::to_string(e) + " out of range in " + path);
    h.dims[i] = static_cast<int>(e);
  }
  for (int i = 0; i < 3; ++i) h.spacing[i] = read_pod<float>(is, path);
  return h;
}

void write_f32_rvol(const Volume& v, RvolKind kind, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  write_rvol_header(os, kind, v.dims, v.spacing_mm, path);
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (!os) throw DataError("rvol: write failed: " + path);
}

}  // namespace

void write_rvol_hu(const Volume& v, const std::string& path) {
  write_f32_rvol(v, RvolKind::Hu, path);
}
void write_rvol_normalized(const Volume& v, const std::string& path) {
  write_f32_rvol(v, RvolKind::Normalized, path);
}
void write_rvol_mu(const Volume& v, const std::string& path) {
  write_f32_rvol(v, RvolKind::Mu, path);
}

void write_rvol_labels(const LabelVolume& v, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  write_rvol_header(os, RvolKind::Labels, v.dims, v.spacing_mm, path);
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size()));
  if (!os) throw DataError("rvol: write failed: " + path);
}

RvolKind peek_rvol_kind(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return read_rvol_header(is, path).kind;
}

Volume read_rvol_f32(const std::string& path, RvolKind expected) {
  std::ifstream is(path, std::ios::binary);
  RvolHeader h = read_rvol_header(is, path);
  if (h.kind == RvolKind::Labels)
    throw DataError("rvol: " + path + " holds labels, expected a float volume");
  if (h.kind != expected)
    throw DataError("rvol: " + path + " kind " + std::to_string(int(h.kind)) +
                    " does not match expected " + std::to_string(int(expected)));
  Volume v;
  v.dims = h.dims;
  v.spacing_mm = h.spacing;
  v.data.resize(static_cast<size_t>(v.numel()));
  is.read(reinterpret_cast<char*>(v.data.data()),
          static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(v.data.size() * sizeof(float)))
    throw DataError("rvol: truncated payload in " + path);
  return v;
}

LabelVolume read_rvol_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  RvolHeader h = read_rvol_header(is, path);
  if (h.kind != RvolKind::Labels)
    throw DataError("rvol: " + path + " does not hold labels");
  LabelVolume v;
  v.dims = h.dims;
  v.spacing_mm = h.spacing;
  v.data.resize(static_cast<size_t>(v.numel()));
  is.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
  if (is.gcount() != static_cast<std::streamsize>(v.data.size()))
    throw DataError("rvol: truncated payload in " + path);
  return v;
}

void write_rimg(const PlanarImage& img, const std::string& path) {
  if (img.rows < 1 || img.cols < 1 || img.channels.empty())
    throw DataError("rimg: empty image for " + path);
  for (const auto& ch : img.channels)
    if (static_cast<int64_t>(ch.size()) != static_cast<int64_t>(img.rows) * img.cols)
      throw DataError("rimg: channel size mismatch for " + path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("rimg: cannot open for write: " + path);
  os.write("RIMG", 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint8_t>(img.channels.size()));
  write_pod(os, static_cast<uint32_t>(img.rows));
  write_pod(os, static_cast<uint32_t>(img.cols));
  for (const auto& ch : img.channels)
    os.write(reinterpret_cast<const char*>(ch.data()),
             static_cast<std::streamsize>(ch.size() * sizeof(float)));
  if (!os) throw DataError("rimg: write failed: " + path);
}

PlanarImage read_rimg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("rimg: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RIMG", 4) != 0) throw DataError("rimg: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(is, path);
  if (version != kVersion)
    throw DataError("rimg: unsupported version " + std::to_string(version) + " in " + path);
  const uint8_t channels = read_pod<uint8_t>(is, path);
  if (channels == 0) throw DataError("rimg: zero channels in " + path);
  PlanarImage img;
  const uint32_t rows = read_pod<uint32_t>(is, path);
  const uint32_t cols = read_pod<uint32_t>(is, path);
  if (rows == 0 || cols == 0 || rows > kMaxExtent || cols > kMaxExtent)
    throw DataError("rimg: dimensions out of range in " + path);
  img.rows = static_cast<int>(rows);
  img.cols = static_cast<int>(cols);
  img.channels.resize(channels);
  for (auto& ch : img.channels) {
    ch.resize(static_cast<size_t>(img.rows) * img.cols);
    is.read(reinterpret_cast<char*>(ch.data()),
            static_cast<std::streamsize>(ch.size() * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(ch.size() * sizeof(float)))
      throw DataError("rimg: truncated payload in " + path);
  }
  return img;
}

void write_pgm(const std::vector<float>& values, int rows, int cols, float lo, float hi,
               const std::string& path) {
  if (static_cast<int64_t>(values.size()) != static_cast<int64_t>(rows) * cols)
    throw DataError("pgm: value count mismatch for " + path);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("pgm: cannot open for write: " + path);
  os << "P2\n" << cols << " " << rows << "\n255\n";
  const float span = hi > lo ? hi - lo : 1.0f;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const float v = std::clamp((values[static_cast<size_t>(r) * cols + c] - lo) / span, 0.0f, 1.0f);
      os << static_cast<int>(std::lround(v * 255.0f));
      os << (c + 1 == cols ? '\n' : ' ');
    }
  }
  if (!os) throw DataError("pgm: write failed: " + path);
}

}  // namespace s2ct
