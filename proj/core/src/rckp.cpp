#include "s2ct/rckp.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "s2ct/error.hpp"

namespace s2ct {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("rckp: truncated file " + path);
  return v;
}

}  // namespace

void save_rckp(const ParameterStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("rckp: cannot open for write: " + path);
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(params.size()));
  for (const std::string& name : params.names()) {
    Tensor t = params.get(name);
    if (name.size() > 0xFFFF) throw DataError("rckp: parameter name too long: " + name);
    write_pod(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<uint8_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) write_pod(os, static_cast<uint32_t>(t.dim(d)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw DataError("rckp: write failed: " + path);
}

ParameterStore load_rckp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("rckp: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("rckp: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(is, path);
  if (version != kVersion)
    throw DataError("rckp: unsupported version " + std::to_string(version) + " in " + path);
  const uint32_t count = read_pod<uint32_t>(is, path);
  ParameterStore params;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = read_pod<uint16_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("rckp: truncated file " + path);
    const uint8_t rank = read_pod<uint8_t>(is, path);
    if (rank == 0) throw DataError("rckp: rank-0 tensor in " + path);
    std::vector<int> shape(rank);
    for (int d = 0; d < rank; ++d) {
      uint32_t e = read_pod<uint32_t>(is, path);
      if (e == 0 || e > (1u << 30)) throw DataError("rckp: bad extent in " + path);
      shape[d] = static_cast<int>(e);
    }
    Tensor t = Tensor::zeros(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw DataError("rckp: truncated payload in " + path);
    params.put(name, t);
  }
  return params;
}

}  // namespace s2ct
