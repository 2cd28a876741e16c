#include "covbeam/weights_io.hpp"

#include <fstream>
#include <stdexcept>

namespace covbeam {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'W', 'F'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
  uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("weights file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_weight_file(const std::string& path, const std::vector<WeightEntry>& entries) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<uint16_t>(out, static_cast<uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<uint8_t>(out, e.dtype);
    put<uint8_t>(out, 2);
    put<uint32_t>(out, e.rows);
    put<uint32_t>(out, e.cols);
    std::size_t elem = e.dtype == 0 ? 4 : 8;
    if (e.data.size() != static_cast<std::size_t>(e.rows) * e.cols * elem)
      throw std::invalid_argument("weight entry data size mismatch: " + e.name);
    out.insert(out.end(), e.data.begin(), e.data.end());
  }
  std::ofstream of(path, std::ios::binary | std::ios::trunc);
  if (!of) throw std::runtime_error("cannot write weights file: " + path);
  of.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!of) throw std::runtime_error("short write: " + path);
}

std::vector<WeightEntry> read_weight_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file: " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (data.size() < 12 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw std::runtime_error("bad weights file magic: " + path);
  pos = 4;
  uint32_t version = take<uint32_t>(data, pos);
  if (version != kVersion) throw std::runtime_error("unsupported weights file version");
  uint32_t count = take<uint32_t>(data, pos);
  std::vector<WeightEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    uint16_t name_len = take<uint16_t>(data, pos);
    if (pos + name_len > data.size()) throw std::runtime_error("weights file truncated");
    e.name.assign(reinterpret_cast<const char*>(data.data() + pos), name_len);
    pos += name_len;
    e.dtype = take<uint8_t>(data, pos);
    uint8_t rank = take<uint8_t>(data, pos);
    if (rank != 2) throw std::runtime_error("unsupported tensor rank in weights file");
    e.rows = take<uint32_t>(data, pos);
    e.cols = take<uint32_t>(data, pos);
    std::size_t elem = e.dtype == 0 ? 4 : 8;
    std::size_t bytes = static_cast<std::size_t>(e.rows) * e.cols * elem;
    if (pos + bytes > data.size()) throw std::runtime_error("weights file truncated");
    e.data.assign(data.begin() + pos, data.begin() + pos + bytes);
    pos += bytes;
    entries.push_back(std::move(e));
  }
  return entries;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace covbeam
