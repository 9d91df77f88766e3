#include "tsg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "tsg/errors.hpp"

namespace tsg {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path);
  os.write("SCG1", 4);
  put_u32(os, kCheckpointVersion);
  for (const auto& p : params) {
    put_u32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& s = p.tensor.shape();
    put_u64(os, static_cast<uint64_t>(s.size()));
    for (int64_t d : s) put_u64(os, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < p.tensor.numel(); ++i) put_f64(os, p.tensor.data()[i]);
  }
  if (!os) throw InputError("write failure on checkpoint: " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SCG1", 4) != 0)
    throw VersionError("bad checkpoint magic in " + path);
  uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));

  std::vector<CheckpointEntry> entries;
  while (true) {
    uint32_t name_len = get_u32(is);
    if (is.eof()) break;
    if (!is) throw VersionError("truncated checkpoint: " + path);
    CheckpointEntry e;
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    uint64_t rank = get_u64(is);
    int64_t count = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      int64_t d = static_cast<int64_t>(get_u64(is));
      e.shape.push_back(d);
      count *= d;
    }
    e.data.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) e.data[static_cast<size_t>(i)] = get_f64(is);
    if (!is) throw VersionError("truncated checkpoint: " + path);
    entries.push_back(std::move(e));
  }
  return entries;
}

void restore_parameters(const std::vector<CheckpointEntry>& entries,
                        std::vector<Parameter>& params) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  if (by_name.size() != entries.size())
    throw VersionError("duplicate parameter names in checkpoint");

  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw VersionError("checkpoint is missing parameter '" + p.name + "'");
    const CheckpointEntry& e = *it->second;
    if (e.shape != p.tensor.shape())
      throw VersionError("checkpoint shape " + shape_str(e.shape) + " for '" +
                         p.name + "' does not match model shape " +
                         shape_str(p.tensor.shape()));
    std::copy(e.data.begin(), e.data.end(), p.tensor.data());
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw VersionError("checkpoint has unknown parameter '" +
                       by_name.begin()->first + "'");
}

}  // namespace tsg
