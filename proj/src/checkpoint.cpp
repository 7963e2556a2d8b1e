#include "ct/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace ct {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

static_assert(sizeof(float) == 4);

}  // namespace

void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, CheckpointEntry>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  for (const auto& [name, entry] : entries) {
    if (numel(entry.shape) != entry.values.size())
      throw std::invalid_argument("checkpoint: shape/value mismatch for " +
                                  name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(entry.shape.size()));
    for (std::size_t e : entry.shape) put_u64(out, e);
    out.write(reinterpret_cast<const char*>(entry.values.data()),
              static_cast<std::streamsize>(entry.values.size() * 4));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<std::pair<std::string, CheckpointEntry>> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  std::vector<std::pair<std::string, CheckpointEntry>> entries;
  while (true) {
    in.peek();
    if (in.eof()) break;
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated name");
    const std::uint32_t rank = get_u32(in);
    CheckpointEntry entry;
    entry.shape.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i)
      entry.shape[i] = static_cast<std::size_t>(get_u64(in));
    entry.values.resize(numel(entry.shape));
    in.read(reinterpret_cast<char*>(entry.values.data()),
            static_cast<std::streamsize>(entry.values.size() * 4));
    if (!in) throw std::runtime_error("checkpoint: truncated payload for " +
                                      name);
    entries.emplace_back(std::move(name), std::move(entry));
  }
  return entries;
}

template <typename T>
std::vector<std::pair<std::string, CheckpointEntry>> snapshot_model(
    ConvTransformerModel<T>& model) {
  std::vector<std::pair<std::string, CheckpointEntry>> entries;
  for (auto& [name, p] : model.parameters()) {
    CheckpointEntry e;
    e.shape = p.shape();
    e.values.assign(p.data().begin(), p.data().end());
    entries.emplace_back(name, std::move(e));
  }
  for (auto& [name, buf] : model.buffers()) {
    CheckpointEntry e;
    e.shape = {buf->size()};
    e.values.assign(buf->begin(), buf->end());
    entries.emplace_back(name, std::move(e));
  }
  return entries;
}

template <typename T>
void save_model(const std::string& path, ConvTransformerModel<T>& model) {
  save_checkpoint(path, snapshot_model(model));
}

template <typename T>
void load_model(const std::string& path, ConvTransformerModel<T>& model) {
  auto entries = load_checkpoint(path);
  std::map<std::string, CheckpointEntry*> by_name;
  for (auto& [name, e] : entries) by_name[name] = &e;
  auto fetch = [&](const std::string& name, const Shape& want) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing entry " + name);
    if (it->second->shape != want)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    return it->second;
  };
  for (auto& [name, p] : model.parameters()) {
    auto* e = fetch(name, p.shape());
    auto dst = p.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<T>(e->values[i]);
  }
  for (auto& [name, buf] : model.buffers()) {
    auto* e = fetch(name, Shape{buf->size()});
    for (std::size_t i = 0; i < buf->size(); ++i)
      (*buf)[i] = static_cast<T>(e->values[i]);
  }
}

template std::vector<std::pair<std::string, CheckpointEntry>>
snapshot_model<float>(ConvTransformerModel<float>&);
template std::vector<std::pair<std::string, CheckpointEntry>>
snapshot_model<double>(ConvTransformerModel<double>&);
template void save_model<float>(const std::string&,
                                ConvTransformerModel<float>&);
template void save_model<double>(const std::string&,
                                 ConvTransformerModel<double>&);
template void load_model<float>(const std::string&,
                                ConvTransformerModel<float>&);
template void load_model<double>(const std::string&,
                                 ConvTransformerModel<double>&);

}  // namespace ct
