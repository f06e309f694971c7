#include "pltts/numerics/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pltts {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'T', 'T', 'S', 'C', 'K', 'P'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw std::runtime_error("checkpoint: truncated file while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in, const std::string& what) {
  const auto len = take<std::uint32_t>(in, what + " length");
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: implausible " + what + " length");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw std::runtime_error("checkpoint: truncated " + what);
  return s;
}

}  // namespace

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return true;
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return e.tensor;
  throw std::runtime_error("checkpoint: no tensor named '" + name + "'");
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw std::runtime_error("checkpoint: no metadata key '" + key + "'");
  return it->second;
}

void Checkpoint::restore_into(const TensorList& targets) const {
  for (const auto& target : targets) {
    const Tensor& stored = get(target.name);
    if (stored.shape() != target.tensor.shape())
      throw ShapeError("checkpoint: tensor '" + target.name + "' has shape " + shape_str(stored.shape()) +
                       ", model expects " + shape_str(target.tensor.shape()));
    Tensor t = target.tensor;
    auto dst = t.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [key, value] : meta) {
    put_string(out, key);
    put_string(out, value);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& e : tensors) {
    put_string(out, e.name);
    const auto& shape = e.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto extent : shape) put<std::uint64_t>(out, extent);
    for (double v : e.tensor.data()) put<double>(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: '" + path.string() + "' has a bad magic string");
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint ck;
  const auto meta_count = take<std::uint32_t>(in, "metadata count");
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    auto key = take_string(in, "metadata key");
    ck.meta[key] = take_string(in, "metadata value");
  }
  const auto count = take<std::uint32_t>(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = take_string(in, "tensor name");
    const auto rank = take<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8)
      throw std::runtime_error("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& extent : shape) extent = static_cast<std::size_t>(take<std::uint64_t>(in, "extent"));
    std::vector<double> data(shape_numel(shape));
    const std::string label = "payload of '" + name + "'";
    for (auto& v : data) v = take<double>(in, label);
    ck.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return ck;
}

}  // namespace pltts
