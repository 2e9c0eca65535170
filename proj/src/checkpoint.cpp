#include "hierseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hierseg {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw Error("checkpoint: truncated file '" + path + "'");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw Error("checkpoint: truncated file '" + path + "'");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    put_u32(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put_u32(os, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (std::size_t d : nt.tensor.shape) put_u64(os, d);
    for (double v : nt.tensor.data) put_f64(os, v);
  }
  if (!os) throw Error("checkpoint: write failed for '" + path + "'");
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t version = get_u32(is, path);
  if (version != kVersion) {
    throw Error("checkpoint: unsupported version " + std::to_string(version) + " in '" +
                path + "'");
  }
  const std::uint32_t count = get_u32(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw Error("checkpoint: truncated file '" + path + "'");
    const std::uint32_t rank = get_u32(is, path);
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = get_u64(is, path);
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t j = 0; j < n; ++j) data[j] = std::bit_cast<double>(get_u64(is, path));
    out.push_back({std::move(name), TensorBuffer(std::move(shape), std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::vector<NamedTensor> tensors;
  tensors.reserve(params.names().size());
  for (const std::string& name : params.names()) {
    tensors.push_back({name, params.at(name)});
  }
  write_tensor_file(path, tensors);
}

ParamSet load_checkpoint(const std::string& path) {
  ParamSet params;
  for (NamedTensor& nt : read_tensor_file(path)) {
    params.add(nt.name, std::move(nt.tensor));
  }
  return params;
}

}  // namespace hierseg
