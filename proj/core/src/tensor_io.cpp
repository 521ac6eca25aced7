// SPDX-License-Identifier: Apache-2.0
#include "tfm/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "tfm/error.hpp"

namespace tfm {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'M', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw InputError(std::string("tensor file truncated while reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

Tensor2D NamedTensor::as_matrix() const {
  if (dims.size() == 2) return Tensor2D(dims[0], dims[1], values);
  if (dims.size() == 1) return Tensor2D(1, dims[0], values);
  if (dims.empty()) return Tensor2D(1, 1, values);
  throw InputError("tensor " + name + " has rank " + std::to_string(dims.size()) +
                   "; expected rank <= 2");
}

NamedTensor NamedTensor::from_matrix(std::string name, const Tensor2D& m) {
  return NamedTensor{std::move(name), {m.rows(), m.cols()}, m.data()};
}

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InputError("tensor name too long: " + t.name.substr(0, 32) + "...");
    }
    std::uint64_t expected = 1;
    for (auto d : t.dims) expected *= d;
    if (expected != t.values.size()) {
      throw NumericError("tensor " + t.name + ": payload does not match dims");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    for (double v : t.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw InputError("failed writing tensor stream");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError("not a TFM1 tensor file (bad magic)");
  }
  const auto count = get_le<std::uint32_t>(in, "tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get_le<std::uint16_t>(in, "name length");
    t.name.resize(len);
    if (len > 0 && !in.read(t.name.data(), len)) throw InputError("tensor file truncated in name");
    const auto rank = get_le<std::uint8_t>(in, "rank");
    std::uint64_t total = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      t.dims.push_back(get_le<std::uint64_t>(in, "dims"));
      total *= t.dims.back();
    }
    if (total > (std::uint64_t{1} << 32)) throw InputError("tensor " + t.name + " is implausibly large");
    t.values.resize(total);
    for (auto& v : t.values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "payload"));
    out.push_back(std::move(t));
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  return read_tensors(in);
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw InputError("tensor not found: " + name);
}

void save_params(const std::filesystem::path& path, const ParamStore& store) {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, p] : store.params()) tensors.push_back(NamedTensor::from_matrix(name, p.value));
  save_tensors(path, tensors);
}

void load_params_into(const std::filesystem::path& path, ParamStore& store) {
  for (const auto& t : load_tensors(path)) {
    if (!store.contains(t.name)) throw InputError("weights file has unknown parameter: " + t.name);
    Tensor2D m = t.as_matrix();
    Tensor2D& dst = store.mutable_value(t.name);
    if (!m.same_shape(dst)) throw InputError("weights file shape mismatch for " + t.name);
    dst = std::move(m);
  }
}

}  // namespace tfm
