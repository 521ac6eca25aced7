// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tfm/param_store.hpp"
#include "tfm/tensor.hpp"

namespace tfm {

/// One named tensor as stored on disk. Rank is carried verbatim; the payload
/// is row-major.
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  Tensor2D as_matrix() const;
  static NamedTensor from_matrix(std::string name, const Tensor2D& m);
};

// Layout: "TFM1", u32 count, then per tensor
//   u16 name length, name bytes, u8 rank, u64 dims[rank], f64 payload.
// All integers and floats little-endian.
void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// Finds a tensor by name; throws InputError when absent.
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

void save_params(const std::filesystem::path& path, const ParamStore& store);
/// Overwrites values of parameters present in both the file and the store.
/// Shape mismatches and unknown names are InputErrors.
void load_params_into(const std::filesystem::path& path, ParamStore& store);

}  // namespace tfm
