#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace txst {

/// Versioned container of named tensors plus a JSON metadata block.
///
/// Layout (all integers little-endian):
///   "TXSTARC1" | u32 version | u64 meta_len | meta (compact JSON)
///   | u64 count | count x { u32 name_len | name | u8 dtype | u32 ndim | i64 dims[ndim]
///                          | u64 nbytes | raw data }
/// Tensors are written in lexicographic name order, so serializing the same
/// contents always yields the same bytes.
struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;

  std::string serialize() const;
  static Archive deserialize(std::string_view bytes);

  /// Writes to a sibling temporary file and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  const torch::Tensor& at(const std::string& name) const;
};

/// Copies every parameter and buffer of `module` into `archive` under `prefix + "."`.
void export_module(const torch::nn::Module& module, const std::string& prefix, Archive& archive);

/// Loads parameters named `prefix + "." + local_name` back into `module`.
/// Every parameter of the module must be present with a matching shape.
void import_module(torch::nn::Module& module, const std::string& prefix, const Archive& archive);

std::string sha256_hex(std::string_view bytes);

/// Hash of the raw parameter bytes of a module, in name order.
std::string parameter_hash(const torch::nn::Module& module);

}  // namespace txst
