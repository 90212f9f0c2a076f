#include "txst/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "txst/errors.hpp"

namespace txst {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'X', 'S', 'T', 'A', 'R', 'C', '1'};

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1, kInt64 = 2, kUInt8 = 3 };

DType to_dtype(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return DType::kFloat32;
    case torch::kFloat64: return DType::kFloat64;
    case torch::kInt64: return DType::kInt64;
    case torch::kUInt8: return DType::kUInt8;
    default: throw CheckpointError("unsupported tensor dtype in archive");
  }
}

torch::ScalarType to_scalar_type(DType type) {
  switch (type) {
    case DType::kFloat32: return torch::kFloat32;
    case DType::kFloat64: return torch::kFloat64;
    case DType::kInt64: return torch::kInt64;
    case DType::kUInt8: return torch::kUInt8;
  }
  throw CheckpointError("corrupt archive: unknown dtype tag");
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("corrupt archive: truncated");
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const torch::Tensor& Archive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("archive has no tensor named '" + name + "'");
  return it->second;
}

std::string Archive::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string meta_text = meta.dump();
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().contiguous().cpu();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(to_dtype(t.scalar_type())));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(out, d);
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    put<std::uint64_t>(out, nbytes);
    out.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  return out;
}

Archive Archive::deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a txst archive (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw CheckpointError("unsupported archive version " + std::to_string(version));
  Archive archive;
  const auto meta_len = in.get<std::uint64_t>();
  archive.meta = nlohmann::json::parse(in.take(meta_len));
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name(in.take(name_len));
    const auto type = to_scalar_type(static_cast<DType>(in.get<std::uint8_t>()));
    const auto ndim = in.get<std::uint32_t>();
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = in.get<std::int64_t>();
    const auto nbytes = in.get<std::uint64_t>();
    auto tensor = torch::empty(dims, torch::TensorOptions().dtype(type));
    if (static_cast<std::uint64_t>(tensor.numel() * tensor.element_size()) != nbytes) {
      throw CheckpointError("corrupt archive: size mismatch for '" + name + "'");
    }
    auto raw = in.take(nbytes);
    std::memcpy(tensor.data_ptr(), raw.data(), nbytes);
    archive.tensors.emplace(std::move(name), std::move(tensor));
  }
  if (!in.done()) throw CheckpointError("corrupt archive: trailing bytes");
  return archive;
}

void Archive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    const auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

void export_module(const torch::nn::Module& module, const std::string& prefix, Archive& archive) {
  for (const auto& item : module.named_parameters(true)) {
    archive.tensors[prefix + "." + item.key()] = item.value().detach().clone();
  }
  for (const auto& item : module.named_buffers(true)) {
    archive.tensors[prefix + "." + item.key()] = item.value().detach().clone();
  }
}

void import_module(torch::nn::Module& module, const std::string& prefix, const Archive& archive) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& local, torch::Tensor& target) {
    const auto& source = archive.at(prefix + "." + local);
    if (source.sizes() != target.sizes()) {
      throw CheckpointError("shape mismatch for '" + prefix + "." + local + "'");
    }
    target.copy_(source.to(target.scalar_type()));
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string parameter_hash(const torch::nn::Module& module) {
  Archive archive;
  export_module(module, "m", archive);
  return sha256_hex(archive.serialize());
}

}  // namespace txst
