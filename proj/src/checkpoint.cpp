#include "rollcast/checkpoint.hpp"

#include "rollcast/io_util.hpp"

namespace rollcast {

namespace {
constexpr const char* kMagic = "RCPT";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_checkpoint(const std::string& path,
                      const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FileFormatError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  for (const auto& [name, t] : tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) write_u64(os, e);
    for (double v : t.vec()) write_f64(os, v);
  }
  if (!os) throw FileFormatError("write failure for checkpoint: " + path);
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileFormatError("cannot open checkpoint: " + path);
  check_magic(is, kMagic);
  std::uint32_t version = read_u32(is, "checkpoint version");
  if (version != kVersion) {
    throw FileFormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, Tensor> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    std::uint32_t name_len = read_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw FileFormatError("truncated file while reading tensor name");
    }
    std::uint32_t rank = read_u32(is, "tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = read_u64(is, "tensor extent");
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f64(is, "tensor payload");
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace rollcast
