#pragma once

#include <map>
#include <string>

#include "rollcast/tensor.hpp"

namespace rollcast {

// Checkpoint file: magic "RCPT", format-version u32, then per tensor:
// name-length u32, UTF-8 name, rank u32, extents u64 each, float-64 payload
// little-endian. Tensors are written in name order; the reader consumes
// entries until end of file.

void write_checkpoint(const std::string& path,
                      const std::map<std::string, Tensor>& tensors);

std::map<std::string, Tensor> read_checkpoint(const std::string& path);

}  // namespace rollcast
