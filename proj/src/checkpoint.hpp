#pragma once

#include <map>
#include <string>

#include "tensor.hpp"

namespace ccap {

// Single-file named-tensor container. Layout: magic "VIRT0001", then per
// entry: name length (u64 LE), UTF-8 name, rank (u64 LE), dims (u64 LE),
// values (f64 LE). Entries are written in name order.
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace ccap
