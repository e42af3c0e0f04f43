#pragma once

// Parameter checkpoints: a flat binary file of named tensors and a JSON
// manifest next to it.
//
// Binary layout (little-endian):
//   "SQRCKPT1"                      8-byte magic
//   u64 count
//   count x { u64 name_len, name bytes, u64 ndims, u64 dims[ndims],
//             f64 values[prod(dims)] }

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqrec/tensor.hpp"

namespace seqrec {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Writes `<stem>.bin` and `<stem>.json`; `extra` is embedded in the manifest.
void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Reads `<stem>.bin`. Throws DataError on a missing or corrupt file.
std::vector<NamedTensor> load_checkpoint_tensors(const std::filesystem::path& stem);
nlohmann::json load_checkpoint_manifest(const std::filesystem::path& stem);

}  // namespace seqrec
