#include "seqrec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "seqrec/error.hpp"

namespace seqrec {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'R', 'C', 'K', 'P', 'T', '1'};

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in, const fs::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated checkpoint '" + path.string() + "'");
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& stem, const std::vector<NamedTensor>& tensors, const nlohmann::json& extra) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  const fs::path bin = with_ext(stem, ".bin");
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + bin.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, tensors.size());
  nlohmann::json entries = nlohmann::json::array();
  for (const NamedTensor& nt : tensors) {
    put_u64(out, nt.name.size());
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put_u64(out, 2);
    put_u64(out, nt.tensor.rows());
    put_u64(out, nt.tensor.cols());
    const auto values = nt.tensor.data();
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    entries.push_back({{"name", nt.name}, {"dims", {nt.tensor.rows(), nt.tensor.cols()}}});
  }
  if (!out) throw DataError("failed writing checkpoint '" + bin.string() + "'");

  nlohmann::json manifest = extra;
  manifest["format"] = "seqrec-checkpoint-v1";
  manifest["binary"] = bin.filename().string();
  manifest["tensors"] = entries;
  std::ofstream meta(with_ext(stem, ".json"));
  if (!meta) throw DataError("cannot write checkpoint manifest for '" + stem.string() + "'");
  meta << manifest.dump(2) << '\n';
}

std::vector<NamedTensor> load_checkpoint_tensors(const fs::path& stem) {
  const fs::path bin = with_ext(stem, ".bin");
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw DataError("missing checkpoint '" + bin.string() + "'; run `seqrec train` first");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("'" + bin.string() + "' is not a seqrec checkpoint");
  }
  const std::uint64_t count = get_u64(in, bin);
  std::vector<NamedTensor> tensors;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t name_len = get_u64(in, bin);
    if (name_len > 4096) throw DataError("corrupt checkpoint '" + bin.string() + "'");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw DataError("truncated checkpoint");
    const std::uint64_t ndims = get_u64(in, bin);
    if (ndims == 0 || ndims > 2) throw DataError("unsupported tensor rank in checkpoint '" + bin.string() + "'");
    std::uint64_t rows = get_u64(in, bin);
    std::uint64_t cols = ndims == 2 ? get_u64(in, bin) : 1;
    std::vector<double> values(rows * cols);
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw DataError("truncated checkpoint '" + bin.string() + "'");
    }
    tensors.push_back({std::move(name), Tensor::from(rows, cols, std::move(values), true)});
  }
  return tensors;
}

nlohmann::json load_checkpoint_manifest(const fs::path& stem) {
  std::ifstream in(with_ext(stem, ".json"));
  if (!in) throw DataError("missing checkpoint manifest '" + with_ext(stem, ".json").string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace seqrec
