#include "specmask/checkpoint.hpp"

#include <sstream>
#include <stdexcept>

#include "specmask/fsio.hpp"

namespace specmask {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', 'K'};
constexpr uint8_t kVersion = 1;

}  // namespace

std::string Checkpoint::serialize() const {
  std::string out;
  out.append(kMagic, 4);
  io::put_u8(out, kVersion);
  const std::string desc = arch.descriptor();
  io::put_u32le(out, static_cast<uint32_t>(desc.size()));
  out += desc;
  for (const Tensor& w : weights) {
    for (double v : w.data()) io::put_f64le(out, v);
  }
  // Trailing metadata: fixed key order keeps serialization canonical.
  std::ostringstream meta;
  meta << "augment=" << augment.describe() << "\n";
  meta << "best_epoch=" << best_epoch << "\n";
  meta << "best_val_loss=" << io::format_double(best_val_loss) << "\n";
  meta << "mean=" << io::format_double(mean) << "\n";
  meta << "seed=" << seed << "\n";
  meta << "std=" << io::format_double(stddev) << "\n";
  out += meta.str();
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  size_t pos = 0;
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic (expected SMCK)");
  }
  pos = 4;
  const uint8_t version = io::get_u8(bytes, pos);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const uint32_t desc_len = io::get_u32le(bytes, pos);
  if (pos + desc_len > bytes.size()) {
    throw std::runtime_error("checkpoint: truncated descriptor at offset " + std::to_string(pos));
  }
  Checkpoint ck;
  ck.arch = Architecture::parse(bytes.substr(pos, desc_len));
  pos += desc_len;

  for (const auto& shape : ck.arch.param_shapes()) {
    Tensor w = Tensor::zeros(shape);
    for (double& v : w.mutable_data()) v = io::get_f64le(bytes, pos);
    ck.weights.push_back(std::move(w));
  }

  std::istringstream meta(bytes.substr(pos));
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("checkpoint: malformed metadata line: " + line);
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "augment") ck.augment = AugmentPolicy::parse(val);
    else if (key == "best_epoch") ck.best_epoch = std::stoi(val);
    else if (key == "best_val_loss") ck.best_val_loss = io::parse_double(val);
    else if (key == "mean") ck.mean = io::parse_double(val);
    else if (key == "seed") ck.seed = std::stoull(val);
    else if (key == "std") ck.stddev = io::parse_double(val);
    else throw std::runtime_error("checkpoint: unknown metadata key: " + key);
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  io::atomic_write(path, serialize());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return deserialize(io::read_bytes(path));
}

}  // namespace specmask
