#include "argan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace argan {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'R', 'G', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (b_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated reading " + what + " at byte offset " + std::to_string(pos_) +
                            " (need " + std::to_string(n) + " bytes, " + std::to_string(b_.size() - pos_) +
                            " left)");
    }
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n, const std::string& what) {
    need(n * 4, what);
    std::memcpy(dst, b_.data() + pos_, n * 4);
    pos_ += n * 4;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ArganConfig& cfg, const NamedTensors<float>& tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = serialize_config(cfg);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = t.data();
    const auto* raw = reinterpret_cast<const std::uint8_t*>(data.data());
    out.insert(out.end(), raw, raw + data.size() * 4);
  }
  return out;
}

CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::string magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic at byte offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const std::uint32_t len = r.u32("config length");
  const std::size_t config_at = r.pos();
  CheckpointData out;
  try {
    out.config = parse_config(r.bytes(len, "config"));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint: config at byte offset " + std::to_string(config_at) + ": " + e.what());
  }
  while (!r.done()) {
    const std::size_t at = r.pos();
    const std::uint32_t name_len = r.u32("tensor name length");
    const std::string name = r.bytes(name_len, "tensor name");
    const std::uint32_t ndim = r.u32("rank of " + name);
    if (ndim > 8) {
      throw CheckpointError("checkpoint: tensor " + name + " has rank " + std::to_string(ndim) +
                            " at byte offset " + std::to_string(at));
    }
    Shape shape;
    for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(r.u32("dims of " + name)));
    Tensor<float> t = Tensor<float>::zeros(shape);
    r.floats(t.data_mut().data(), t.numel(), "payload of " + name);
    out.tensors.emplace_back(name, std::move(t));
  }
  return out;
}

void save_checkpoint(const std::string& path, const ArganConfig& cfg, const NamedTensors<float>& tensors) {
  const auto bytes = encode_checkpoint(cfg, tensors);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint to " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

void restore_tensors(const NamedTensors<float>& targets, const NamedTensors<float>& loaded) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : loaded) {
    if (!by_name.emplace(name, &t).second) throw CheckpointError("checkpoint: duplicate tensor " + name);
  }
  for (const auto& [name, target] : targets) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: missing tensor " + name);
    if (it->second->shape() != target.shape()) {
      throw CheckpointError("checkpoint: tensor " + name + " has shape " + shape_str(it->second->shape()) +
                            ", model expects " + shape_str(target.shape()));
    }
  }
  if (by_name.size() != targets.size()) {
    std::map<std::string, int> expected;
    for (const auto& [name, t] : targets) expected[name] = 1;
    for (const auto& [name, t] : loaded) {
      if (!expected.count(name)) throw CheckpointError("checkpoint: unexpected tensor " + name);
    }
  }
  for (const auto& [name, target] : targets) {
    const auto src = by_name[name]->data();
    Tensor<float> handle = target;
    auto dst = handle.data_mut();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace argan
