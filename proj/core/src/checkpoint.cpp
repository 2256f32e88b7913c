#include "mmt/checkpoint.hpp"

#include "binio.hpp"

namespace mmt {

namespace {
constexpr char kMagic[4] = {'M', 'M', 'T', 'C'};
constexpr uint32_t kVersion = 1;
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<uint8_t> payload;
  const MmtConfig& c = ckpt.config;
  binio::put_u32(payload, static_cast<uint32_t>(c.n_contrasts));
  binio::put_u32(payload, static_cast<uint32_t>(c.base_dim));
  binio::put_u32(payload, static_cast<uint32_t>(c.n_scales));
  binio::put_u32(payload, static_cast<uint32_t>(c.img_h));
  binio::put_u32(payload, static_cast<uint32_t>(c.img_w));
  binio::put_u32(payload, static_cast<uint32_t>(c.window_h));
  binio::put_u32(payload, static_cast<uint32_t>(c.window_w));
  binio::put_u32(payload, static_cast<uint32_t>(c.patch));
  binio::put_u32(payload, static_cast<uint32_t>(c.heads.size()));
  for (int64_t h : c.heads) binio::put_u32(payload, static_cast<uint32_t>(h));

  binio::put_u32(payload, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    binio::put_bytes(payload, name);
    binio::put_u32(payload, static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) binio::put_u64(payload, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < t.numel(); ++i) binio::put_f64(payload, t.data()[i]);
  }

  binio::put_u32(payload, static_cast<uint32_t>(ckpt.aux.size()));
  for (const auto& [k, v] : ckpt.aux) {
    binio::put_bytes(payload, k);
    binio::put_bytes(payload, v);
  }

  std::vector<uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  binio::put_u32(bytes, kVersion);
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  binio::put_u32(bytes, binio::crc32_of(payload.data(), payload.size()));
  binio::write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<uint8_t> bytes = binio::read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ValidationError("not a checkpoint file (bad magic): " + path);
  binio::Reader header(bytes.data() + 4, bytes.size() - 4);
  uint32_t version = header.u32();
  if (version != kVersion)
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));

  const uint8_t* payload = bytes.data() + 8;
  size_t payload_size = bytes.size() - 12;
  binio::Reader tail(bytes.data() + 8 + payload_size, 4);
  uint32_t stored_crc = tail.u32();
  if (binio::crc32_of(payload, payload_size) != stored_crc)
    throw ValidationError("checkpoint CRC mismatch (corrupt file): " + path);

  binio::Reader r(payload, payload_size);
  Checkpoint ckpt;
  MmtConfig& c = ckpt.config;
  c.n_contrasts = r.u32();
  c.base_dim = r.u32();
  c.n_scales = r.u32();
  c.img_h = r.u32();
  c.img_w = r.u32();
  c.window_h = r.u32();
  c.window_w = r.u32();
  c.patch = r.u32();
  uint32_t n_heads = r.u32();
  c.heads.clear();
  for (uint32_t i = 0; i < n_heads; ++i) c.heads.push_back(r.u32());
  c.validate();

  uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    uint32_t ndim = r.u32();
    Shape shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int64_t>(r.u64()));
    Tensor t(shape);
    for (int64_t j = 0; j < t.numel(); ++j) t.data()[j] = r.f64();
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }

  uint32_t n_aux = r.u32();
  for (uint32_t i = 0; i < n_aux; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    ckpt.aux.emplace(std::move(k), std::move(v));
  }
  if (r.remaining() != 0) throw ValidationError("trailing bytes in checkpoint: " + path);
  return ckpt;
}

void load_into_registry(ParamRegistry& reg, const Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& [name, t] : reg.items()) {
    const Tensor* src = ckpt.find(prefix + name);
    if (!src || src->shape() != t.shape())
      throw ValidationError("checkpoint is missing tensor '" + prefix + name + "'");
    reg.at(name).data() = src->data();
  }
}

MmtModel load_model(const Checkpoint& ckpt) {
  MmtModel model(ckpt.config, 0);
  load_into_registry(model.params(), ckpt, "model.");
  return model;
}

}  // namespace mmt
