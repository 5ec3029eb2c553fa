#include "tgl/nn.hpp"

#include <cmath>

#include "tgl/binio.hpp"
#include "tgl/errors.hpp"
#include "tgl/json_io.hpp"

namespace tgl::nn {

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
  if (states_.empty()) {
    states_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      states_[i].m = Tensor(params[i]->value.shape);
      states_[i].v = Tensor(params[i]->value.shape);
    }
  }
  if (states_.size() != params.size())
    throw TrainingError("adam: parameter set changed between steps");

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.grad.same_shape(p.value)) throw TrainingError("adam: grad shape mismatch for " + p.name);
    AdamState& s = states_[i];
    for (size_t j = 0; j < p.value.data.size(); ++j) {
      const double g = p.grad.data[j];
      const double m = cfg_.beta1 * s.m.data[j] + (1.0 - cfg_.beta1) * g;
      const double v = cfg_.beta2 * s.v.data[j] + (1.0 - cfg_.beta2) * g * g;
      s.m.data[j] = static_cast<float>(m);
      s.v.data[j] = static_cast<float>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.value.data[j] = static_cast<float>(p.value.data[j] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

// ALTH layout: magic | u32 version | u32 tensor count
//   per tensor: u32 name length + name | u32 rank | u32 dims | f32 payload
// then zero or more sections: 4-char tag | u32 length | bytes.

std::string serialize_checkpoint(
    const std::vector<const Parameter*>& params,
    const std::vector<std::pair<std::string, std::string>>& sections) {
  std::string buf;
  buf += "ALTH";
  binio::put_u32(buf, 1);
  binio::put_u32(buf, static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    binio::put_bytes(buf, p->name);
    binio::put_u32(buf, static_cast<uint32_t>(p->value.shape.size()));
    for (int64_t d : p->value.shape) binio::put_u32(buf, static_cast<uint32_t>(d));
    for (float v : p->value.data) binio::put_f32(buf, v);
  }
  for (const auto& [tag, bytes] : sections) {
    if (tag.size() != 4) throw DataError("checkpoint section tag must be 4 chars");
    buf += tag;
    binio::put_bytes(buf, bytes);
  }
  return buf;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  binio::Reader r(bytes);
  if (r.raw(4) != "ALTH") throw DataError("bad checkpoint magic; expected ALTH");
  const uint32_t version = r.u32();
  if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = r.u32();
  Checkpoint ckpt;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes();
    const uint32_t rank = r.u32();
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = r.u32();
    Tensor t(shape);
    for (auto& v : t.data) v = r.f32();
    if (!ckpt.tensors.emplace(std::move(name), std::move(t)).second)
      throw DataError("duplicate tensor name in checkpoint");
  }
  while (r.remaining() > 0) {
    std::string tag = r.raw(4);
    ckpt.sections.emplace_back(std::move(tag), r.bytes());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params,
                     const std::vector<std::pair<std::string, std::string>>& sections) {
  write_text_file(path, serialize_checkpoint(params, sections));
}

Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_text_file(path));
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw DataError("checkpoint missing tensor: " + p->name);
    if (it->second.shape != p->value.shape)
      throw DataError("checkpoint shape mismatch for " + p->name);
    p->value = it->second;
    p->grad = Tensor(p->value.shape);
  }
}

}  // namespace tgl::nn
