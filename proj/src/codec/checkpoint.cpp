#include <bit>
#include <cstring>

#include "mjscc/codec.hpp"

namespace mjscc::codec {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint64_t le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'M', 'J', 'S', 'C'};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.text(ckpt.config_text);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const ParamBlob& p : ckpt.params) {
    w.text(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) w.u64(d);
    for (double v : p.values) w.f64(v);
  }
  w.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    w.u64(ckpt.optimizer.step);
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      for (double v : ckpt.optimizer.m.at(i)) w.f64(v);
      for (double v : ckpt.optimizer.v.at(i)) w.f64(v);
    }
  }
  return w.take();
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw CheckpointError("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_text = r.text();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamBlob p;
    p.name = r.text();
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      p.shape.push_back(static_cast<std::size_t>(r.u64()));
      n *= p.shape.back();
    }
    if (n > bytes.size() / 8) throw CheckpointError("checkpoint: blob '" + p.name + "' too large");
    p.values.resize(n);
    for (double& v : p.values) v = r.f64();
    ckpt.params.push_back(std::move(p));
  }
  ckpt.has_optimizer = r.u8() != 0;
  if (ckpt.has_optimizer) {
    ckpt.optimizer.step = r.u64();
    for (const ParamBlob& p : ckpt.params) {
      std::vector<double> m(p.values.size()), v(p.values.size());
      for (double& e : m) e = r.f64();
      for (double& e : v) e = r.f64();
      ckpt.optimizer.m.push_back(std::move(m));
      ckpt.optimizer.v.push_back(std::move(v));
    }
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes at " + std::to_string(r.pos()));
  return ckpt;
}

Checkpoint make_checkpoint(const std::string& config_text, const ParamSet& params,
                           const OptimizerBlob* optimizer) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  for (const NamedParam& p : params.entries()) {
    ckpt.params.push_back(
        {p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  if (optimizer != nullptr) {
    if (optimizer->m.size() != ckpt.params.size() || optimizer->v.size() != ckpt.params.size()) {
      throw ContractError("make_checkpoint: optimizer state does not match parameters");
    }
    ckpt.has_optimizer = true;
    ckpt.optimizer = *optimizer;
  }
  return ckpt;
}

void restore_params(const Checkpoint& ckpt, const ParamSet& params) {
  const auto& entries = params.entries();
  if (entries.size() != ckpt.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.params.size()) +
                          " parameters, model has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ParamBlob& blob = ckpt.params[i];
    if (blob.name != entries[i].name || blob.shape != entries[i].tensor.shape()) {
      throw CheckpointError("checkpoint parameter '" + blob.name + "' " + shape_str(blob.shape) +
                            " does not match '" + entries[i].name + "' " +
                            shape_str(entries[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor t = entries[i].tensor;
    auto dst = t.mutable_data();
    std::copy(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), dst.begin());
  }
}

}  // namespace mjscc::codec
