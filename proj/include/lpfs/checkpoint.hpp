#pragma once

// Binary checkpoint container.
//
// Layout (little-endian; u8/u32/u64 unsigned, f64 IEEE-754 binary64):
//   magic      8 bytes  "LPFSCKPT"
//   version    u32      = 1
//   schema     u64 n_fields, then per field {str name, u64 cardinality,
//              u64 width}; u64 continuous_dim; u64 dense_rep_dim; u8 cross
//   slots      u64 n, then per slot {u8 kind, u64 first, u64 second}
//   tables     u64 n, then per table a matrix
//   dense_mlp  layer list
//   top_mlp    layer list
//   adagrad    f64 lr, f64 eps, u64 n + matrices, dense layer list,
//              top layer list
//   step       u64 global step
//   gates      u8 present; if 1: u8 kind, f64 epsilon, f64 alpha,
//              vec x, vec velocity, vec init_norm, u8 rms_rescale,
//              f64 rms_value, u8 rms_frozen
// where str = u64 length + bytes, vec = u64 n + n f64,
// matrix = u64 rows + u64 cols + rows*cols f64 in column-major order,
// layer list = u64 n + n {matrix weight, vec bias}.
//
// Tensors are stored bit-for-bit, so loading reproduces forward outputs exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "lpfs/ctr_model.hpp"
#include "lpfs/errors.hpp"
#include "lpfs/gates.hpp"

namespace lpfs {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  ModelParams model;
  std::optional<GateState> gates;
  std::int64_t global_step = 0;
};

inline constexpr char kCheckpointMagic[8] = {'L', 'P', 'F', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(std::span<const double> v) {
    u64(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  void layers(const std::vector<Linear>& ls) {
    u64(ls.size());
    for (const Linear& l : ls) {
      matrix(l.weight);
      vec(std::span<const double>(l.bias.data(), static_cast<std::size_t>(l.bias.size())));
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw DataError("checkpoint is truncated");
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::uint64_t count(std::uint64_t limit = (1ull << 40)) {
    const std::uint64_t n = u64();
    if (n > limit) throw DataError("checkpoint contains an implausible length");
    return n;
  }
  std::string str() {
    std::string s(count(1u << 20), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw DataError("checkpoint is truncated");
    return s;
  }
  std::vector<double> vec() {
    std::vector<double> v(count());
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in_) throw DataError("checkpoint is truncated");
    return v;
  }
  Matrix matrix() {
    const auto rows = static_cast<Eigen::Index>(count());
    const auto cols = static_cast<Eigen::Index>(count());
    Matrix m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in_) throw DataError("checkpoint is truncated");
    return m;
  }
  std::vector<Linear> layers() {
    std::vector<Linear> ls(count(1u << 16));
    for (Linear& l : ls) {
      l.weight = matrix();
      const std::vector<double> b = vec();
      l.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    return ls;
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  detail::Writer w(out);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  w.pod(kCheckpointVersion);
  const ModelParams& m = ckpt.model;
  const FeatureSchema& s = m.schema;
  w.u64(s.categorical_fields.size());
  for (const auto& f : s.categorical_fields) {
    w.str(f.name);
    w.u64(f.cardinality);
    w.u64(f.embedding_dim);
  }
  w.u64(s.continuous_dim);
  w.u64(s.dense_rep_dim);
  w.pod<std::uint8_t>(s.cross_enabled ? 1 : 0);
  w.u64(m.slots.size());
  for (const SlotRef& slot : m.slots) {
    w.pod(static_cast<std::uint8_t>(slot.kind));
    w.u64(slot.first);
    w.u64(slot.second);
  }
  w.u64(m.tables.size());
  for (const Matrix& t : m.tables) w.matrix(t);
  w.layers(m.dense_mlp.layers);
  w.layers(m.top_mlp.layers);
  w.f64(m.adagrad.config.lr);
  w.f64(m.adagrad.config.epsilon_stability);
  w.u64(m.adagrad.tables.size());
  for (const Matrix& t : m.adagrad.tables) w.matrix(t);
  w.layers(m.adagrad.dense);
  w.layers(m.adagrad.top);
  w.pod(static_cast<std::uint64_t>(ckpt.global_step));
  w.pod<std::uint8_t>(ckpt.gates ? 1 : 0);
  if (ckpt.gates) {
    const GateState& g = *ckpt.gates;
    w.pod(static_cast<std::uint8_t>(g.kind));
    w.f64(g.epsilon);
    w.f64(g.alpha);
    w.vec(g.x);
    w.vec(g.velocity);
    w.vec(g.init_norm);
    w.pod<std::uint8_t>(g.rms_rescale ? 1 : 0);
    w.f64(g.rms_value);
    w.pod<std::uint8_t>(g.rms_frozen ? 1 : 0);
  }
  if (!out) throw DataError("failed to write checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not an lpfs checkpoint (bad magic)");
  detail::Reader r(in);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ModelParams& m = ckpt.model;
  FeatureSchema& s = m.schema;
  s.categorical_fields.resize(r.count(1u << 20));
  for (auto& f : s.categorical_fields) {
    f.name = r.str();
    f.cardinality = r.u64();
    f.embedding_dim = r.u64();
  }
  s.continuous_dim = r.u64();
  s.dense_rep_dim = r.u64();
  s.cross_enabled = r.pod<std::uint8_t>() != 0;
  m.slots.resize(r.count(1u << 24));
  for (SlotRef& slot : m.slots) {
    const auto kind = r.pod<std::uint8_t>();
    if (kind > 2) throw DataError("checkpoint has an unknown slot kind");
    slot.kind = static_cast<SlotKind>(kind);
    slot.first = r.u64();
    slot.second = r.u64();
  }
  m.tables.resize(r.count(1u << 20));
  for (Matrix& t : m.tables) t = r.matrix();
  m.dense_mlp.layers = r.layers();
  m.top_mlp.layers = r.layers();
  m.adagrad.config.lr = r.f64();
  m.adagrad.config.epsilon_stability = r.f64();
  m.adagrad.tables.resize(r.count(1u << 20));
  for (Matrix& t : m.adagrad.tables) t = r.matrix();
  m.adagrad.dense = r.layers();
  m.adagrad.top = r.layers();
  ckpt.global_step = static_cast<std::int64_t>(r.u64());
  if (r.pod<std::uint8_t>() != 0) {
    GateState g;
    const auto kind = r.pod<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(GateKind::kSl0SinAtan)) throw DataError("checkpoint has an unknown gate kind");
    g.kind = static_cast<GateKind>(kind);
    g.epsilon = r.f64();
    g.alpha = r.f64();
    g.x = r.vec();
    g.velocity = r.vec();
    g.init_norm = r.vec();
    g.rms_rescale = r.pod<std::uint8_t>() != 0;
    g.rms_value = r.f64();
    g.rms_frozen = r.pod<std::uint8_t>() != 0;
    g.validate();
    ckpt.gates = std::move(g);
  }
  s.validate();
  if (m.tables.size() != s.field_count()) throw DataError("checkpoint table count does not match its schema");
  return ckpt;
}

inline std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ckpt);
  return std::move(out).str();
}

inline Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_checkpoint(in);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace lpfs
