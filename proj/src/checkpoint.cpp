// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "pedebias/errors.hpp"

namespace pedebias {

namespace {

constexpr char kCoreMagic[8] = {'P', 'E', 'D', 'B', 'C', 'O', 'R', 'E'};
constexpr char kOverlayMagic[8] = {'P', 'E', 'D', 'B', 'O', 'V', 'L', 'Y'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw DataError("checkpoint: cannot write " + path.string());
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void tensor(const Matrix& m) {
    u64(m.rows);
    u64(m.cols);
    for (double x : m.data) f64(x);
  }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("checkpoint: write failed for " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("checkpoint: cannot read " + path.string());
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw DataError("checkpoint: truncated file " + path_.string());
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void tensor_into(Matrix& m) {
    const auto r = u64();
    const auto c = u64();
    if (r != m.rows || c != m.cols) {
      throw DataError("checkpoint: tensor shape " + std::to_string(r) + "x" + std::to_string(c) + " does not match expected " +
                      std::to_string(m.rows) + "x" + std::to_string(m.cols) + " in " + path_.string());
    }
    for (auto& x : m.data) x = f64();
  }
  void magic(const char (&expected)[8]) {
    char m[8];
    bytes(m, 8);
    if (std::memcmp(m, expected, 8) != 0) throw DataError("checkpoint: bad magic header in " + path_.string());
    const auto version = u32();
    if (version != kCheckpointVersion) {
      throw DataError("checkpoint: unsupported version " + std::to_string(version) + " in " + path_.string());
    }
  }
  void expect_end() {
    char c;
    in_.read(&c, 1);
    if (in_.gcount() != 0) throw DataError("checkpoint: trailing bytes in " + path_.string());
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_core(const std::filesystem::path& path, const FrozenCore& core) {
  Writer w(path);
  w.bytes(kCoreMagic, 8);
  w.u32(kCheckpointVersion);
  const auto& c = core.config;
  for (std::size_t v : {c.layers, c.d, c.heads, c.max_len, c.vocab_size, c.ffn_dim()}) w.u64(v);
  w.u64(c.objective == Objective::Masked ? 0 : 1);
  w.f64(c.ln_eps);
  w.f64(c.init_std);
  std::uint64_t count = 0;
  core.for_each_tensor([&](const Matrix&) { ++count; });
  w.u64(count);
  core.for_each_tensor([&](const Matrix& m) { w.tensor(m); });
  w.finish();
}

FrozenCore load_core(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kCoreMagic);
  ModelConfig c;
  c.layers = r.u64();
  c.d = r.u64();
  c.heads = r.u64();
  c.max_len = r.u64();
  c.vocab_size = r.u64();
  c.d_ff = r.u64();
  c.objective = r.u64() == 0 ? Objective::Masked : Objective::Causal;
  c.ln_eps = r.f64();
  c.init_std = r.f64();
  c.validate();
  // Shapes come from a zero-initialized core with the same config.
  FrozenCore core = FrozenCore::initialize(c, 0).zeros_like();
  std::uint64_t expected = 0;
  core.for_each_tensor([&](const Matrix&) { ++expected; });
  if (r.u64() != expected) throw DataError("checkpoint: tensor count mismatch in " + path.string());
  core.for_each_tensor([&](Matrix& m) { r.tensor_into(m); });
  r.expect_end();
  return core;
}

void save_overlay(const std::filesystem::path& path, const TuningOverlay& overlay) {
  Writer w(path);
  w.bytes(kOverlayMagic, 8);
  w.u32(kCheckpointVersion);
  const auto& s = overlay.spec;
  w.u64(static_cast<std::uint64_t>(s.method));
  w.u64(s.length);
  w.u64(s.reduction);
  w.u64(static_cast<std::uint64_t>(s.activation));
  w.u64(s.adapter_layer_norm ? 1 : 0);
  std::string fp = overlay.core_fingerprint;
  fp.resize(64, '0');
  w.bytes(fp.data(), 64);
  std::uint64_t count = 0;
  overlay.for_each_tensor([&](const Matrix&) { ++count; });
  w.u64(count);
  overlay.for_each_tensor([&](const Matrix& m) { w.tensor(m); });
  w.finish();
}

TuningOverlay load_overlay(const std::filesystem::path& path, const FrozenCore& core) {
  Reader r(path);
  r.magic(kOverlayMagic);
  MethodSpec s;
  const auto method = r.u64();
  if (method > static_cast<std::uint64_t>(Method::Adapter)) throw DataError("checkpoint: unknown overlay method");
  s.method = static_cast<Method>(method);
  s.length = r.u64();
  s.reduction = r.u64();
  const auto act = r.u64();
  if (act > static_cast<std::uint64_t>(Activation::Tanh)) throw DataError("checkpoint: unknown activation");
  s.activation = static_cast<Activation>(act);
  s.adapter_layer_norm = r.u64() != 0;
  std::string fp(64, '\0');
  r.bytes(fp.data(), 64);
  const std::string current = core.fingerprint();
  if (fp != current) {
    throw DataError("checkpoint: overlay " + path.string() + " was trained against core " + fp + " but the loaded core is " +
                    current);
  }
  TuningOverlay o = attach(core, s, 0);
  std::uint64_t expected = 0;
  o.for_each_tensor([&](const Matrix&) { ++expected; });
  if (r.u64() != expected) throw DataError("checkpoint: overlay tensor count mismatch in " + path.string());
  o.for_each_tensor([&](Matrix& m) { r.tensor_into(m); });
  r.expect_end();
  return o;
}

}  // namespace pedebias
