// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"

namespace pedebias {

namespace {

using kernels::matmul;
using kernels::matmul_nt;
using kernels::matmul_tn;

void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps, LayerNormTrace& trace,
                        Matrix& out) {
  const std::size_t n = x.cols;
  trace.normalized = Matrix(x.rows, n);
  trace.inv_std.assign(x.rows, 0.0);
  out = Matrix(x.rows, n);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto xi = x.row(i);
    double mean = 0.0;
    for (double v : xi) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xi) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    trace.inv_std[i] = inv;
    auto ni = trace.normalized.row(i);
    auto oi = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      ni[j] = (xi[j] - mean) * inv;
      oi[j] = gain.data[j] * ni[j] + bias.data[j];
    }
  }
}

// dx from dy; accumulates gain/bias gradients when the pointers are set.
void layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormTrace& trace, Matrix& dx, Matrix* dgain,
                         Matrix* dbias) {
  const std::size_t n = dy.cols;
  dx = Matrix(dy.rows, n);
  std::vector<double> dn(n);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    auto dyi = dy.row(i);
    auto ni = trace.normalized.row(i);
    double mean_dn = 0.0;
    double mean_dn_n = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dn[j] = dyi[j] * gain.data[j];
      mean_dn += dn[j];
      mean_dn_n += dn[j] * ni[j];
      if (dgain) dgain->data[j] += dyi[j] * ni[j];
      if (dbias) dbias->data[j] += dyi[j];
    }
    mean_dn /= static_cast<double>(n);
    mean_dn_n /= static_cast<double>(n);
    auto dxi = dx.row(i);
    const double inv = trace.inv_std[i];
    for (std::size_t j = 0; j < n; ++j) dxi[j] = inv * (dn[j] - mean_dn - ni[j] * mean_dn_n);
  }
}

double activate(Activation a, double x) { return a == Activation::Relu ? (x > 0.0 ? x : 0.0) : std::tanh(x); }

// Derivative expressed through the pre-activation and activation values.
double activate_grad(Activation a, double pre, double act) {
  return a == Activation::Relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - act * act;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

void add_into(Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

Matrix column_block(const Matrix& m, std::size_t col0, std::size_t width) {
  Matrix out(m.rows, width);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols + col0), width,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return out;
}

void check_tokens(const FrozenCore& core, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= core.config.vocab_size) {
      throw DataError("transformer.forward: token id " + std::to_string(t) + " outside vocabulary of size " +
                      std::to_string(core.config.vocab_size));
    }
  }
}

void check_lengths(const FrozenCore& core, const TuningOverlay* overlay, std::size_t text_len) {
  if (text_len == 0) throw DataError("transformer.forward: empty input");
  std::size_t budget = text_len;
  if (overlay) budget += overlay->prompt_length() + overlay->prefix_length();
  if (budget > core.config.max_len) {
    throw DataError("transformer.forward: length " + std::to_string(text_len) + " plus prompt/prefix budget exceeds max_len " +
                    std::to_string(core.config.max_len));
  }
}

void layer_forward(const ModelConfig& cfg, const LayerParams& p, const TuningOverlay* overlay, std::size_t layer_index,
                   std::size_t prefix_len, LayerTrace& t) {
  const std::size_t s = t.input.rows;
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool causal = cfg.objective == Objective::Causal;
  const PrefixParams* prefix = overlay ? overlay->prefix() : nullptr;

  t.q.resize(cfg.heads);
  t.k.resize(cfg.heads);
  t.v.resize(cfg.heads);
  t.attn.resize(cfg.heads);
  t.heads = Matrix(s, cfg.d);
  Matrix kh, vh;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    matmul(t.input, p.wq[h], t.q[h]);
    matmul(t.input, p.wk[h], kh);
    matmul(t.input, p.wv[h], vh);
    Matrix& kx = t.k[h];
    Matrix& vx = t.v[h];
    kx = Matrix(prefix_len + s, dh);
    vx = Matrix(prefix_len + s, dh);
    if (prefix_len > 0) {
      std::copy(prefix->keys[layer_index][h].data.begin(), prefix->keys[layer_index][h].data.end(), kx.data.begin());
      std::copy(prefix->values[layer_index][h].data.begin(), prefix->values[layer_index][h].data.end(), vx.data.begin());
    }
    std::copy(kh.data.begin(), kh.data.end(), kx.data.begin() + static_cast<std::ptrdiff_t>(prefix_len * dh));
    std::copy(vh.data.begin(), vh.data.end(), vx.data.begin() + static_cast<std::ptrdiff_t>(prefix_len * dh));

    Matrix& a = t.attn[h];
    matmul_nt(t.q[h], kx, a);
    for (std::size_t i = 0; i < s; ++i) {
      auto row = a.row(i);
      const std::size_t visible = causal ? prefix_len + i + 1 : row.size();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        row[j] *= scale;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (std::size_t j = 0; j < visible; ++j) row[j] /= z;
      for (std::size_t j = visible; j < row.size(); ++j) row[j] = 0.0;
    }
    Matrix oh;
    matmul(a, vx, oh);
    for (std::size_t i = 0; i < s; ++i) {
      std::copy_n(oh.data.begin() + static_cast<std::ptrdiff_t>(i * dh), dh,
                  t.heads.data.begin() + static_cast<std::ptrdiff_t>(i * cfg.d + h * dh));
    }
  }

  Matrix h2;
  matmul(t.heads, p.wo, h2);
  layer_norm_forward(add(t.input, h2), p.ln1_gain, p.ln1_bias, cfg.ln_eps, t.ln1, t.h3);

  matmul(t.h3, p.w1, t.ffn_pre);
  kernels::add_row_vector(t.ffn_pre, p.b1);
  t.ffn_act = t.ffn_pre;
  for (auto& x : t.ffn_act.data) x = x > 0.0 ? x : 0.0;
  matmul(t.ffn_act, p.w2, t.h4);
  kernels::add_row_vector(t.h4, p.b2);

  t.h4_out = t.h4;
  if (const AdapterParams* ad = overlay ? overlay->adapter() : nullptr) {
    const AdapterLayer& al = ad->layers[layer_index];
    if (ad->layer_norm) {
      layer_norm_forward(t.h4, al.ln_gain, al.ln_bias, cfg.ln_eps, t.adapter_ln, t.adapter_in);
    } else {
      t.adapter_in = t.h4;
    }
    matmul(t.adapter_in, al.down, t.adapter_pre);
    kernels::add_row_vector(t.adapter_pre, al.down_b);
    t.adapter_act = t.adapter_pre;
    for (auto& x : t.adapter_act.data) x = activate(ad->activation, x);
    matmul(t.adapter_act, al.up, t.h4_out, /*accumulate=*/true);
    kernels::add_row_vector(t.h4_out, al.up_b);
  }

  layer_norm_forward(add(t.h3, t.h4_out), p.ln2_gain, p.ln2_bias, cfg.ln_eps, t.ln2, t.h5);
}

ForwardTrace run_forward(const FrozenCore& core, const TuningOverlay* overlay, const Matrix& embeddings,
                         std::size_t text_offset) {
  const auto& cfg = core.config;
  const std::size_t s = embeddings.rows;
  if (s > cfg.max_len) throw DataError("transformer.forward: sequence exceeds max_len");
  ForwardTrace tr;
  tr.prompt_len = text_offset;
  tr.prefix_len = overlay ? overlay->prefix_length() : 0;
  tr.text_len = s - text_offset;
  tr.layers.resize(cfg.layers);

  Matrix h = embeddings;
  for (std::size_t i = 0; i < s; ++i) {
    auto hi = h.row(i);
    auto pi = core.pos_emb.row(i);
    for (std::size_t j = 0; j < cfg.d; ++j) hi[j] += pi[j];
  }
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    tr.layers[l].input = l == 0 ? std::move(h) : tr.layers[l - 1].h5;
    layer_forward(cfg, core.layers[l], overlay, l, tr.prefix_len, tr.layers[l]);
  }
  const Matrix& top = tr.layers.back().h5;
  Matrix text(tr.text_len, cfg.d);
  std::copy(top.data.begin() + static_cast<std::ptrdiff_t>(text_offset * cfg.d), top.data.end(), text.data.begin());
  matmul(text, core.out_w, tr.logits);
  kernels::add_row_vector(tr.logits, core.out_b);
  return tr;
}

}  // namespace

ForwardTrace trace_forward(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TokenId> tokens) {
  check_lengths(core, overlay, tokens.size());
  check_tokens(core, tokens);
  const auto& cfg = core.config;
  const std::size_t l = overlay ? overlay->prompt_length() : 0;
  Matrix x(l + tokens.size(), cfg.d);
  if (l > 0) std::copy(overlay->prompt()->prompt.data.begin(), overlay->prompt()->prompt.data.end(), x.data.begin());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto src = core.tok_emb.row(static_cast<std::size_t>(tokens[t]));
    std::copy(src.begin(), src.end(), x.row(l + t).begin());
  }
  ForwardTrace tr = run_forward(core, overlay, x, l);
  tr.tokens.assign(tokens.begin(), tokens.end());
  return tr;
}

ForwardTrace trace_forward_embeddings(const FrozenCore& core, const TuningOverlay* overlay, const Matrix& embeddings,
                                      std::size_t text_offset) {
  if (embeddings.cols != core.config.d) throw DataError("transformer.forward: embedding width mismatch");
  if (text_offset >= embeddings.rows) throw DataError("transformer.forward: no text rows");
  if (overlay && overlay->prompt_length() > 0) {
    throw DataError("transformer.forward: explicit embeddings cannot be combined with a prompt overlay");
  }
  return run_forward(core, overlay, embeddings, text_offset);
}

Matrix forward(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TokenId> tokens) {
  return trace_forward(core, overlay, tokens).logits;
}

Matrix final_hidden(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TokenId> tokens) {
  ForwardTrace tr = trace_forward(core, overlay, tokens);
  const Matrix& top = tr.layers.back().h5;
  Matrix out(tr.text_len, core.config.d);
  std::copy(top.data.begin() + static_cast<std::ptrdiff_t>(tr.prompt_len * core.config.d), top.data.end(),
            out.data.begin());
  return out;
}

ModelGrads make_grads(const FrozenCore& core, const TuningOverlay* overlay) {
  ModelGrads g;
  g.has_core = overlay == nullptr || overlay->is_full();
  if (g.has_core) g.core = core.zeros_like();
  if (overlay) g.overlay = overlay->zeros_like();
  return g;
}

void backward(const FrozenCore& core, const TuningOverlay* overlay, const ForwardTrace& tr, const Matrix& dlogits,
              ModelGrads& grads) {
  const auto& cfg = core.config;
  const std::size_t s = tr.prompt_len + tr.text_len;
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool want_core = grads.has_core;
  const bool want_prompt = overlay && overlay->prompt_length() > 0;
  const AdapterParams* adapter = overlay ? overlay->adapter() : nullptr;
  FrozenCore* gc = want_core ? &grads.core : nullptr;

  // Output head.
  const Matrix& top = tr.layers.back().h5;
  Matrix text(tr.text_len, cfg.d);
  std::copy(top.data.begin() + static_cast<std::ptrdiff_t>(tr.prompt_len * cfg.d), top.data.end(), text.data.begin());
  if (gc) {
    matmul_tn(text, dlogits, gc->out_w, true);
    kernels::column_sums(dlogits, gc->out_b, true);
  }
  Matrix dtext;
  matmul_nt(dlogits, core.out_w, dtext);
  Matrix dh5(s, cfg.d);
  std::copy(dtext.data.begin(), dtext.data.end(), dh5.data.begin() + static_cast<std::ptrdiff_t>(tr.prompt_len * cfg.d));

  for (std::size_t li = cfg.layers; li-- > 0;) {
    const LayerParams& p = core.layers[li];
    const LayerTrace& t = tr.layers[li];
    LayerParams* gp = gc ? &gc->layers[li] : nullptr;
    // Below the lowest adapter nothing tunable remains unless the core,
    // prompt or prefix need gradients further down.
    const bool need_attention = want_core || want_prompt || overlay == nullptr || overlay->prefix() != nullptr || li > 0;

    // H5 = LN2(H3 + H4')
    Matrix dz2;
    layer_norm_backward(dh5, p.ln2_gain, t.ln2, dz2, gp ? &gp->ln2_gain : nullptr, gp ? &gp->ln2_bias : nullptr);
    Matrix dh3 = dz2;
    Matrix dh4 = dz2;

    if (adapter) {
      const AdapterLayer& al = adapter->layers[li];
      AdapterLayer& ga = grads.overlay.adapter()->layers[li];
      matmul_tn(t.adapter_act, dz2, ga.up, true);
      kernels::column_sums(dz2, ga.up_b, true);
      Matrix dact;
      matmul_nt(dz2, al.up, dact);
      for (std::size_t i = 0; i < dact.data.size(); ++i) {
        dact.data[i] *= activate_grad(adapter->activation, t.adapter_pre.data[i], t.adapter_act.data[i]);
      }
      matmul_tn(t.adapter_in, dact, ga.down, true);
      kernels::column_sums(dact, ga.down_b, true);
      Matrix din;
      matmul_nt(dact, al.down, din);
      if (adapter->layer_norm) {
        Matrix dln;
        layer_norm_backward(din, al.ln_gain, t.adapter_ln, dln, &ga.ln_gain, &ga.ln_bias);
        add_into(dh4, dln);
      } else {
        add_into(dh4, din);
      }
    }
    if (!need_attention) break;

    // H4 = ReLU(H3 W1 + b1) W2 + b2
    if (gp) {
      matmul_tn(t.ffn_act, dh4, gp->w2, true);
      kernels::column_sums(dh4, gp->b2, true);
    }
    Matrix dpre;
    matmul_nt(dh4, p.w2, dpre);
    for (std::size_t i = 0; i < dpre.data.size(); ++i) {
      if (!(t.ffn_pre.data[i] > 0.0)) dpre.data[i] = 0.0;
    }
    if (gp) {
      matmul_tn(t.h3, dpre, gp->w1, true);
      kernels::column_sums(dpre, gp->b1, true);
    }
    matmul_nt(dpre, p.w1, dh3, true);

    // H3 = LN1(H0 + H2)
    Matrix dz1;
    layer_norm_backward(dh3, p.ln1_gain, t.ln1, dz1, gp ? &gp->ln1_gain : nullptr, gp ? &gp->ln1_bias : nullptr);
    Matrix dinput = dz1;

    // H2 = [heads] Wo
    if (gp) matmul_tn(t.heads, dz1, gp->wo, true);
    Matrix dheads;
    matmul_nt(dz1, p.wo, dheads);

    const std::size_t lp = tr.prefix_len;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Matrix doh = column_block(dheads, h * dh, dh);
      const Matrix& a = t.attn[h];
      Matrix da;
      matmul_nt(doh, t.v[h], da);
      Matrix dvx;
      matmul_tn(a, doh, dvx);
      Matrix ds(a.rows, a.cols);
      for (std::size_t i = 0; i < a.rows; ++i) {
        auto ai = a.row(i);
        auto dai = da.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) dot += ai[j] * dai[j];
        auto dsi = ds.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) dsi[j] = ai[j] * (dai[j] - dot) * scale;
      }
      Matrix dq;
      matmul(ds, t.k[h], dq);
      Matrix dkx;
      matmul_tn(ds, t.q[h], dkx);

      if (lp > 0) {
        PrefixParams* gpre = grads.overlay.prefix();
        Matrix& gk = gpre->keys[li][h];
        Matrix& gv = gpre->values[li][h];
        for (std::size_t i = 0; i < lp * dh; ++i) {
          gk.data[i] += dkx.data[i];
          gv.data[i] += dvx.data[i];
        }
      }
      Matrix dk(s, dh), dv(s, dh);
      std::copy(dkx.data.begin() + static_cast<std::ptrdiff_t>(lp * dh), dkx.data.end(), dk.data.begin());
      std::copy(dvx.data.begin() + static_cast<std::ptrdiff_t>(lp * dh), dvx.data.end(), dv.data.begin());

      if (gp) {
        matmul_tn(t.input, dq, gp->wq[h], true);
        matmul_tn(t.input, dk, gp->wk[h], true);
        matmul_tn(t.input, dv, gp->wv[h], true);
      }
      if (li > 0 || want_core || want_prompt) {
        matmul_nt(dq, p.wq[h], dinput, true);
        matmul_nt(dk, p.wk[h], dinput, true);
        matmul_nt(dv, p.wv[h], dinput, true);
      }
    }
    dh5 = std::move(dinput);
  }

  // dh5 now holds the gradient at the embedding sum (if it was propagated).
  if (gc) {
    for (std::size_t i = 0; i < s; ++i) {
      auto gi = gc->pos_emb.row(i);
      auto di = dh5.row(i);
      for (std::size_t j = 0; j < cfg.d; ++j) gi[j] += di[j];
    }
    for (std::size_t t = 0; t < tr.text_len; ++t) {
      auto gi = gc->tok_emb.row(static_cast<std::size_t>(tr.tokens[t]));
      auto di = dh5.row(tr.prompt_len + t);
      for (std::size_t j = 0; j < cfg.d; ++j) gi[j] += di[j];
    }
  }
  if (want_prompt) {
    Matrix& gpmt = grads.overlay.prompt()->prompt;
    for (std::size_t i = 0; i < tr.prompt_len * cfg.d; ++i) gpmt.data[i] += dh5.data[i];
  }
}

TrainingExample make_causal_example(std::span<const TokenId> ids) {
  TrainingExample ex;
  ex.input.assign(ids.begin(), ids.end());
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    ex.positions.push_back(t);
    ex.targets.push_back(ids[t + 1]);
  }
  return ex;
}

TrainingExample make_masked_example(std::span<const TokenId> ids, Rng& rng, double rate) {
  TrainingExample ex;
  ex.input.assign(ids.begin(), ids.end());
  if (ids.empty()) return ex;
  const auto want = static_cast<std::size_t>(std::llround(rate * static_cast<double>(ids.size())));
  const std::size_t count = std::clamp<std::size_t>(want, 1, ids.size());
  auto picks = sample_without_replacement(rng, ids.size(), count);
  std::sort(picks.begin(), picks.end());
  for (std::size_t pos : picks) {
    ex.positions.push_back(pos);
    ex.targets.push_back(ids[pos]);
    ex.input[pos] = special::kMask;
  }
  return ex;
}

std::vector<TrainingExample> make_examples(const std::vector<std::vector<TokenId>>& seqs, Objective objective,
                                           std::uint64_t seed, double mask_rate) {
  std::vector<TrainingExample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (objective == Objective::Causal) {
      out.push_back(make_causal_example(seqs[i]));
    } else {
      Rng rng = make_rng(seed, i);
      out.push_back(make_masked_example(seqs[i], rng, mask_rate));
    }
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    auto r = logits.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    auto o = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] = r[j] - lz;
  }
  return out;
}

namespace {

struct ExampleResult {
  double nll = 0.0;
  std::size_t count = 0;
  ModelGrads grads;
};

void check_example(const FrozenCore& core, const TuningOverlay* overlay, const TrainingExample& ex) {
  check_lengths(core, overlay, ex.input.size());
  check_tokens(core, ex.input);
  for (std::size_t j = 0; j < ex.positions.size(); ++j) {
    if (ex.positions[j] >= ex.input.size()) throw DataError("transformer.lm_loss: target position out of range");
    if (ex.targets[j] < 0 || static_cast<std::size_t>(ex.targets[j]) >= core.config.vocab_size) {
      throw DataError("transformer.lm_loss: target id out of vocabulary");
    }
  }
}

// Negative log-likelihood of the example; fills dlogits with
// softmax - onehot at the predicted rows when requested.
double example_nll(const Matrix& logits, const TrainingExample& ex, Matrix* dlogits) {
  double nll = 0.0;
  if (dlogits) *dlogits = Matrix(logits.rows, logits.cols);
  for (std::size_t j = 0; j < ex.positions.size(); ++j) {
    auto r = logits.row(ex.positions[j]);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    nll -= r[static_cast<std::size_t>(ex.targets[j])] - lz;
    if (dlogits) {
      auto g = dlogits->row(ex.positions[j]);
      for (std::size_t k = 0; k < r.size(); ++k) g[k] += std::exp(r[k] - lz);
      g[static_cast<std::size_t>(ex.targets[j])] -= 1.0;
    }
  }
  return nll;
}

ExampleResult run_example(const FrozenCore& core, const TuningOverlay* overlay, const TrainingExample& ex) {
  ExampleResult r;
  ForwardTrace tr = trace_forward(core, overlay, ex.input);
  Matrix dlogits;
  r.nll = example_nll(tr.logits, ex, &dlogits);
  r.count = ex.positions.size();
  r.grads = make_grads(core, overlay);
  backward(core, overlay, tr, dlogits, r.grads);
  return r;
}

template <class F>
void for_each_grad_pair(ModelGrads& dst, ModelGrads& src, F&& f) {
  if (dst.has_core) {
    std::vector<Matrix*> a, b;
    dst.core.for_each_tensor([&](Matrix& m) { a.push_back(&m); });
    src.core.for_each_tensor([&](Matrix& m) { b.push_back(&m); });
    for (std::size_t i = 0; i < a.size(); ++i) f(*a[i], *b[i]);
  }
  std::vector<Matrix*> a, b;
  dst.overlay.for_each_tensor([&](Matrix& m) { a.push_back(&m); });
  src.overlay.for_each_tensor([&](Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) f(*a[i], *b[i]);
}

LossAndGrad reduce(const FrozenCore& core, const TuningOverlay* overlay, std::vector<ExampleResult>& parts) {
  LossAndGrad out;
  out.grads = make_grads(core, overlay);
  double nll = 0.0;
  for (auto& p : parts) {
    nll += p.nll;
    out.predicted += p.count;
    for_each_grad_pair(out.grads, p.grads, [](Matrix& d, Matrix& s) { add_into(d, s); });
  }
  if (out.predicted == 0) throw DataError("transformer.lm_loss: batch has no predicted tokens");
  const double inv = 1.0 / static_cast<double>(out.predicted);
  out.loss = nll * inv;
  for_each_grad_pair(out.grads, out.grads, [inv](Matrix& d, Matrix&) {
    for (auto& x : d.data) x *= inv;
  });
  return out;
}

}  // namespace

double lm_loss(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TrainingExample> batch) {
  for (const auto& ex : batch) check_example(core, overlay, ex);
  std::vector<double> nll(batch.size(), 0.0);
  std::size_t count = 0;
  for (const auto& ex : batch) count += ex.positions.size();
  if (count == 0) throw DataError("transformer.lm_loss: batch has no predicted tokens");
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  const bool par = kernels::backend() == kernels::Backend::Parallel && n > 1;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& ex = batch[static_cast<std::size_t>(i)];
    nll[static_cast<std::size_t>(i)] = example_nll(forward(core, overlay, ex.input), ex, nullptr);
  }
  double total = 0.0;
  for (double v : nll) total += v;
  return total / static_cast<double>(count);
}

LossAndGrad loss_and_grad(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TrainingExample> batch) {
  for (const auto& ex : batch) check_example(core, overlay, ex);
  std::vector<ExampleResult> parts(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  const bool par = kernels::backend() == kernels::Backend::Parallel && n > 1;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    parts[static_cast<std::size_t>(i)] = run_example(core, overlay, batch[static_cast<std::size_t>(i)]);
  }
  return reduce(core, overlay, parts);
}

LossAndGrad loss_and_grad_serial(const FrozenCore& core, const TuningOverlay* overlay,
                                 std::span<const TrainingExample> batch) {
  for (const auto& ex : batch) check_example(core, overlay, ex);
  std::vector<ExampleResult> parts;
  parts.reserve(batch.size());
  for (const auto& ex : batch) parts.push_back(run_example(core, overlay, ex));
  return reduce(core, overlay, parts);
}

ModelGrads grad_tunable(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TrainingExample> batch) {
  return loss_and_grad(core, overlay, batch).grads;
}

std::vector<Matrix*> tunable_tensors(FrozenCore& core, TuningOverlay* overlay) {
  std::vector<Matrix*> out;
  if (overlay == nullptr || overlay->is_full()) {
    core.for_each_tensor([&](Matrix& m) { out.push_back(&m); });
  } else {
    overlay->for_each_tensor([&](Matrix& m) { out.push_back(&m); });
  }
  return out;
}

std::vector<Matrix*> tunable_tensors(ModelGrads& grads, const TuningOverlay* overlay) {
  std::vector<Matrix*> out;
  if (overlay == nullptr || overlay->is_full()) {
    grads.core.for_each_tensor([&](Matrix& m) { out.push_back(&m); });
  } else {
    grads.overlay.for_each_tensor([&](Matrix& m) { out.push_back(&m); });
  }
  return out;
}

double sequence_logprob(const LanguageModel& model, std::span<const TokenId> tokens) {
  if (model.objective() != Objective::Causal) throw DataError("transformer.sequence_logprob: requires a causal model");
  if (tokens.size() < 2) throw DataError("transformer.sequence_logprob: need at least 2 tokens");
  const Matrix lp = log_softmax_rows(model.logits(tokens));
  double total = 0.0;
  for (std::size_t t = 1; t < tokens.size(); ++t) total += lp(t - 1, static_cast<std::size_t>(tokens[t]));
  return total;
}

double pseudo_logprob(const LanguageModel& model, std::span<const TokenId> tokens) {
  if (model.objective() != Objective::Masked) throw DataError("transformer.pseudo_logprob: requires a masked model");
  if (tokens.empty()) throw DataError("transformer.pseudo_logprob: empty sequence");
  std::vector<double> per(tokens.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(tokens.size());
  const bool par = kernels::backend() == kernels::Backend::Parallel && n > 1;
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto t = static_cast<std::size_t>(i);
    try {
      std::vector<TokenId> masked(tokens.begin(), tokens.end());
      masked[t] = special::kMask;
      const Matrix logits = model.logits(masked);
      Matrix row(1, logits.cols);
      std::copy_n(logits.row(t).begin(), logits.cols, row.data.begin());
      per[t] = log_softmax_rows(row)(0, static_cast<std::size_t>(tokens[t]));
    } catch (...) {
#pragma omp critical(pedebias_pseudo_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  double total = 0.0;
  for (double v : per) total += v;
  return total;
}

}  // namespace pedebias
