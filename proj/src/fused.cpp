/*
 * Copyright 2026 The ksynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ksynth/fused.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ksynth {

namespace {

constexpr std::pair<FusedMutation, std::string_view> kMutationNames[] = {
    {FusedMutation::none, "none"},
    {FusedMutation::drop_causal_mask, "drop_causal_mask"},
    {FusedMutation::drop_scale, "drop_scale"},
    {FusedMutation::skip_activation, "skip_activation"},
    {FusedMutation::wrong_kv_group, "wrong_kv_group"},
    {FusedMutation::swap_gate_up, "swap_gate_up"},
};

const TensorValue& role(const NamedTensors& in, const char* name) {
  auto it = in.find(name);
  if (it == in.end()) throw ValidationError(std::string("fused evaluation: missing input role '") + name + "'");
  return it->second;
}

const TensorValue* optional_role(const NamedTensors& in, const char* name) {
  auto it = in.find(name);
  return it == in.end() ? nullptr : &it->second;
}

TensorValue prepared(const TensorValue& t, const PrecisionPolicy& p) {
  if (!p.operand) return t;
  return mixed_precision_emulate(t, *p.operand).value;
}

/// Row-block GEMM with an optional bias and per-element epilogue.
/// a: rows x K (row-major), w: K x N. Returns rows x N.
template <typename Epilogue>
std::vector<double> gemm_epilogue(const double* a, std::int64_t rows, std::int64_t k, const TensorValue& w,
                                  const TensorValue* bias, const PrecisionPolicy& p, Epilogue&& epi) {
  if (w.shape().size() != 2 || w.shape()[0] != k) {
    throw ValidationError("fused GEMM: weight " + shape_str(w.shape()) + " does not match K=" + std::to_string(k));
  }
  const std::int64_t n = w.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(rows * n));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < n; ++c) {
      Accumulator acc(p.accumulator);
      for (std::int64_t i = 0; i < k; ++i) acc.add(a[r * k + i] * w.data[static_cast<std::size_t>(i * n + c)]);
      double v = acc.value();
      if (bias) v = apply_optional(v + bias->data[static_cast<std::size_t>(c)], p.accumulator);
      out[static_cast<std::size_t>(r * n + c)] = apply_optional(epi(v), p.accumulator);
    }
  }
  return out;
}

std::vector<double> gemm(const double* a, std::int64_t rows, std::int64_t k, const TensorValue& w,
                         const TensorValue* bias, const PrecisionPolicy& p) {
  return gemm_epilogue(a, rows, k, w, bias, p, [](double v) { return v; });
}

TensorValue finish(TensorMeta meta, std::vector<double> data, const PrecisionPolicy& p) {
  for (auto& v : data) v = apply_optional(v, p.output);
  return TensorValue(std::move(meta), std::move(data));
}

TensorValue fused_gemm(RuleTag rule, const NamedTensors& in, const FusedParams& params, const PrecisionPolicy& p) {
  const TensorValue a = prepared(role(in, "A"), p);
  const TensorValue b = prepared(role(in, "B"), p);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const bool batched = rule == RuleTag::BatchedGEMM;
  if (batched ? (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) : (as.size() != 2 || bs.size() != 2)) {
    throw ValidationError("fused " + std::string(to_string(rule)) + ": bad operand shapes " + shape_str(as) + " x " +
                          shape_str(bs));
  }
  const std::int64_t batch = batched ? as[0] : 1;
  const std::int64_t m = as[as.size() - 2], k = as.back(), n = bs.back();
  if (bs[bs.size() - 2] != k) throw ValidationError("fused GEMM: K mismatch");
  // Stream-K partitions the K loop; each partition accumulates separately
  // and the partial tiles are reduced in a fixup pass.
  const std::int64_t splits = rule == RuleTag::GEMM_StreamK ? std::clamp<std::int64_t>(params.k_splits, 1, k) : 1;
  const std::int64_t chunk = (k + splits - 1) / splits;
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    const double* ap = a.data.data() + bi * m * k;
    const double* bp = b.data.data() + bi * k * n;
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t c = 0; c < n; ++c) {
        Accumulator fixup(p.accumulator);
        for (std::int64_t s = 0; s < splits; ++s) {
          Accumulator partial(p.accumulator);
          const std::int64_t lo = s * chunk, hi = std::min(k, lo + chunk);
          for (std::int64_t i = lo; i < hi; ++i) partial.add(ap[r * k + i] * bp[i * n + c]);
          fixup.add(partial.value());
        }
        out[static_cast<std::size_t>((bi * m + r) * n + c)] = fixup.value();
      }
    }
  }
  return finish(TensorMeta{out_shape, role(in, "A").meta.dtype}, std::move(out), p);
}

TensorValue fused_attention(RuleTag rule, const NamedTensors& in, const FusedParams& params,
                            const PrecisionPolicy& p) {
  const TensorValue x = prepared(role(in, "x"), p);
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw ValidationError("fused attention: x must be [B,T,C], got " + shape_str(xs));
  const std::int64_t batch = xs[0], seq = xs[1], c = xs[2];
  const std::int64_t h = params.num_heads, kvh = params.kv_heads, d = params.head_dim;
  if (h < 1 || kvh < 1 || d < 1 || h % kvh != 0) throw ValidationError("fused attention: bad head configuration");
  if (rule == RuleTag::FMHA && kvh != h) throw ValidationError("FMHA requires kv_heads == num_heads");
  const std::int64_t rows = batch * seq;
  const std::int64_t qw = h * d, kvw = kvh * d;

  auto opt = [&](const char* name) -> std::optional<TensorValue> {
    if (const TensorValue* t = optional_role(in, name)) return prepared(*t, p);
    return std::nullopt;
  };

  // Projections into [rows, width] buffers.
  std::vector<double> q, k, v;
  if (params.packed_qkv) {
    const TensorValue w = prepared(role(in, "w_qkv"), p);
    const auto b = opt("b_qkv");
    const std::vector<double> all = gemm(x.data.data(), rows, c, w, b ? &*b : nullptr, p);
    const std::int64_t width = w.shape()[1];
    if (width != qw + 2 * kvw) throw ValidationError("fused attention: packed projection width mismatch");
    q.resize(static_cast<std::size_t>(rows * qw));
    k.resize(static_cast<std::size_t>(rows * kvw));
    v.resize(static_cast<std::size_t>(rows * kvw));
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t j = 0; j < qw; ++j) q[r * qw + j] = all[r * width + j];
      for (std::int64_t j = 0; j < kvw; ++j) {
        k[r * kvw + j] = all[r * width + qw + j];
        v[r * kvw + j] = all[r * width + qw + kvw + j];
      }
    }
  } else {
    const TensorValue wq = prepared(role(in, "w_q"), p);
    const TensorValue wk = prepared(role(in, "w_k"), p);
    const TensorValue wv = prepared(role(in, "w_v"), p);
    const auto bq = opt("b_q");
    const auto bk = opt("b_k");
    const auto bv = opt("b_v");
    q = gemm(x.data.data(), rows, c, wq, bq ? &*bq : nullptr, p);
    k = gemm(x.data.data(), rows, c, wk, bk ? &*bk : nullptr, p);
    v = gemm(x.data.data(), rows, c, wv, bv ? &*bv : nullptr, p);
    if (static_cast<std::int64_t>(q.size()) != rows * qw || static_cast<std::int64_t>(k.size()) != rows * kvw) {
      throw ValidationError("fused attention: projection widths do not match head configuration");
    }
  }

  const double scale = params.mutation == FusedMutation::drop_scale ? 1.0 : params.scale;
  const bool causal = params.causal && params.mutation != FusedMutation::drop_causal_mask;
  const std::int64_t group = h / kvh;
  const std::int64_t block = std::max<std::int64_t>(1, params.keys_per_block);
  const double neg_inf = -std::numeric_limits<double>::infinity();

  std::vector<double> ctx(static_cast<std::size_t>(rows * qw));
  std::vector<double> acc(static_cast<std::size_t>(d));
  std::vector<double> s(static_cast<std::size_t>(block));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t head = 0; head < h; ++head) {
      const std::int64_t kv = params.mutation == FusedMutation::wrong_kv_group ? head % kvh : head / group;
      for (std::int64_t i = 0; i < seq; ++i) {
        const double* qi = &q[static_cast<std::size_t>((b * seq + i) * qw + head * d)];
        double running_max = neg_inf;
        double denom = 0.0;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::int64_t j0 = 0; j0 < seq; j0 += block) {
          const std::int64_t j1 = std::min(seq, j0 + block);
          double block_max = neg_inf;
          for (std::int64_t j = j0; j < j1; ++j) {
            double logit = neg_inf;
            if (!causal || j <= i) {
              const double* kj = &k[static_cast<std::size_t>((b * seq + j) * kvw + kv * d)];
              Accumulator dot(p.accumulator);
              for (std::int64_t e = 0; e < d; ++e) dot.add(qi[e] * kj[e]);
              logit = dot.value() * scale;
            }
            s[j - j0] = logit;
            block_max = std::max(block_max, logit);
          }
          if (block_max == neg_inf) continue;
          const double new_max = std::max(running_max, block_max);
          const double correction = running_max == neg_inf ? 0.0 : std::exp(running_max - new_max);
          denom *= correction;
          for (auto& a : acc) a *= correction;
          for (std::int64_t j = j0; j < j1; ++j) {
            if (s[j - j0] == neg_inf) continue;
            const double w = std::exp(s[j - j0] - new_max);
            denom += w;
            const double* vj = &v[static_cast<std::size_t>((b * seq + j) * kvw + kv * d)];
            for (std::int64_t e = 0; e < d; ++e) acc[e] = apply_optional(acc[e] + w * vj[e], p.accumulator);
          }
          running_max = new_max;
        }
        double* out = &ctx[static_cast<std::size_t>((b * seq + i) * qw + head * d)];
        for (std::int64_t e = 0; e < d; ++e) out[e] = acc[e] / denom;
      }
    }
  }

  const TensorValue wo = prepared(role(in, "w_o"), p);
  const auto bo = opt("b_o");
  std::vector<double> y = gemm(ctx.data(), rows, qw, wo, bo ? &*bo : nullptr, p);
  return finish(TensorMeta{{batch, seq, wo.shape()[1]}, role(in, "x").meta.dtype}, std::move(y), p);
}

TensorValue fused_mlp(RuleTag rule, const NamedTensors& in, const FusedParams& params, const PrecisionPolicy& p) {
  const TensorValue x = prepared(role(in, "x"), p);
  const Shape& xs = x.shape();
  const std::int64_t c = xs.back();
  const std::int64_t rows = x.meta.numel() / c;
  const bool skip_act = params.mutation == FusedMutation::skip_activation;
  auto opt = [&](const char* name) -> std::optional<TensorValue> {
    if (const TensorValue* t = optional_role(in, name)) return prepared(*t, p);
    return std::nullopt;
  };

  std::vector<double> hidden;
  TensorValue w_out;
  std::optional<TensorValue> b_out;
  if (rule == RuleTag::MLP_GELU) {
    const TensorValue w1 = prepared(role(in, "w1"), p);
    const auto b1 = opt("b1");
    hidden = gemm_epilogue(x.data.data(), rows, c, w1, b1 ? &*b1 : nullptr, p,
                           [&](double v) { return skip_act ? v : gelu_tanh(v); });
    w_out = prepared(role(in, "w2"), p);
    b_out = opt("b2");
  } else {
    TensorValue wg = prepared(role(in, "w_gate"), p);
    TensorValue wu = prepared(role(in, "w_up"), p);
    if (params.mutation == FusedMutation::swap_gate_up) std::swap(wg, wu);
    if (wg.shape() != wu.shape()) throw ValidationError("fused SwiGLU: gate/up weight shapes differ");
    // Dual GEMM: both products share the A operand; the epilogue combines them.
    const std::int64_t n = wg.shape()[1];
    hidden.resize(static_cast<std::size_t>(rows * n));
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t j = 0; j < n; ++j) {
        Accumulator g(p.accumulator), u(p.accumulator);
        for (std::int64_t i = 0; i < c; ++i) {
          const double a = x.data[static_cast<std::size_t>(r * c + i)];
          g.add(a * wg.data[static_cast<std::size_t>(i * n + j)]);
          u.add(a * wu.data[static_cast<std::size_t>(i * n + j)]);
        }
        const double gate = skip_act ? g.value() : silu(g.value());
        hidden[static_cast<std::size_t>(r * n + j)] = apply_optional(gate * u.value(), p.accumulator);
      }
    }
    w_out = prepared(role(in, "w_down"), p);
  }
  const std::int64_t n_hidden = w_out.shape()[0];
  std::vector<double> y = gemm(hidden.data(), rows, n_hidden, w_out, b_out ? &*b_out : nullptr, p);
  Shape out_shape = xs;
  out_shape.back() = w_out.shape()[1];
  return finish(TensorMeta{out_shape, role(in, "x").meta.dtype}, std::move(y), p);
}

}  // namespace

std::string_view to_string(FusedMutation m) {
  for (const auto& [k, name] : kMutationNames) {
    if (k == m) return name;
  }
  return "none";
}

std::optional<FusedMutation> parse_mutation(std::string_view s) {
  for (const auto& [k, name] : kMutationNames) {
    if (name == s) return k;
  }
  return std::nullopt;
}

double gelu_tanh(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

void FusedParams::to_attrs(Attrs& attrs) const {
  attrs["num_heads"] = num_heads;
  attrs["kv_heads"] = kv_heads;
  attrs["head_dim"] = head_dim;
  attrs["scale"] = scale;
  attrs["causal"] = static_cast<std::int64_t>(causal);
  attrs["packed_qkv"] = static_cast<std::int64_t>(packed_qkv);
  attrs["keys_per_block"] = keys_per_block;
  attrs["k_splits"] = k_splits;
  attrs["mutation"] = std::string(to_string(mutation));
}

FusedParams FusedParams::from_attrs(const Node& node) {
  FusedParams p;
  p.num_heads = node.attr_int_or("num_heads", 1);
  p.kv_heads = node.attr_int_or("kv_heads", 1);
  p.head_dim = node.attr_int_or("head_dim", 0);
  p.scale = node.attr_double_or("scale", 1.0);
  p.causal = node.attr_int_or("causal", 0) != 0;
  p.packed_qkv = node.attr_int_or("packed_qkv", 0) != 0;
  p.keys_per_block = node.attr_int_or("keys_per_block", 4);
  p.k_splits = node.attr_int_or("k_splits", 4);
  if (node.has_attr("mutation")) {
    auto m = parse_mutation(node.attr_str("mutation"));
    if (!m) throw ValidationError("node '" + node.id + "': unknown mutation '" + node.attr_str("mutation") + "'");
    p.mutation = *m;
  }
  return p;
}

TensorValue eval_fused(RuleTag rule, const NamedTensors& inputs, const FusedParams& params,
                       const PrecisionPolicy& policy) {
  if (is_gemm_rule(rule)) return fused_gemm(rule, inputs, params, policy);
  if (is_attention_rule(rule)) return fused_attention(rule, inputs, params, policy);
  return fused_mlp(rule, inputs, params, policy);
}

}  // namespace ksynth
