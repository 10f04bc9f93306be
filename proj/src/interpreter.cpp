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

#include "ksynth/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ksynth/precision.hpp"

namespace ksynth {
namespace {

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

std::size_t axis_of(std::int64_t axis, std::size_t rank) {
  return static_cast<std::size_t>(axis < 0 ? axis + static_cast<std::int64_t>(rank) : axis);
}

/// Calls f(flat_out, multi_index) for every element of `shape` in row-major order.
template <typename F>
void for_each_index(const Shape& shape, F&& f) {
  std::vector<std::int64_t> idx(shape.size(), 0);
  const std::int64_t total = num_elements(shape);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    f(flat, idx);
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
}

TensorValue broadcast_binary(const TensorValue& a, const TensorValue& b, const TensorMeta& out, bool multiply) {
  TensorValue r(out);
  const std::size_t rank = out.shape.size();
  auto map_stride = [&](const Shape& s) {
    std::vector<std::int64_t> st(rank, 0);
    const auto own = strides_of(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != 1) st[rank - s.size() + i] = own[i];
    }
    return st;
  };
  const auto sa = map_stride(a.shape());
  const auto sb = map_stride(b.shape());
  for_each_index(out.shape, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
    std::int64_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    const double x = a.data[ia], y = b.data[ib];
    r.data[flat] = multiply ? x * y : x + y;
  });
  return r;
}

TensorValue matmul_batched(const TensorValue& a, const TensorValue& b, const TensorMeta& out) {
  TensorValue r(out);
  const Shape& as = a.shape();
  const std::int64_t m = as[as.size() - 2], k = as.back(), n = b.shape().back();
  const std::int64_t batch = num_elements(as) / (m * k);
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    const double* ap = a.data.data() + bi * m * k;
    const double* bp = b.data.data() + bi * k * n;
    double* cp = r.data.data() + bi * m * n;
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::int64_t p = 0; p < k; ++p) s += ap[i * k + p] * bp[p * n + j];
        cp[i * n + j] = s;
      }
    }
  }
  return r;
}

TensorValue linear(const TensorValue& x, const TensorValue& w, const TensorValue* bias, const TensorMeta& out) {
  TensorValue r(out);
  const std::int64_t k = w.shape()[0], n = w.shape()[1];
  const std::int64_t rows = x.meta.numel() / k;
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += x.data[i * k + p] * w.data[p * n + j];
      if (bias) s += bias->data[j];
      r.data[i * n + j] = s;
    }
  }
  return r;
}

TensorValue softmax_axis(const TensorValue& x, std::size_t axis) {
  TensorValue r(x.meta);
  const Shape& s = x.shape();
  const auto st = strides_of(s);
  const std::int64_t len = s[axis], step = st[axis];
  const std::int64_t outer = num_elements(s) / len;
  for (std::int64_t o = 0; o < outer; ++o) {
    // o enumerates positions with the axis index fixed at 0.
    const std::int64_t base = (o / step) * step * len + (o % step);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < len; ++i) mx = std::max(mx, x.data[base + i * step]);
    double sum = 0.0;
    for (std::int64_t i = 0; i < len; ++i) {
      const double e = std::exp(x.data[base + i * step] - mx);
      r.data[base + i * step] = e;
      sum += e;
    }
    for (std::int64_t i = 0; i < len; ++i) r.data[base + i * step] /= sum;
  }
  return r;
}

TensorValue norm(const TensorValue& x, const TensorValue* gamma, const TensorValue* beta, double eps, bool rms) {
  TensorValue r(x.meta);
  const std::int64_t c = x.shape().back();
  const std::int64_t rows = x.meta.numel() / c;
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* xp = x.data.data() + i * c;
    double mean = 0.0;
    if (!rms) {
      for (std::int64_t j = 0; j < c; ++j) mean += xp[j];
      mean /= static_cast<double>(c);
    }
    double var = 0.0;
    for (std::int64_t j = 0; j < c; ++j) var += (xp[j] - mean) * (xp[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < c; ++j) {
      double v = (xp[j] - mean) * inv;
      if (gamma) v *= gamma->data[j];
      if (beta) v += beta->data[j];
      r.data[i * c + j] = v;
    }
  }
  return r;
}

TensorValue transpose(const TensorValue& x, const std::vector<std::int64_t>& perm, const TensorMeta& out) {
  TensorValue r(out);
  const auto st = strides_of(x.shape());
  std::vector<std::int64_t> src_stride(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_stride[i] = st[axis_of(perm[i], perm.size())];
  for_each_index(out.shape, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
    std::int64_t src = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) src += idx[d] * src_stride[d];
    r.data[flat] = x.data[src];
  });
  return r;
}

/// Copies the slab [offset, offset + out.shape[axis]) of x along axis.
TensorValue slice_axis(const TensorValue& x, std::size_t axis, std::int64_t offset, const TensorMeta& out) {
  TensorValue r(out);
  const auto st = strides_of(x.shape());
  for_each_index(out.shape, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
    std::int64_t src = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) src += (d == axis ? idx[d] + offset : idx[d]) * st[d];
    r.data[flat] = x.data[src];
  });
  return r;
}

TensorValue repeat_interleave(const TensorValue& x, std::size_t axis, std::int64_t repeats, const TensorMeta& out) {
  TensorValue r(out);
  const auto st = strides_of(x.shape());
  for_each_index(out.shape, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
    std::int64_t src = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) src += (d == axis ? idx[d] / repeats : idx[d]) * st[d];
    r.data[flat] = x.data[src];
  });
  return r;
}

TensorValue concat(const std::vector<const TensorValue*>& xs, std::size_t axis, const TensorMeta& out) {
  TensorValue r(out);
  const auto ost = strides_of(out.shape);
  std::int64_t offset = 0;
  for (const TensorValue* x : xs) {
    for_each_index(x->shape(), [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
      std::int64_t dst = 0;
      for (std::size_t d = 0; d < idx.size(); ++d) dst += (d == axis ? idx[d] + offset : idx[d]) * ost[d];
      r.data[dst] = x->data[flat];
    });
    offset += x->shape()[axis];
  }
  return r;
}

TensorValue unary(const TensorValue& x, double (*f)(double)) {
  TensorValue r = x;
  for (auto& v : r.data) v = f(v);
  return r;
}

TensorValue eval_kernel_call(const Node& n, const std::vector<const TensorValue*>& in, const EvalOptions& opts) {
  const auto& roles = n.attr_strs("roles");
  if (roles.size() != in.size()) {
    throw ValidationError("kernel_call '" + n.id + "': " + std::to_string(roles.size()) + " roles for " +
                          std::to_string(in.size()) + " inputs");
  }
  NamedTensors named;
  for (std::size_t i = 0; i < roles.size(); ++i) named.emplace(roles[i], *in[i]);
  const RuleTag rule = rule_or_throw(n.attr_str("rule"));
  const PrecisionPolicy policy = opts.emulate_kernels ? kernel_policy(n) : PrecisionPolicy::exact();
  TensorValue out = eval_fused(rule, named, FusedParams::from_attrs(n), policy);
  if (out.shape() != n.out_meta.shape) {
    throw ValidationError("kernel_call '" + n.id + "' produced " + shape_str(out.shape()) + ", expected " +
                          shape_str(n.out_meta.shape));
  }
  out.meta.dtype = n.out_meta.dtype;
  return out;
}

TensorValue eval_node(const Node& n, const std::vector<const TensorValue*>& in, const EvalOptions& opts) {
  const TensorMeta& meta = n.out_meta;
  switch (n.kind) {
    case OpKind::input:
    case OpKind::parameter:
    case OpKind::constant:
      break;
    case OpKind::matmul:
    case OpKind::batched_matmul:
      return matmul_batched(*in[0], *in[1], meta);
    case OpKind::linear:
      return linear(*in[0], *in[1], in.size() > 2 ? in[2] : nullptr, meta);
    case OpKind::add:
      return broadcast_binary(*in[0], *in[1], meta, false);
    case OpKind::mul:
      return broadcast_binary(*in[0], *in[1], meta, true);
    case OpKind::scale: {
      TensorValue r = *in[0];
      const double f = n.attr_double("factor");
      for (auto& v : r.data) v *= f;
      return r;
    }
    case OpKind::transpose:
      return transpose(*in[0], n.attr_ints("perm"), meta);
    case OpKind::reshape:
    case OpKind::dropout_eval:
    case OpKind::output: {
      TensorValue r = *in[0];
      r.meta = meta;
      return r;
    }
    case OpKind::split: {
      const std::size_t axis = axis_of(n.attr_int("axis"), in[0]->shape().size());
      return slice_axis(*in[0], axis, n.attr_int("index") * meta.shape[axis], meta);
    }
    case OpKind::concat: {
      const std::size_t axis = axis_of(n.attr_int("axis"), meta.shape.size());
      return concat(in, axis, meta);
    }
    case OpKind::softmax:
      return softmax_axis(*in[0], axis_of(n.attr_int_or("axis", -1), meta.shape.size()));
    case OpKind::causal_mask: {
      TensorValue r = *in[0];
      const Shape& s = meta.shape;
      const std::int64_t tq = s[s.size() - 2], tk = s.back();
      const std::int64_t slabs = meta.numel() / (tq * tk);
      const double neg_inf = -std::numeric_limits<double>::infinity();
      for (std::int64_t b = 0; b < slabs; ++b) {
        for (std::int64_t i = 0; i < tq; ++i) {
          for (std::int64_t j = i + 1 + (tk - tq); j < tk; ++j) r.data[(b * tq + i) * tk + j] = neg_inf;
        }
      }
      return r;
    }
    case OpKind::layernorm:
      return norm(*in[0], in.size() > 1 ? in[1] : nullptr, in.size() > 2 ? in[2] : nullptr,
                  n.attr_double_or("eps", 1e-5), false);
    case OpKind::rmsnorm:
      return norm(*in[0], in.size() > 1 ? in[1] : nullptr, nullptr, n.attr_double_or("eps", 1e-6), true);
    case OpKind::gelu:
      return unary(*in[0], gelu_tanh);
    case OpKind::silu:
      return unary(*in[0], silu);
    case OpKind::repeat_interleave: {
      const std::size_t axis = axis_of(n.attr_int("axis"), meta.shape.size());
      return repeat_interleave(*in[0], axis, n.attr_int("repeats"), meta);
    }
    case OpKind::kernel_call:
      return eval_kernel_call(n, in, opts);
  }
  throw ValidationError("cannot evaluate node '" + n.id + "'");
}

}  // namespace

PrecisionPolicy kernel_policy(const Node& call) {
  if (!call.has_attr("dtype")) return PrecisionPolicy::exact();
  return PrecisionPolicy::mixed(dtype_or_throw(call.attr_str("dtype")));
}

TensorValue softmax_last(const TensorValue& x) { return softmax_axis(x, x.shape().size() - 1); }

ValueMap make_leaf_values(const CompGraph& g, std::uint64_t seed, const ValueMap& given) {
  ValueMap out;
  for (const auto& n : g.nodes) {
    if (!is_leaf(n.kind) || given.count(n.id)) continue;
    double scale = 1.0;
    if (n.kind != OpKind::input && n.out_meta.rank() >= 2) {
      scale = 1.0 / std::sqrt(static_cast<double>(n.out_meta.shape[n.out_meta.rank() - 2]));
    }
    out.emplace(n.id, random_tensor(n.out_meta, seed, stream_id(n.id), scale));
  }
  return out;
}

ValueMap eval_all(const CompGraph& g, const ValueMap& inputs, std::uint64_t seed, const EvalOptions& opts) {
  for (const auto& id : g.graph_inputs) {
    if (!inputs.count(id)) throw ValidationError("missing value for graph input '" + id + "'");
  }
  ValueMap values;
  ValueMap generated;
  bool have_generated = false;
  for (const auto& n : g.nodes) {
    if (is_leaf(n.kind)) {
      auto it = inputs.find(n.id);
      if (it == inputs.end()) {
        if (!have_generated) {
          generated = make_leaf_values(g, seed, inputs);
          have_generated = true;
        }
        it = generated.find(n.id);
      }
      if (it->second.shape() != n.out_meta.shape) {
        throw ValidationError("value for '" + n.id + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                              shape_str(n.out_meta.shape));
      }
      values[n.id] = it->second;
      continue;
    }
    std::vector<TensorValue> casted;
    casted.reserve(n.inputs.size());
    std::vector<const TensorValue*> in;
    for (const auto& id : n.inputs) {
      const TensorValue* v = &values.at(id);
      if (auto ov = opts.edge_values.find({n.id, id}); ov != opts.edge_values.end()) {
        if (ov->second.shape() != v->shape()) {
          throw ValidationError("edge value for '" + n.id + "' <- '" + id + "' has shape " +
                                shape_str(ov->second.shape()) + ", expected " + shape_str(v->shape()));
        }
        v = &ov->second;
      }
      auto cast = opts.edge_casts.find({n.id, id});
      if (cast != opts.edge_casts.end()) {
        casted.push_back(mixed_precision_emulate(*v, cast->second).value);
        v = &casted.back();
      }
      in.push_back(v);
    }
    try {
      values[n.id] = eval_node(n, in, opts);
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      if (what.find('\'' + n.id + '\'') != std::string::npos) throw;
      throw ValidationError("evaluating node '" + n.id + "': " + what);
    }
  }
  return values;
}

ValueMap eval(const CompGraph& g, const ValueMap& inputs, std::uint64_t seed, const EvalOptions& opts) {
  ValueMap all = eval_all(g, inputs, seed, opts);
  ValueMap out;
  for (const auto& id : g.graph_outputs) out[id] = std::move(all.at(id));
  return out;
}

}  // namespace ksynth
