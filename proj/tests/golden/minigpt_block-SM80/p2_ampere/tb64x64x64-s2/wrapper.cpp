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

// Host binding for p2_ampere (FMHA, SM80, tb64x64x64-s2).
// Builds as a PyTorch C++ extension next to kernel.cu; link flags: -std=c++17 -O3 -arch=sm_80 --expt-relaxed-constexpr -DNDEBUG
// Generated by ksynth; regenerate instead of editing.

#include <cuda_runtime.h>
#include <torch/extension.h>
#include <c10/cuda/CUDAStream.h>

#include "cutlass/cutlass.h"

#define KSYNTH_CHECK(call)                                                              \
  do {                                                                                  \
    const cutlass::Status status_ = (call);                                             \
    TORCH_CHECK(status_ == cutlass::Status::kSuccess, #call, " failed: ",              \
                cutlassGetStatusString(status_));                                       \
  } while (0)

namespace {

// Returns `t` advanced by `elems` elements.
inline void* offset(const torch::Tensor& t, int64_t elems) {
  return static_cast<char*>(t.data_ptr()) + elems * t.element_size();
}

// B operands are consumed column-major: [K, N] row-major weights are
// transposed into contiguous [N, K] storage.
inline torch::Tensor col_major(const torch::Tensor& w, torch::ScalarType dtype) {
  return w.to(dtype).transpose(-2, -1).contiguous();
}

}  // namespace

extern "C" cutlass::Status ksynth_p2_ampere_tb64x64x64_s2_qkv_proj(const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream);
extern "C" cutlass::Status ksynth_p2_ampere_tb64x64x64_s2_attention(const void* q, const void* k, const void* v, void* o,
    int batch, int seq, int q_row_stride, int kv_row_stride, float scale, cudaStream_t stream);
extern "C" cutlass::Status ksynth_p2_ampere_tb64x64x64_s2_out_proj(const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream);

void p2_ampere_forward(const torch::Tensor& x, const torch::Tensor& w_qkv, const torch::Tensor& b_qkv, const torch::Tensor& w_o, const torch::Tensor& b_o, torch::Tensor& out) {
  const auto stream = c10::cuda::getCurrentCUDAStream().stream();
  constexpr auto kOperand = torch::kFloat16;
  const int batch = static_cast<int>(x.size(0));
  const int seq = static_cast<int>(x.size(1));
  const int c = static_cast<int>(x.size(2));
  const int rows = batch * seq;
  constexpr int kHeads = 12;
  constexpr int kKVHeads = 12;
  constexpr int kHeadDim = 64;
  const float scale = static_cast<float>(0.125);
  const auto xs = x.to(kOperand).contiguous();
  auto ctx = torch::empty({rows, kHeads * kHeadDim}, xs.options());
  const auto w_qkv_c = col_major(w_qkv, kOperand);
  const auto b_qkv_c = b_qkv.to(kOperand).contiguous();
  const int width = static_cast<int>(w_qkv.size(-1));
  auto qkv = torch::empty({rows, width}, xs.options());
  KSYNTH_CHECK(ksynth_p2_ampere_tb64x64x64_s2_qkv_proj(xs.data_ptr(), w_qkv_c.data_ptr(), b_qkv_c.data_ptr(), qkv.data_ptr(), rows, width, c, 1, stream));
  // Q, K and V are column blocks of the packed projection.
  const int q_width = kHeads * kHeadDim;
  const int kv_width = kKVHeads * kHeadDim;
  KSYNTH_CHECK(ksynth_p2_ampere_tb64x64x64_s2_attention(qkv.data_ptr(), offset(qkv, q_width), offset(qkv, q_width + kv_width), ctx.data_ptr(),
                     batch, seq, width, width, scale, stream));
  const auto w_o_c = col_major(w_o, kOperand);
  const auto b_o_c = b_o.to(torch::kFloat32).contiguous();
  KSYNTH_CHECK(ksynth_p2_ampere_tb64x64x64_s2_out_proj(ctx.data_ptr(), w_o_c.data_ptr(), b_o_c.data_ptr(), out.data_ptr(), rows, static_cast<int>(w_o.size(-1)), kHeads * kHeadDim, 1, stream));
}

PYBIND11_MODULE(TORCH_EXTENSION_NAME, m) {
  m.def("p2_ampere_forward", &p2_ampere_forward, "FMHA kernel for p2_ampere");
}
