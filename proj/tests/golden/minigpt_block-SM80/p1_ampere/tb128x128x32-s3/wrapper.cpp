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

// Host binding for p1_ampere (MLP_GELU, SM80, tb128x128x32-s3).
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

extern "C" cutlass::Status ksynth_p1_ampere_tb128x128x32_s3_fc1(const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream);
extern "C" cutlass::Status ksynth_p1_ampere_tb128x128x32_s3_fc2(const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream);

void p1_ampere_forward(const torch::Tensor& x, const torch::Tensor& w1, const torch::Tensor& b1, const torch::Tensor& w2, const torch::Tensor& b2, torch::Tensor& out) {
  const auto stream = c10::cuda::getCurrentCUDAStream().stream();
  constexpr auto kOperand = torch::kFloat16;
  const int c = static_cast<int>(x.size(-1));
  const int rows = static_cast<int>(x.numel() / c);
  const int h = static_cast<int>(w1.size(-1));
  const int c_out = static_cast<int>(w2.size(-1));
  const auto xs = x.to(kOperand).contiguous();
  const auto w1_c = col_major(w1, kOperand);
  const auto w2_c = col_major(w2, kOperand);
  const auto b1_c = b1.to(kOperand).contiguous();
  const auto b2_c = b2.to(torch::kFloat32).contiguous();
  auto hidden = torch::empty({rows, h}, xs.options());
  // GEMM1 applies bias and GELU in its epilogue; GEMM2 adds its bias.
  KSYNTH_CHECK(ksynth_p1_ampere_tb128x128x32_s3_fc1(xs.data_ptr(), w1_c.data_ptr(), b1_c.data_ptr(), hidden.data_ptr(), rows, h, c, 1, stream));
  KSYNTH_CHECK(ksynth_p1_ampere_tb128x128x32_s3_fc2(hidden.data_ptr(), w2_c.data_ptr(), b2_c.data_ptr(), out.data_ptr(), rows, c_out, h, 1, stream));
}

PYBIND11_MODULE(TORCH_EXTENSION_NAME, m) {
  m.def("p1_ampere_forward", &p1_ampere_forward, "MLP_GELU kernel for p1_ampere");
}
