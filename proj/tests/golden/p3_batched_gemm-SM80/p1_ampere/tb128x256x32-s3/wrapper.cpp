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

// Host binding for p1_ampere (BatchedGEMM, SM80, tb128x256x32-s3).
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

extern "C" cutlass::Status ksynth_p1_ampere_tb128x256x32_s3_gemm(const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream);

void p1_ampere_forward(const torch::Tensor& A, const torch::Tensor& B, torch::Tensor& out) {
  const auto stream = c10::cuda::getCurrentCUDAStream().stream();
  constexpr auto kOperand = torch::kFloat32;
  const int batch = static_cast<int>(A.size(0));
  const int m = static_cast<int>(A.size(-2));
  const int k = static_cast<int>(A.size(-1));
  const int n = static_cast<int>(B.size(-1));
  TORCH_CHECK(B.size(-2) == k, "A and B inner dimensions differ");
  TORCH_CHECK(out.scalar_type() == torch::kFloat32, "out must be fp32");
  const auto a = A.to(kOperand).contiguous();
  const auto b = col_major(B, kOperand);
  KSYNTH_CHECK(ksynth_p1_ampere_tb128x256x32_s3_gemm(a.data_ptr(), b.data_ptr(), nullptr, out.data_ptr(), m, n, k, batch, stream));
}

PYBIND11_MODULE(TORCH_EXTENSION_NAME, m) {
  m.def("p1_ampere_forward", &p1_ampere_forward, "BatchedGEMM kernel for p1_ampere");
}
