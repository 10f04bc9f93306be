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

// Ampere FP16 Fused Multi-Head Attention
// Pattern p2_ampere (FMHA) for Ampere SM80, configuration tb64x64x64-s2.
// Reference example: sm80-fused-multi-head-attention
// Layout: A row-major, B column-major, C and D row-major.
// Operands fp16, accumulator fp32, boundary output fp32.
// Generated by ksynth; regenerate instead of editing.

#include <cuda_runtime.h>

#include "cutlass/cutlass.h"
#include "41_fused_multi_head_attention/kernel_forward.h"
#include "cutlass/epilogue/thread/linear_combination.h"
#include "cutlass/gemm/device/gemm.h"

namespace ksynth_p2_ampere_tb64x64x64_s2 {

using ArchTag = cutlass::arch::Sm80;
using ElementOperand = cutlass::half_t;
using ElementAccumulator = float;
using ElementOutput = float;

// Attention tile tb64x64x64-s2.
// kQueriesPerBlock=64, kKeysPerBlock=64
constexpr int kQueriesPerBlock = 64;
constexpr int kKeysPerBlock = 64;
constexpr int kHeadDim = 64;
constexpr int kStages = 2;
constexpr int kNumHeads = 12;
constexpr int kNumKVHeads = 12;
constexpr bool kCausal = true;

// Projection GEMMs run a fixed tile.
using ProjThreadblockShape = cutlass::gemm::GemmShape<128, 128, 32>;
using ProjWarpShape = cutlass::gemm::GemmShape<64, 64, 32>;
using InstructionShape = cutlass::gemm::GemmShape<16, 8, 16>;
constexpr int kProjStages = 3;

}  // namespace ksynth_p2_ampere_tb64x64x64_s2

// Packed QKV projection
namespace ksynth_p2_ampere_tb64x64x64_s2::qkv_proj {

using ElementC = ElementOperand;
using EpilogueOp = cutlass::epilogue::thread::LinearCombination<
    ElementC, 128 / cutlass::sizeof_bits<ElementC>::value, ElementAccumulator, ElementAccumulator>;

using Gemm = cutlass::gemm::device::Gemm<
    ElementOperand, cutlass::layout::RowMajor,
    ElementOperand, cutlass::layout::ColumnMajor,
    ElementC, cutlass::layout::RowMajor,
    ElementAccumulator,
    cutlass::arch::OpClassTensorOp,
    ArchTag,
    ProjThreadblockShape, ProjWarpShape, InstructionShape,
    EpilogueOp,
    cutlass::gemm::threadblock::GemmIdentityThreadblockSwizzle<>,
    kProjStages>;

}  // namespace ksynth_p2_ampere_tb64x64x64_s2::qkv_proj

extern "C" cutlass::Status ksynth_p2_ampere_tb64x64x64_s2_qkv_proj(
    const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream) {
  using namespace ksynth_p2_ampere_tb64x64x64_s2;
  using Gemm = qkv_proj::Gemm;
  if (batch != 1) return cutlass::Status::kErrorInvalidProblem;
  // A null C disables the source term; a bias row broadcasts with ldc = 0.
  typename Gemm::Arguments args(
      {m, n, k},
      {static_cast<const ElementOperand*>(a), k},
      {static_cast<const ElementOperand*>(b), k},
      {static_cast<const qkv_proj::ElementC*>(c), 0},
      {static_cast<qkv_proj::ElementC*>(d), n},
      {ElementAccumulator(1), ElementAccumulator(c ? 1 : 0)});
  Gemm op;
  cutlass::Status status = op.can_implement(args);
  if (status != cutlass::Status::kSuccess) return status;
  return op(args, nullptr, stream);
}

// Fused attention
namespace ksynth_p2_ampere_tb64x64x64_s2::attention {

// Streaming softmax over key blocks; K/V head h serves query heads
// h*group .. h*group+group-1.
using Attention = AttentionKernel<
    ElementOperand, ArchTag,
    /*isAligned=*/true,
    kQueriesPerBlock, kKeysPerBlock,
    /*kMaxK=*/kHeadDim,
    /*kSupportsDropout=*/false,
    /*kSupportsBias=*/false>;

}  // namespace ksynth_p2_ampere_tb64x64x64_s2::attention

extern "C" cutlass::Status ksynth_p2_ampere_tb64x64x64_s2_attention(
    const void* q, const void* k, const void* v, void* o,
    int batch, int seq, int q_row_stride, int kv_row_stride, float scale, cudaStream_t stream) {
  using namespace ksynth_p2_ampere_tb64x64x64_s2;
  using Attention = attention::Attention;
  constexpr int kGroup = kNumHeads / kNumKVHeads;
  auto kernel = attention_kernel_batched_impl<Attention>;
  const int smem = int(sizeof(typename Attention::SharedStorage));
  if (smem > 0xc000 &&
      cudaFuncSetAttribute(kernel, cudaFuncAttributeMaxDynamicSharedMemorySize, smem) != cudaSuccess) {
    return cutlass::Status::kErrorInternal;
  }
  // One launch per position inside a head group, so every launch sees
  // exactly kNumKVHeads query heads paired one-to-one with K/V heads.
  for (int g = 0; g < kGroup; ++g) {
    typename Attention::Params p;
    p.query_ptr = static_cast<const ElementOperand*>(q) + g * kHeadDim;
    p.key_ptr = static_cast<const ElementOperand*>(k);
    p.value_ptr = static_cast<const ElementOperand*>(v);
    p.output_ptr = static_cast<ElementOperand*>(o) + g * kHeadDim;
    p.output_accum_ptr = nullptr;
    p.logsumexp_ptr = nullptr;
    p.scale = scale;
    p.num_heads = kNumKVHeads;
    p.num_batches = batch;
    p.head_dim = kHeadDim;
    p.head_dim_value = kHeadDim;
    p.num_queries = seq;
    p.num_keys = seq;
    p.custom_mask_type = kCausal ? Attention::CausalFromTopLeft : Attention::NoCustomMask;
    p.q_strideM = q_row_stride;
    p.k_strideM = kv_row_stride;
    p.v_strideM = kv_row_stride;
    p.o_strideM = kNumHeads * kHeadDim;
    p.q_strideH = kGroup * kHeadDim;
    p.k_strideH = kHeadDim;
    p.v_strideH = kHeadDim;
    p.o_strideH = kGroup * kHeadDim;
    p.q_strideB = static_cast<int64_t>(seq) * q_row_stride;
    p.k_strideB = static_cast<int64_t>(seq) * kv_row_stride;
    p.v_strideB = static_cast<int64_t>(seq) * kv_row_stride;
    p.o_strideB = static_cast<int64_t>(seq) * kNumHeads * kHeadDim;
    if (!Attention::check_supported(p)) return cutlass::Status::kErrorNotSupported;
    kernel<<<p.getBlocksGrid(), p.getThreadsGrid(), smem, stream>>>(p);
    if (cudaGetLastError() != cudaSuccess) return cutlass::Status::kErrorInternal;
  }
  return cutlass::Status::kSuccess;
}

// Output projection
namespace ksynth_p2_ampere_tb64x64x64_s2::out_proj {

using ElementC = ElementOutput;
using EpilogueOp = cutlass::epilogue::thread::LinearCombination<
    ElementC, 128 / cutlass::sizeof_bits<ElementC>::value, ElementAccumulator, ElementAccumulator>;

using Gemm = cutlass::gemm::device::Gemm<
    ElementOperand, cutlass::layout::RowMajor,
    ElementOperand, cutlass::layout::ColumnMajor,
    ElementC, cutlass::layout::RowMajor,
    ElementAccumulator,
    cutlass::arch::OpClassTensorOp,
    ArchTag,
    ProjThreadblockShape, ProjWarpShape, InstructionShape,
    EpilogueOp,
    cutlass::gemm::threadblock::GemmIdentityThreadblockSwizzle<>,
    kProjStages>;

}  // namespace ksynth_p2_ampere_tb64x64x64_s2::out_proj

extern "C" cutlass::Status ksynth_p2_ampere_tb64x64x64_s2_out_proj(
    const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream) {
  using namespace ksynth_p2_ampere_tb64x64x64_s2;
  using Gemm = out_proj::Gemm;
  if (batch != 1) return cutlass::Status::kErrorInvalidProblem;
  // A null C disables the source term; a bias row broadcasts with ldc = 0.
  typename Gemm::Arguments args(
      {m, n, k},
      {static_cast<const ElementOperand*>(a), k},
      {static_cast<const ElementOperand*>(b), k},
      {static_cast<const out_proj::ElementC*>(c), 0},
      {static_cast<out_proj::ElementC*>(d), n},
      {ElementAccumulator(1), ElementAccumulator(c ? 1 : 0)});
  Gemm op;
  cutlass::Status status = op.can_implement(args);
  if (status != cutlass::Status::kSuccess) return status;
  return op(args, nullptr, stream);
}
