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

// Hopper FP16 Fused Multi-Head Attention
// Pattern p2_hopper (FMHA) for Hopper SM90, configuration tb64x64x64-c1x1x1-coop.
// Reference example: sm90-fmha
// Layout: A row-major, B column-major, C and D row-major.
// Operands fp16, accumulator fp32, boundary output fp32.
// Generated by ksynth; regenerate instead of editing.

#include <cuda_runtime.h>

#include "cutlass/cutlass.h"
#include "88_hopper_fmha/device/fmha.hpp"
#include "88_hopper_fmha/kernel/fmha_kernel_tma_warpspecialized.hpp"
#include "cute/tensor.hpp"
#include "cutlass/epilogue/collective/collective_builder.hpp"
#include "cutlass/gemm/collective/collective_builder.hpp"
#include "cutlass/gemm/device/gemm_universal_adapter.h"
#include "cutlass/gemm/kernel/gemm_universal.hpp"
#include "cutlass/util/device_memory.h"
#include "cutlass/util/packed_stride.hpp"

namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop {

using ArchTag = cutlass::arch::Sm90;
using ElementOperand = cutlass::half_t;
using ElementAccumulator = float;
using ElementOutput = float;

// Attention tile tb64x64x64-c1x1x1-coop.
// kQueriesPerBlock=64, kKeysPerBlock=64
constexpr int kQueriesPerBlock = 64;
constexpr int kKeysPerBlock = 64;
constexpr int kHeadDim = 64;
constexpr int kNumHeads = 12;
constexpr int kNumKVHeads = 12;
constexpr bool kCausal = true;
using ClusterShape = cute::Shape<cute::_1, cute::_1, cute::_1>;
using KernelSchedule = cutlass::gemm::KernelTmaWarpSpecializedCooperative;
using EpilogueSchedule = cutlass::epilogue::TmaWarpSpecializedCooperative;

// Projection GEMMs run a fixed tile.
using ProjTileShape = cute::Shape<cute::_128, cute::_128, cute::_64>;

}  // namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop

// Packed QKV projection
namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop::qkv_proj {

using ElementC = ElementOperand;
constexpr int kAlignC = 128 / cutlass::sizeof_bits<ElementC>::value;
constexpr int kAlignAB = 128 / cutlass::sizeof_bits<ElementOperand>::value;
using FusionOp = cutlass::epilogue::fusion::LinearCombination<ElementC, ElementAccumulator>;

using CollectiveEpilogue = typename cutlass::epilogue::collective::CollectiveBuilder<
    ArchTag, cutlass::arch::OpClassTensorOp,
    ProjTileShape, ClusterShape,
    cutlass::epilogue::collective::EpilogueTileAuto,
    ElementAccumulator, ElementAccumulator,
    ElementC, cutlass::layout::RowMajor, kAlignC,
    ElementC, cutlass::layout::RowMajor, kAlignC,
    EpilogueSchedule,
    FusionOp>::CollectiveOp;

using CollectiveMainloop = typename cutlass::gemm::collective::CollectiveBuilder<
    ArchTag, cutlass::arch::OpClassTensorOp,
    ElementOperand, cutlass::layout::RowMajor, kAlignAB,
    ElementOperand, cutlass::layout::ColumnMajor, kAlignAB,
    ElementAccumulator,
    ProjTileShape, ClusterShape,
    cutlass::gemm::collective::StageCountAutoCarveout<
        static_cast<int>(sizeof(typename CollectiveEpilogue::SharedStorage))>,
    KernelSchedule>::CollectiveOp;

using GemmKernel = cutlass::gemm::kernel::GemmUniversal<
    cute::Shape<int, int, int, int>,
    CollectiveMainloop,
    CollectiveEpilogue,
    void>;
using Gemm = cutlass::gemm::device::GemmUniversalAdapter<GemmKernel>;

}  // namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop::qkv_proj

extern "C" cutlass::Status ksynth_p2_hopper_tb64x64x64_c1x1x1_coop_qkv_proj(
    const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream) {
  using namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop;
  using Gemm = qkv_proj::Gemm;
  using ElementC = qkv_proj::ElementC;
  if (batch != 1) return cutlass::Status::kErrorInvalidProblem;
  auto stride_a = cutlass::make_cute_packed_stride(typename Gemm::GemmKernel::StrideA{}, {m, k, 1});
  auto stride_b = cutlass::make_cute_packed_stride(typename Gemm::GemmKernel::StrideB{}, {n, k, 1});
  auto stride_d = cutlass::make_cute_packed_stride(typename Gemm::GemmKernel::StrideD{}, {m, n, 1});
  auto stride_c = stride_d;
  if (c) cute::get<0>(stride_c) = 0;  // a bias row broadcasts over M
  typename Gemm::Arguments args{
      cutlass::gemm::GemmUniversalMode::kGemm,
      {m, n, k, 1},
      {static_cast<const ElementOperand*>(a), stride_a, static_cast<const ElementOperand*>(b), stride_b},
      {{}, static_cast<const ElementC*>(c), stride_c, static_cast<ElementC*>(d), stride_d}};
  args.epilogue.thread.alpha = ElementAccumulator(1);
  args.epilogue.thread.beta = ElementAccumulator(c ? 1 : 0);
  Gemm op;
  cutlass::Status status = op.can_implement(args);
  if (status != cutlass::Status::kSuccess) return status;
  cutlass::device_memory::allocation<uint8_t> workspace(Gemm::get_workspace_size(args));
  status = op.initialize(args, workspace.get(), stream);
  if (status != cutlass::Status::kSuccess) return status;
  return op.run(stream);
}

// Fused attention
namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop::attention {

using TileShapeFmha = cute::Shape<cute::Int<kQueriesPerBlock>, cute::Int<kKeysPerBlock>, cute::Int<kHeadDim>>;
using Mask = cutlass::fmha::collective::CausalMask;
// Warp-specialized TMA mainloop with online softmax; the problem shape
// carries separate query and K/V head counts.
using Mainloop = cutlass::fmha::collective::FmhaMainloopTmaWarpSpecialized<
    ElementOperand, ElementAccumulator, TileShapeFmha, ClusterShape, Mask>;
using Epilogue = cutlass::fmha::collective::FmhaEpilogueTma<ElementOperand, TileShapeFmha>;
using Kernel = cutlass::fmha::kernel::FmhaKernelTmaWarpSpecialized<
    cute::Shape<int, int, int, cute::Shape<int, int>>, Mainloop, Epilogue, KernelSchedule>;
using Operation = cutlass::fmha::device::FMHA<Kernel>;

}  // namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop::attention

extern "C" cutlass::Status ksynth_p2_hopper_tb64x64x64_c1x1x1_coop_attention(
    const void* q, const void* k, const void* v, void* o,
    int batch, int seq, int q_row_stride, int kv_row_stride, float scale, cudaStream_t stream) {
  using namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop;
  using Operation = attention::Operation;
  constexpr int kGroup = kNumHeads / kNumKVHeads;
  typename Operation::Arguments args{
      {seq, seq, kHeadDim, {kGroup, kNumKVHeads * batch}},
      {static_cast<const ElementOperand*>(q), q_row_stride,
       static_cast<const ElementOperand*>(k), kv_row_stride,
       static_cast<const ElementOperand*>(v), kv_row_stride, scale},
      {static_cast<ElementOperand*>(o), kNumHeads * kHeadDim}};
  Operation op;
  cutlass::Status status = op.can_implement(args);
  if (status != cutlass::Status::kSuccess) return status;
  cutlass::device_memory::allocation<uint8_t> workspace(Operation::get_workspace_size(args));
  status = op.initialize(args, workspace.get(), stream);
  if (status != cutlass::Status::kSuccess) return status;
  return op.run(stream);
}

// Output projection
namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop::out_proj {

using ElementC = ElementOutput;
constexpr int kAlignC = 128 / cutlass::sizeof_bits<ElementC>::value;
constexpr int kAlignAB = 128 / cutlass::sizeof_bits<ElementOperand>::value;
using FusionOp = cutlass::epilogue::fusion::LinearCombination<ElementC, ElementAccumulator>;

using CollectiveEpilogue = typename cutlass::epilogue::collective::CollectiveBuilder<
    ArchTag, cutlass::arch::OpClassTensorOp,
    ProjTileShape, ClusterShape,
    cutlass::epilogue::collective::EpilogueTileAuto,
    ElementAccumulator, ElementAccumulator,
    ElementC, cutlass::layout::RowMajor, kAlignC,
    ElementC, cutlass::layout::RowMajor, kAlignC,
    EpilogueSchedule,
    FusionOp>::CollectiveOp;

using CollectiveMainloop = typename cutlass::gemm::collective::CollectiveBuilder<
    ArchTag, cutlass::arch::OpClassTensorOp,
    ElementOperand, cutlass::layout::RowMajor, kAlignAB,
    ElementOperand, cutlass::layout::ColumnMajor, kAlignAB,
    ElementAccumulator,
    ProjTileShape, ClusterShape,
    cutlass::gemm::collective::StageCountAutoCarveout<
        static_cast<int>(sizeof(typename CollectiveEpilogue::SharedStorage))>,
    KernelSchedule>::CollectiveOp;

using GemmKernel = cutlass::gemm::kernel::GemmUniversal<
    cute::Shape<int, int, int, int>,
    CollectiveMainloop,
    CollectiveEpilogue,
    void>;
using Gemm = cutlass::gemm::device::GemmUniversalAdapter<GemmKernel>;

}  // namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop::out_proj

extern "C" cutlass::Status ksynth_p2_hopper_tb64x64x64_c1x1x1_coop_out_proj(
    const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream) {
  using namespace ksynth_p2_hopper_tb64x64x64_c1x1x1_coop;
  using Gemm = out_proj::Gemm;
  using ElementC = out_proj::ElementC;
  if (batch != 1) return cutlass::Status::kErrorInvalidProblem;
  auto stride_a = cutlass::make_cute_packed_stride(typename Gemm::GemmKernel::StrideA{}, {m, k, 1});
  auto stride_b = cutlass::make_cute_packed_stride(typename Gemm::GemmKernel::StrideB{}, {n, k, 1});
  auto stride_d = cutlass::make_cute_packed_stride(typename Gemm::GemmKernel::StrideD{}, {m, n, 1});
  auto stride_c = stride_d;
  if (c) cute::get<0>(stride_c) = 0;  // a bias row broadcasts over M
  typename Gemm::Arguments args{
      cutlass::gemm::GemmUniversalMode::kGemm,
      {m, n, k, 1},
      {static_cast<const ElementOperand*>(a), stride_a, static_cast<const ElementOperand*>(b), stride_b},
      {{}, static_cast<const ElementC*>(c), stride_c, static_cast<ElementC*>(d), stride_d}};
  args.epilogue.thread.alpha = ElementAccumulator(1);
  args.epilogue.thread.beta = ElementAccumulator(c ? 1 : 0);
  Gemm op;
  cutlass::Status status = op.can_implement(args);
  if (status != cutlass::Status::kSuccess) return status;
  cutlass::device_memory::allocation<uint8_t> workspace(Gemm::get_workspace_size(args));
  status = op.initialize(args, workspace.get(), stream);
  if (status != cutlass::Status::kSuccess) return status;
  return op.run(stream);
}
