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

// Hopper FP16 Stream-K GEMM
// Pattern p1_hopper (GEMM_StreamK) for Hopper SM90, configuration tb128x128x64-c2x2x1-coop.
// Reference example: ex48
// Layout: A row-major, B column-major, C and D row-major.
// Operands fp16, accumulator fp32, boundary output fp32.
// Generated by ksynth; regenerate instead of editing.

#include <cuda_runtime.h>

#include "cutlass/cutlass.h"
#include "cute/tensor.hpp"
#include "cutlass/epilogue/collective/collective_builder.hpp"
#include "cutlass/gemm/collective/collective_builder.hpp"
#include "cutlass/gemm/device/gemm_universal_adapter.h"
#include "cutlass/gemm/kernel/gemm_universal.hpp"
#include "cutlass/gemm/kernel/tile_scheduler.hpp"
#include "cutlass/util/device_memory.h"
#include "cutlass/util/packed_stride.hpp"

namespace ksynth_p1_hopper_tb128x128x64_c2x2x1_coop {

using ArchTag = cutlass::arch::Sm90;
using ElementOperand = cutlass::half_t;
using ElementAccumulator = float;
using ElementOutput = float;

// Configuration tb128x128x64-c2x2x1-coop.
using TileShape = cute::Shape<cute::_128, cute::_128, cute::_64>;
using ClusterShape = cute::Shape<cute::_2, cute::_2, cute::_1>;
using KernelSchedule = cutlass::gemm::KernelTmaWarpSpecializedCooperative;
using EpilogueSchedule = cutlass::epilogue::TmaWarpSpecializedCooperative;

}  // namespace ksynth_p1_hopper_tb128x128x64_c2x2x1_coop

// Stream-K GEMM
namespace ksynth_p1_hopper_tb128x128x64_c2x2x1_coop::gemm {

using ElementC = ElementOutput;
constexpr int kAlignC = 128 / cutlass::sizeof_bits<ElementC>::value;
constexpr int kAlignAB = 128 / cutlass::sizeof_bits<ElementOperand>::value;
using FusionOp = cutlass::epilogue::fusion::LinearCombination<ElementC, ElementAccumulator>;

using CollectiveEpilogue = typename cutlass::epilogue::collective::CollectiveBuilder<
    ArchTag, cutlass::arch::OpClassTensorOp,
    TileShape, ClusterShape,
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
    TileShape, ClusterShape,
    cutlass::gemm::collective::StageCountAutoCarveout<
        static_cast<int>(sizeof(typename CollectiveEpilogue::SharedStorage))>,
    KernelSchedule>::CollectiveOp;

using GemmKernel = cutlass::gemm::kernel::GemmUniversal<
    cute::Shape<int, int, int, int>,
    CollectiveMainloop,
    CollectiveEpilogue,
    cutlass::gemm::StreamKScheduler>;
using Gemm = cutlass::gemm::device::GemmUniversalAdapter<GemmKernel>;

}  // namespace ksynth_p1_hopper_tb128x128x64_c2x2x1_coop::gemm

extern "C" cutlass::Status ksynth_p1_hopper_tb128x128x64_c2x2x1_coop_gemm(
    const void* a, const void* b, const void* c, void* d,
    int m, int n, int k, int batch, cudaStream_t stream) {
  using namespace ksynth_p1_hopper_tb128x128x64_c2x2x1_coop;
  using Gemm = gemm::Gemm;
  using ElementC = gemm::ElementC;
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
