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

#include "ksynth/codegen.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "ksynth/examples_index.hpp"
#include "ksynth/hash.hpp"

namespace ksynth {

namespace {

using Values = std::map<std::string, std::string>;

std::string element_token(DType t) {
  switch (t) {
    case DType::tf32:
      return "cutlass::tfloat32_t";
    case DType::fp16:
      return "cutlass::half_t";
    case DType::bf16:
      return "cutlass::bfloat16_t";
    case DType::fp32:
      break;
  }
  return "float";
}

std::string torch_dtype(DType t) {
  switch (t) {
    case DType::fp16:
      return "torch::kFloat16";
    case DType::bf16:
      return "torch::kBFloat16";
    default:
      return "torch::kFloat32";
  }
}

std::string arch_tag(Arch a) { return a == Arch::SM80 ? "cutlass::arch::Sm80" : "cutlass::arch::Sm90"; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodegenError("cannot read template " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string load_template(const std::string& name, const EmitOptions& opts) {
  if (!opts.template_dir.empty() && std::filesystem::exists(opts.template_dir / name)) {
    return read_file(opts.template_dir / name);
  }
  return read_file(std::filesystem::path(data_dir()) / "templates" / name);
}

// Substitutes {{NAME}} placeholders (upper-case names only, so brace-init
// lists such as "{{}, c}" pass through). Values are inserted verbatim.
std::string render(const std::string& name, const std::string& text, const Values& values) {
  static const std::regex kPlaceholder(R"(\{\{([A-Z][A-Z0-9_]*)\}\})");
  std::string out;
  out.reserve(text.size() * 2);
  auto last = text.cbegin();
  for (std::sregex_iterator it(text.begin(), text.end(), kPlaceholder), end; it != end; ++it) {
    const auto& m = *it;
    out.append(last, m[0].first);
    const auto v = values.find(m[1].str());
    if (v == values.end()) throw CodegenError("template " + name + ": unresolved placeholder {{" + m[1].str() + "}}");
    out += v->second;
    last = m[0].second;
  }
  out.append(last, text.cend());
  return out;
}

std::string symbolize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  }
  return s;
}

const Shape& role_shape(const ProposedPattern& p, const std::string& role) {
  for (const auto& [r, s] : p.descriptor.input_shapes) {
    if (r == role) return s;
  }
  throw CodegenError("pattern " + p.pattern_id + " has no shape for role '" + role + "'");
}

bool has_role(const ProposedPattern& p, const std::string& role) {
  return std::any_of(p.roles.begin(), p.roles.end(), [&](const auto& r) { return r.first == role; });
}

std::int64_t last_dim(const Shape& s) {
  if (s.empty()) throw CodegenError("scalar operand where a matrix was expected");
  return s.back();
}

std::int64_t rows_of(const Shape& s) { return num_elements(s) / last_dim(s); }

// Role sets each rule's wrapper understands.
void check_roles(const ProposedPattern& p) {
  std::set<std::string> have;
  for (const auto& [r, _] : p.roles) have.insert(r);
  auto fail = [&](const std::string& why) {
    std::string got;
    for (const auto& [r, _] : p.roles) got += (got.empty() ? "" : ",") + r;
    throw CodegenError("boundary arity mismatch for " + p.pattern_id + " (" + std::string(to_string(p.rule)) +
                       "): " + why + "; roles [" + got + "]");
  };
  if (have.size() != p.roles.size()) fail("duplicate role");
  auto need = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) {
      if (!have.count(n)) fail(std::string("missing role ") + n);
    }
  };
  auto allow = [&](std::initializer_list<const char*> names) {
    std::set<std::string> ok(names.begin(), names.end());
    for (const auto& r : have) {
      if (!ok.count(r)) fail("unexpected role " + r);
    }
  };
  switch (p.rule) {
    case RuleTag::GEMM:
    case RuleTag::BatchedGEMM:
    case RuleTag::GEMM_StreamK:
      need({"A", "B"});
      allow({"A", "B"});
      break;
    case RuleTag::MLP_GELU:
      need({"x", "w1", "w2"});
      allow({"x", "w1", "b1", "w2", "b2"});
      break;
    case RuleTag::MLP_SwiGLU:
      need({"x", "w_gate", "w_up", "w_down"});
      allow({"x", "w_gate", "w_up", "w_down"});
      break;
    case RuleTag::FMHA:
    case RuleTag::FMHA_GQA:
      need({"x", "w_o"});
      if (have.count("w_qkv")) {
        allow({"x", "w_qkv", "b_qkv", "w_o", "b_o"});
      } else {
        need({"w_q", "w_k", "w_v"});
        allow({"x", "w_q", "w_k", "w_v", "b_q", "b_k", "b_v", "w_o", "b_o"});
      }
      break;
  }
  if (p.output.empty()) fail("pattern has no output");
}

enum class StageKind { gemm, dual, attention };
enum class Epilogue { linear, gelu, silu, mul_source };

struct Stage {
  std::string name;
  StageKind kind = StageKind::gemm;
  std::string title;
  Epilogue epilogue = Epilogue::linear;
  bool final = false;   // writes the fp32 boundary output
  bool proj = false;    // attention projection running the fixed tile
};

std::vector<Stage> plan(const ProposedPattern& p) {
  switch (p.rule) {
    case RuleTag::GEMM:
      return {{"gemm", StageKind::gemm, "Data-parallel GEMM", Epilogue::linear, true}};
    case RuleTag::BatchedGEMM:
      return {{"gemm", StageKind::gemm, "Batched GEMM", Epilogue::linear, true}};
    case RuleTag::GEMM_StreamK:
      return {{"gemm", StageKind::gemm, "Stream-K GEMM", Epilogue::linear, true}};
    case RuleTag::MLP_GELU:
      return {{"fc1", StageKind::gemm, "GEMM1 with bias and GELU epilogue", Epilogue::gelu},
              {"fc2", StageKind::gemm, "GEMM2 with bias", Epilogue::linear, true}};
    case RuleTag::MLP_SwiGLU:
      if (p.arch == Arch::SM80) {
        return {{"gate_up", StageKind::dual, "Dual GEMM: SiLU(x * w_gate) * (x * w_up)"},
                {"down", StageKind::gemm, "Down projection", Epilogue::linear, true}};
      }
      return {{"gate", StageKind::gemm, "Gate GEMM with SiLU epilogue", Epilogue::silu},
              {"up", StageKind::gemm, "Up GEMM multiplied by the gate activation", Epilogue::mul_source},
              {"down", StageKind::gemm, "Down projection", Epilogue::linear, true}};
    case RuleTag::FMHA:
    case RuleTag::FMHA_GQA: {
      std::vector<Stage> s;
      if (has_role(p, "w_qkv")) {
        s.push_back({"qkv_proj", StageKind::gemm, "Packed QKV projection", Epilogue::linear, false, true});
      } else {
        s.push_back({"q_proj", StageKind::gemm, "Query projection", Epilogue::linear, false, true});
        s.push_back({"k_proj", StageKind::gemm, "Key projection", Epilogue::linear, false, true});
        s.push_back({"v_proj", StageKind::gemm, "Value projection", Epilogue::linear, false, true});
      }
      s.push_back({"attention", StageKind::attention,
                   p.rule == RuleTag::FMHA_GQA ? "Fused attention over grouped K/V heads" : "Fused attention"});
      s.push_back({"out_proj", StageKind::gemm, "Output projection", Epilogue::linear, true, true});
      return s;
    }
  }
  return {};
}

std::string sm80_epilogue(Epilogue e) {
  return e == Epilogue::gelu ? "cutlass::epilogue::thread::LinearCombinationGELU"
                             : "cutlass::epilogue::thread::LinearCombination";
}

std::string sm90_fusion(Epilogue e) {
  switch (e) {
    case Epilogue::gelu:
      return "cutlass::epilogue::fusion::LinCombEltAct<\n    cutlass::epilogue::thread::GELU_taylor, ElementC, "
             "ElementAccumulator>";
    case Epilogue::silu:
      return "cutlass::epilogue::fusion::LinCombEltAct<\n    cutlass::epilogue::thread::SiLu, ElementC, "
             "ElementAccumulator>";
    case Epilogue::mul_source:
      return "cutlass::epilogue::fusion::Sm90EVT<\n"
             "    cutlass::epilogue::fusion::Sm90Compute<cutlass::multiplies, ElementC, ElementAccumulator>,\n"
             "    cutlass::epilogue::fusion::Sm90SrcFetch<ElementC>,\n"
             "    cutlass::epilogue::fusion::Sm90AccFetch>";
    case Epilogue::linear:
      break;
  }
  return "cutlass::epilogue::fusion::LinearCombination<ElementC, ElementAccumulator>";
}

std::string instruction_shape(DType t) { return t == DType::tf32 ? "16, 8, 8" : "16, 8, 16"; }

std::pair<std::string, std::string> sm90_schedules(Schedule s, bool ptr_array) {
  const std::string kind = s == Schedule::cooperative ? "Cooperative" : "Pingpong";
  if (ptr_array) {
    return {"cutlass::gemm::KernelPtrArrayTmaWarpSpecialized" + kind,
            "cutlass::epilogue::PtrArrayTmaWarpSpecialized" + kind};
  }
  return {"cutlass::gemm::KernelTmaWarpSpecialized" + kind,
          s == Schedule::cooperative ? "cutlass::epilogue::TmaWarpSpecializedCooperative"
                                     : "cutlass::epilogue::TmaWarpSpecialized"};
}

std::string stage_template(const ProposedPattern& p, const Stage& st) {
  const bool sm80 = p.arch == Arch::SM80;
  if (st.kind == StageKind::dual) return "sm80_dual_gemm.cu.in";
  if (st.kind == StageKind::attention) return sm80 ? "sm80_fmha.cu.in" : "sm90_fmha.cu.in";
  if (p.rule == RuleTag::BatchedGEMM) return sm80 ? "sm80_gemm_batched.cu.in" : "sm90_gemm_array.cu.in";
  if (p.rule == RuleTag::GEMM_StreamK && sm80) return "sm80_gemm_streamk.cu.in";
  return sm80 ? "sm80_gemm.cu.in" : "sm90_gemm.cu.in";
}

std::set<std::string> includes_for(const ProposedPattern& p, const std::vector<Stage>& stages) {
  std::set<std::string> inc;
  if (p.arch == Arch::SM80) {
    inc.insert("cutlass/epilogue/thread/linear_combination.h");
    for (const auto& st : stages) {
      if (st.kind == StageKind::dual) {
        inc.insert("45_dual_gemm/device/dual_gemm.h");
        inc.insert("45_dual_gemm/thread/left_silu_and_mul.h");
      } else if (st.kind == StageKind::attention) {
        inc.insert("41_fused_multi_head_attention/kernel_forward.h");
      } else if (p.rule == RuleTag::BatchedGEMM) {
        inc.insert("cutlass/gemm/device/gemm_batched.h");
      } else if (p.rule == RuleTag::GEMM_StreamK) {
        inc.insert("cutlass/gemm/device/gemm_universal.h");
        inc.insert("cutlass/util/device_memory.h");
      } else {
        inc.insert("cutlass/gemm/device/gemm.h");
      }
      if (st.epilogue == Epilogue::gelu) inc.insert("cutlass/epilogue/thread/linear_combination_gelu.h");
    }
    return inc;
  }
  inc.insert("cute/tensor.hpp");
  inc.insert("cutlass/util/device_memory.h");
  for (const auto& st : stages) {
    if (st.kind == StageKind::attention) {
      inc.insert("88_hopper_fmha/device/fmha.hpp");
      inc.insert("88_hopper_fmha/kernel/fmha_kernel_tma_warpspecialized.hpp");
      continue;
    }
    inc.insert("cutlass/epilogue/collective/collective_builder.hpp");
    inc.insert("cutlass/gemm/collective/collective_builder.hpp");
    inc.insert("cutlass/gemm/device/gemm_universal_adapter.h");
    inc.insert("cutlass/gemm/kernel/gemm_universal.hpp");
    inc.insert("cutlass/util/packed_stride.hpp");
    if (p.rule == RuleTag::BatchedGEMM) {
      inc.insert("cutlass/gemm/group_array_problem_shape.hpp");
      inc.insert("cutlass/util/device_memory.h");
    }
    if (p.rule == RuleTag::GEMM_StreamK) inc.insert("cutlass/gemm/kernel/tile_scheduler.hpp");
    if (st.epilogue == Epilogue::mul_source) inc.insert("cutlass/epilogue/fusion/sm90_visitor_compute_tma_warpspecialized.hpp");
  }
  return inc;
}

std::string include_block(const ProposedPattern& p, const std::vector<Stage>& stages) {
  std::string out;
  if (p.arch == Arch::SM90 && p.rule == RuleTag::BatchedGEMM) out += "#include <vector>\n\n";
  for (const auto& i : includes_for(p, stages)) out += "#include \"" + i + "\"\n";
  return out;
}

std::string entry_symbol_for(const ProposedPattern& p, const TuneConfig& c) {
  return "ksynth_" + symbolize(p.pattern_id) + "_" + symbolize(c.slug());
}

std::string example_for(const ProposedPattern& p, std::size_t rank) {
  if (p.supporting_examples.empty() && rank == 0) return "none";
  if (rank >= p.supporting_examples.size()) {
    throw CodegenError("pattern " + p.pattern_id + " has no supporting example at rank " + std::to_string(rank));
  }
  return p.supporting_examples[rank];
}

bool is_attention(const ProposedPattern& p) { return is_attention_rule(p.rule); }

void check_config(const ProposedPattern& p, const TuneConfig& c, const ArchProfile& profile) {
  if (c.arch != profile.arch || c.arch != p.arch) {
    throw CodegenError(fmt::format("config/template mismatch: config targets {}, profile {}, pattern {}",
                                   to_string(c.arch), to_string(profile.arch), to_string(p.arch)));
  }
  if (c.arch == Arch::SM90 && c.stages != 0) {
    throw CodegenError("config/template mismatch: SM90 templates take no pipeline stage count");
  }
  if (c.arch == Arch::SM80 && c.cluster != Cluster{1, 1, 1}) {
    throw CodegenError("config/template mismatch: SM80 templates take no cluster shape");
  }
  if (c.arch == Arch::SM90 && p.rule == RuleTag::GEMM_StreamK && c.schedule != Schedule::cooperative) {
    throw CodegenError("config/template mismatch: the stream-K scheduler requires the cooperative schedule");
  }
  if (p.dtype == DType::fp32) {
    throw CodegenError("unsupported dtype fp32 for tensor-core templates (use tf32)");
  }
  if (is_attention(p) && c.tb_tile[2] != p.params.head_dim) {
    throw CodegenError(fmt::format("config/template mismatch: attention tile K {} differs from head_dim {}",
                                   c.tb_tile[2], p.params.head_dim));
  }
  const Validation v = validate_config(c, profile, gemm_problem(p));
  if (!v.ok) throw CodegenError("config " + c.slug() + " rejected: " + v.reason);
}

Values config_values(const ProposedPattern& p, const TuneConfig& c) {
  Values v;
  v["SLUG"] = c.slug();
  v["TB_M"] = std::to_string(c.tb_tile[0]);
  v["TB_N"] = std::to_string(c.tb_tile[1]);
  v["TB_K"] = std::to_string(c.tb_tile[2]);
  v["WARP_M"] = std::to_string(c.warp_tile[0]);
  v["WARP_N"] = std::to_string(c.warp_tile[1]);
  v["WARP_K"] = std::to_string(c.warp_tile[2]);
  v["STAGES"] = std::to_string(c.stages);
  v["CL_X"] = std::to_string(c.cluster[0]);
  v["CL_Y"] = std::to_string(c.cluster[1]);
  v["CL_Z"] = std::to_string(c.cluster[2]);
  v["INSTR"] = instruction_shape(p.dtype);
  const auto [ks, es] = sm90_schedules(c.schedule, p.rule == RuleTag::BatchedGEMM);
  v["KERNEL_SCHEDULE"] = ks;
  v["EPILOGUE_SCHEDULE"] = es;
  if (is_attention(p)) {
    v["Q_BLOCK"] = std::to_string(c.tb_tile[0]);
    v["K_BLOCK"] = std::to_string(c.tb_tile[1]);
    v["HEAD_DIM"] = std::to_string(p.params.head_dim);
    v["NUM_HEADS"] = std::to_string(p.params.num_heads);
    v["KV_HEADS"] = std::to_string(p.params.kv_heads);
    v["CAUSAL"] = p.params.causal ? "true" : "false";
  }
  return v;
}

Values stage_values(const ProposedPattern& p, const Stage& st, const std::string& ns, const std::string& symbol) {
  Values v;
  v["NAMESPACE"] = ns;
  v["STAGE"] = st.name;
  v["STAGE_TITLE"] = st.title;
  v["SYMBOL"] = symbol;
  v["ELEMENT_C"] = st.final ? "ElementOutput" : "ElementOperand";
  v["TB_SHAPE"] = st.proj ? "ProjThreadblockShape" : "ThreadblockShape";
  v["WARP_SHAPE"] = st.proj ? "ProjWarpShape" : "WarpShape";
  v["STAGES"] = st.proj ? "kProjStages" : "kStages";
  v["TILE_SHAPE"] = st.proj ? "ProjTileShape" : "TileShape";
  v["EPILOGUE_OP"] = sm80_epilogue(st.epilogue);
  v["FUSION_OP"] = sm90_fusion(st.epilogue);
  v["TILE_SCHEDULER"] = p.rule == RuleTag::GEMM_StreamK ? "cutlass::gemm::StreamKScheduler" : "void";
  if (st.epilogue == Epilogue::mul_source) {
    v["C_STRIDE"] = "// C carries the gate activation at full size.";
    v["EPILOGUE_ARGS"] = "// The multiply node takes no scalar arguments.";
  } else {
    v["C_STRIDE"] = "if (c) cute::get<0>(stride_c) = 0;  // a bias row broadcasts over M";
    v["EPILOGUE_ARGS"] =
        "args.epilogue.thread.alpha = ElementAccumulator(1);\n"
        "  args.epilogue.thread.beta = ElementAccumulator(c ? 1 : 0);";
  }
  v["MASK"] = p.params.causal ? "cutlass::fmha::collective::CausalMask" : "cutlass::fmha::collective::NoMask";
  return v;
}

std::string config_template(const ProposedPattern& p) {
  if (is_attention(p)) return p.arch == Arch::SM80 ? "config_fmha_sm80.cu.in" : "config_fmha_sm90.cu.in";
  return p.arch == Arch::SM80 ? "config_sm80.cu.in" : "config_sm90.cu.in";
}

std::string declaration(StageKind kind, const std::string& symbol) {
  switch (kind) {
    case StageKind::dual:
      return "extern \"C\" cutlass::Status " + symbol +
             "(const void* a, const void* b0, const void* b1, void* d,\n    int m, int n, int k, cudaStream_t stream);\n";
    case StageKind::attention:
      return "extern \"C\" cutlass::Status " + symbol +
             "(const void* q, const void* k, const void* v, void* o,\n    int batch, int seq, int q_row_stride, "
             "int kv_row_stride, float scale, cudaStream_t stream);\n";
    case StageKind::gemm:
      break;
  }
  return "extern \"C\" cutlass::Status " + symbol +
         "(const void* a, const void* b, const void* c, void* d,\n    int m, int n, int k, int batch, cudaStream_t "
         "stream);\n";
}

// Wrapper body, one rule at a time. `sym(stage)` names the launcher.
std::string wrapper_body(const ProposedPattern& p, const std::map<std::string, std::string>& sym) {
  std::string b;
  auto line = [&](const std::string& s) { b += "  " + s + "\n"; };
  auto bias = [&](const std::string& role, const std::string& dtype) {
    if (has_role(p, role)) {
      line("const auto " + role + "_c = " + role + ".to(" + dtype + ").contiguous();");
      return role + "_c.data_ptr()";
    }
    return std::string("nullptr");
  };
  switch (p.rule) {
    case RuleTag::GEMM:
    case RuleTag::BatchedGEMM:
    case RuleTag::GEMM_StreamK: {
      const bool batched = p.rule == RuleTag::BatchedGEMM;
      line(std::string("const int batch = ") + (batched ? "static_cast<int>(A.size(0));" : "1;"));
      line("const int m = static_cast<int>(A.size(-2));");
      line("const int k = static_cast<int>(A.size(-1));");
      line("const int n = static_cast<int>(B.size(-1));");
      line("TORCH_CHECK(B.size(-2) == k, \"A and B inner dimensions differ\");");
      line("TORCH_CHECK(out.scalar_type() == torch::kFloat32, \"out must be fp32\");");
      line("const auto a = A.to(kOperand).contiguous();");
      line("const auto b = col_major(B, kOperand);");
      line("KSYNTH_CHECK(" + sym.at("gemm") + "(a.data_ptr(), b.data_ptr(), nullptr, out.data_ptr(), m, n, k, batch, stream));");
      break;
    }
    case RuleTag::MLP_GELU: {
      line("const int c = static_cast<int>(x.size(-1));");
      line("const int rows = static_cast<int>(x.numel() / c);");
      line("const int h = static_cast<int>(w1.size(-1));");
      line("const int c_out = static_cast<int>(w2.size(-1));");
      line("const auto xs = x.to(kOperand).contiguous();");
      line("const auto w1_c = col_major(w1, kOperand);");
      line("const auto w2_c = col_major(w2, kOperand);");
      const std::string b1 = bias("b1", "kOperand");
      const std::string b2 = bias("b2", "torch::kFloat32");
      line("auto hidden = torch::empty({rows, h}, xs.options());");
      line("// GEMM1 applies bias and GELU in its epilogue; GEMM2 adds its bias.");
      line("KSYNTH_CHECK(" + sym.at("fc1") + "(xs.data_ptr(), w1_c.data_ptr(), " + b1 +
           ", hidden.data_ptr(), rows, h, c, 1, stream));");
      line("KSYNTH_CHECK(" + sym.at("fc2") + "(hidden.data_ptr(), w2_c.data_ptr(), " + b2 +
           ", out.data_ptr(), rows, c_out, h, 1, stream));");
      break;
    }
    case RuleTag::MLP_SwiGLU: {
      line("const int c = static_cast<int>(x.size(-1));");
      line("const int rows = static_cast<int>(x.numel() / c);");
      line("const int inter = static_cast<int>(w_gate.size(-1));");
      line("const int c_out = static_cast<int>(w_down.size(-1));");
      line("const auto xs = x.to(kOperand).contiguous();");
      line("const auto w_gate_c = col_major(w_gate, kOperand);");
      line("const auto w_up_c = col_major(w_up, kOperand);");
      line("const auto w_down_c = col_major(w_down, kOperand);");
      line("auto act = torch::empty({rows, inter}, xs.options());");
      if (p.arch == Arch::SM80) {
        line("// act = SiLU(x * w_gate) * (x * w_up), both products in one dual GEMM.");
        line("KSYNTH_CHECK(" + sym.at("gate_up") +
             "(xs.data_ptr(), w_gate_c.data_ptr(), w_up_c.data_ptr(), act.data_ptr(), rows, inter, c, stream));");
      } else {
        line("auto gate_act = torch::empty({rows, inter}, xs.options());");
        line("// gate_act = SiLU(x * w_gate); act = (x * w_up) * gate_act.");
        line("KSYNTH_CHECK(" + sym.at("gate") +
             "(xs.data_ptr(), w_gate_c.data_ptr(), nullptr, gate_act.data_ptr(), rows, inter, c, 1, stream));");
        line("KSYNTH_CHECK(" + sym.at("up") +
             "(xs.data_ptr(), w_up_c.data_ptr(), gate_act.data_ptr(), act.data_ptr(), rows, inter, c, 1, stream));");
      }
      line("KSYNTH_CHECK(" + sym.at("down") +
           "(act.data_ptr(), w_down_c.data_ptr(), nullptr, out.data_ptr(), rows, c_out, inter, 1, stream));");
      break;
    }
    case RuleTag::FMHA:
    case RuleTag::FMHA_GQA: {
      line("const int batch = static_cast<int>(x.size(0));");
      line("const int seq = static_cast<int>(x.size(1));");
      line("const int c = static_cast<int>(x.size(2));");
      line("const int rows = batch * seq;");
      line(fmt::format("constexpr int kHeads = {};", p.params.num_heads));
      line(fmt::format("constexpr int kKVHeads = {};", p.params.kv_heads));
      line(fmt::format("constexpr int kHeadDim = {};", p.params.head_dim));
      line(fmt::format("const float scale = static_cast<float>({});", p.params.scale));
      line("const auto xs = x.to(kOperand).contiguous();");
      line("auto ctx = torch::empty({rows, kHeads * kHeadDim}, xs.options());");
      if (has_role(p, "w_qkv")) {
        line("const auto w_qkv_c = col_major(w_qkv, kOperand);");
        const std::string bq = bias("b_qkv", "kOperand");
        line("const int width = static_cast<int>(w_qkv.size(-1));");
        line("auto qkv = torch::empty({rows, width}, xs.options());");
        line("KSYNTH_CHECK(" + sym.at("qkv_proj") + "(xs.data_ptr(), w_qkv_c.data_ptr(), " + bq +
             ", qkv.data_ptr(), rows, width, c, 1, stream));");
        line("// Q, K and V are column blocks of the packed projection.");
        line("const int q_width = kHeads * kHeadDim;");
        line("const int kv_width = kKVHeads * kHeadDim;");
        line("KSYNTH_CHECK(" + sym.at("attention") +
             "(qkv.data_ptr(), offset(qkv, q_width), offset(qkv, q_width + kv_width), ctx.data_ptr(),\n"
             "                     batch, seq, width, width, scale, stream));");
      } else {
        for (const char* r : {"q", "k", "v"}) {
          const std::string role = std::string("w_") + r;
          line("const auto " + role + "_c = col_major(" + role + ", kOperand);");
        }
        const std::string bq = bias("b_q", "kOperand");
        const std::string bk = bias("b_k", "kOperand");
        const std::string bv = bias("b_v", "kOperand");
        line("auto q = torch::empty({rows, kHeads * kHeadDim}, xs.options());");
        line("auto k = torch::empty({rows, kKVHeads * kHeadDim}, xs.options());");
        line("auto v = torch::empty({rows, kKVHeads * kHeadDim}, xs.options());");
        line("KSYNTH_CHECK(" + sym.at("q_proj") + "(xs.data_ptr(), w_q_c.data_ptr(), " + bq +
             ", q.data_ptr(), rows, kHeads * kHeadDim, c, 1, stream));");
        line("KSYNTH_CHECK(" + sym.at("k_proj") + "(xs.data_ptr(), w_k_c.data_ptr(), " + bk +
             ", k.data_ptr(), rows, kKVHeads * kHeadDim, c, 1, stream));");
        line("KSYNTH_CHECK(" + sym.at("v_proj") + "(xs.data_ptr(), w_v_c.data_ptr(), " + bv +
             ", v.data_ptr(), rows, kKVHeads * kHeadDim, c, 1, stream));");
        line("KSYNTH_CHECK(" + sym.at("attention") +
             "(q.data_ptr(), k.data_ptr(), v.data_ptr(), ctx.data_ptr(),\n"
             "                     batch, seq, kHeads * kHeadDim, kKVHeads * kHeadDim, scale, stream));");
      }
      line("const auto w_o_c = col_major(w_o, kOperand);");
      const std::string bo = bias("b_o", "torch::kFloat32");
      line("KSYNTH_CHECK(" + sym.at("out_proj") + "(ctx.data_ptr(), w_o_c.data_ptr(), " + bo +
           ", out.data_ptr(), rows, static_cast<int>(w_o.size(-1)), kHeads * kHeadDim, 1, stream));");
      break;
    }
  }
  return b;
}

std::size_t count_of(const std::string& text, const std::string& token) {
  std::size_t n = 0;
  for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + token.size())) ++n;
  return n;
}

std::vector<std::smatch> all_matches(const std::string& text, const std::regex& re) {
  std::vector<std::smatch> out;
  for (std::sregex_iterator it(text.begin(), text.end(), re), end; it != end; ++it) out.push_back(*it);
  return out;
}

std::string triple(int a, int b, int c) { return fmt::format("({}, {}, {})", a, b, c); }

}  // namespace

std::pair<int, int> fmha_tile(std::int64_t head_dim) { return head_dim <= 64 ? std::pair{64, 64} : std::pair{32, 128}; }

TuneConfig default_config(const ProposedPattern& p) {
  const ArchProfile& prof = arch_profile(p.arch);
  TuneConfig c;
  c.arch = p.arch;
  if (is_attention_rule(p.rule)) {
    const auto [q, k] = fmha_tile(p.params.head_dim);
    c.tb_tile = {q, k, static_cast<int>(p.params.head_dim)};
  } else {
    c.tb_tile = p.arch == Arch::SM80 ? Tile{128, 128, 32} : Tile{128, 128, 64};
  }
  if (p.arch == Arch::SM80) {
    c.stages = is_attention_rule(p.rule) ? 2 : 3;
    c.warp_tile = derive_warp_tile(c.tb_tile, prof);
  } else {
    c.cluster = {1, 1, 1};
    c.schedule = Schedule::cooperative;
  }
  return c;
}

GemmProblem gemm_problem(const ProposedPattern& p) {
  GemmProblem g;
  g.dtype_in = p.dtype;
  g.dtype_acc = DType::fp32;
  g.dtype_out = DType::fp32;
  switch (p.rule) {
    case RuleTag::GEMM:
    case RuleTag::GEMM_StreamK:
    case RuleTag::BatchedGEMM: {
      const Shape& a = role_shape(p, "A");
      const Shape& b = role_shape(p, "B");
      if (a.size() < 2 || b.size() < 2) throw CodegenError("GEMM operands must be at least rank 2");
      g.M = a[a.size() - 2];
      g.K = a.back();
      g.N = b.back();
      if (p.rule == RuleTag::BatchedGEMM) {
        g.batch = num_elements(a) / (g.M * g.K);
        g.grid_schedule = GridSchedule::batched;
      } else if (p.rule == RuleTag::GEMM_StreamK) {
        g.grid_schedule = GridSchedule::stream_k;
      }
      break;
    }
    case RuleTag::MLP_GELU: {
      const Shape& x = role_shape(p, "x");
      g.M = rows_of(x);
      g.K = last_dim(x);
      g.N = last_dim(role_shape(p, "w1"));
      break;
    }
    case RuleTag::MLP_SwiGLU: {
      const Shape& x = role_shape(p, "x");
      g.M = rows_of(x);
      g.K = last_dim(x);
      g.N = last_dim(role_shape(p, "w_gate"));
      break;
    }
    case RuleTag::FMHA:
    case RuleTag::FMHA_GQA: {
      const Shape& x = role_shape(p, "x");
      g.M = rows_of(x);
      g.K = last_dim(x);
      g.N = has_role(p, "w_qkv") ? last_dim(role_shape(p, "w_qkv")) : last_dim(role_shape(p, "w_q"));
      break;
    }
  }
  return g;
}

std::string emit_wrapper(const KernelSpec& spec, const ProposedPattern& p, const EmitOptions& opts) {
  check_roles(p);
  const auto stages = plan(p);
  if (stages.size() != spec.launchers.size()) {
    throw CodegenError("spec for " + spec.pattern_id + " does not match the pattern's kernel plan");
  }
  std::map<std::string, std::string> sym;
  std::string decls;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    sym[stages[i].name] = spec.launchers[i];
    decls += declaration(stages[i].kind, spec.launchers[i]);
  }
  std::string params;
  for (const auto& [role, _] : p.roles) params += "const torch::Tensor& " + role + ", ";
  params += "torch::Tensor& out";

  std::string flags;
  for (const auto& f : spec.build_flags) flags += (flags.empty() ? "" : " ") + f;

  Values v;
  v["PATTERN_ID"] = p.pattern_id;
  v["RULE"] = std::string(to_string(p.rule));
  v["ARCH"] = std::string(to_string(spec.arch));
  v["SLUG"] = spec.config.slug();
  v["BUILD_FLAGS"] = flags;
  v["DECLARATIONS"] = decls;
  v["FUNCTION"] = symbolize(p.pattern_id) + "_forward";
  v["PARAMS"] = params;
  v["TORCH_DTYPE"] = torch_dtype(p.dtype);
  v["BODY"] = wrapper_body(p, sym);
  return render("wrapper.cpp.in", load_template("wrapper.cpp.in", opts), v);
}

KernelSpec emit_kernel(const ProposedPattern& p, const TuneConfig& config, const ArchProfile& profile,
                       const EmitOptions& opts) {
  check_roles(p);
  check_config(p, config, profile);

  KernelSpec spec;
  spec.pattern_id = p.pattern_id;
  spec.rule = p.rule;
  spec.dtype = p.dtype;
  spec.arch = p.arch;
  spec.config = config;
  spec.entry_symbol = entry_symbol_for(p, config);
  spec.build_flags = {"-std=c++17", "-O3", p.arch == Arch::SM80 ? "-arch=sm_80" : "-arch=sm_90a",
                      "--expt-relaxed-constexpr", "-DNDEBUG"};

  const auto stages = plan(p);
  const std::string ns = spec.entry_symbol;
  const std::string cfg_name = config_template(p);
  const std::string cfg_text = render(cfg_name, load_template(cfg_name, opts), config_values(p, config));

  std::string body;
  for (const auto& st : stages) {
    const std::string symbol = spec.entry_symbol + "_" + st.name;
    spec.launchers.push_back(symbol);
    const std::string name = stage_template(p, st);
    body += render(name, load_template(name, opts), stage_values(p, st, ns, symbol));
  }

  Values h;
  h["TITLE"] = p.descriptor.name.empty() ? std::string(to_string(p.rule)) : p.descriptor.name;
  h["PATTERN_ID"] = p.pattern_id;
  h["RULE"] = std::string(to_string(p.rule));
  h["ARCH_FAMILY"] = std::string(arch_family(p.arch));
  h["ARCH"] = std::string(to_string(p.arch));
  h["SLUG"] = config.slug();
  h["EXAMPLE"] = example_for(p, opts.example_rank);
  h["DTYPE"] = std::string(to_string(p.dtype));
  h["INCLUDES"] = include_block(p, stages);
  h["NAMESPACE"] = ns;
  h["ARCH_TAG"] = arch_tag(p.arch);
  h["ELEMENT"] = element_token(p.dtype);
  h["CONFIG"] = cfg_text;
  h["STAGES"] = body;
  spec.source_text = render("kernel_header.cu.in", load_template("kernel_header.cu.in", opts), h);
  spec.content_hash = sha256_hex(spec.source_text);
  spec.wrapper_text = emit_wrapper(spec, p, opts);
  return spec;
}

bool StructuralReport::has(std::string_view category) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const std::string& v) { return v.rfind(category, 0) == 0; });
}

StructuralReport structural_check(const KernelSpec& spec, const ProposedPattern& p, const TuneConfig& config) {
  StructuralReport r;
  auto add = [&](const std::string& v) { r.violations.push_back(v); };
  const std::string& src = spec.source_text;
  const bool sm80 = config.arch == Arch::SM80;

  // Arch: exactly one tag, matching the config, the spec and the pattern.
  const std::size_t n80 = count_of(src, "cutlass::arch::Sm80");
  const std::size_t n90 = count_of(src, "cutlass::arch::Sm90");
  const std::size_t want = sm80 ? n80 : n90, other = sm80 ? n90 : n80;
  if (want != 1 || other != 0) {
    add(fmt::format("arch mismatch: config targets {} but source has {} Sm80 and {} Sm90 tags",
                    to_string(config.arch), n80, n90));
  } else if (spec.arch != config.arch || p.arch != config.arch) {
    add(fmt::format("arch mismatch: spec {} / pattern {} / config {}", to_string(spec.arch), to_string(p.arch),
                    to_string(config.arch)));
  }

  // Schedule tokens exist iff SM90, and only the configured one.
  const std::size_t coop = count_of(src, "Cooperative"), pp = count_of(src, "Pingpong");
  if (sm80) {
    if (coop + pp > 0) add("schedule mismatch: SM80 source carries a warp-specialized schedule token");
  } else {
    static const std::regex kSched(R"(using KernelSchedule = ([^;]+);)");
    const auto m = all_matches(src, kSched);
    const bool want_coop = config.schedule == Schedule::cooperative;
    const std::string word = want_coop ? "Cooperative" : "Pingpong";
    if (m.size() != 1 || m[0][1].str().find(word) == std::string::npos || (want_coop ? pp : coop) != 0) {
      add("schedule mismatch: expected " + std::string(to_string(config.schedule)) + " kernel schedule");
    }
  }

  // Grid schedule.
  const bool streamk = count_of(src, "StreamK") > 0;
  if (streamk != (p.rule == RuleTag::GEMM_StreamK)) {
    add(streamk ? "grid schedule mismatch: stream-K scheduler in a non-stream-K pattern"
                : "grid schedule mismatch: stream-K pattern without a stream-K scheduler");
  }

  // Tiles.
  const Tile& t = config.tb_tile;
  if (is_attention_rule(p.rule)) {
    static const std::regex kQ(R"(constexpr int kQueriesPerBlock = (\d+);)");
    static const std::regex kK(R"(constexpr int kKeysPerBlock = (\d+);)");
    static const std::regex kD(R"(constexpr int kHeadDim = (\d+);)");
    const auto q = all_matches(src, kQ), k = all_matches(src, kK), d = all_matches(src, kD);
    const auto [eq, ek] = fmha_tile(p.params.head_dim);
    if (q.size() != 1 || k.size() != 1 || d.size() != 1 || std::stoi(q[0][1]) != t[0] ||
        std::stoi(k[0][1]) != t[1] || std::stoi(d[0][1]) != t[2]) {
      add("fmha tile mismatch: source tile does not equal config " + triple(t[0], t[1], t[2]));
    } else if (t[0] != eq || t[1] != ek || t[2] != p.params.head_dim) {
      add(fmt::format("fmha tile mismatch: head_dim {} expects kQueriesPerBlock={}, kKeysPerBlock={}",
                      p.params.head_dim, eq, ek));
    }
  } else {
    static const std::regex kTb80(R"(using ThreadblockShape = cutlass::gemm::GemmShape<(\d+), (\d+), (\d+)>;)");
    static const std::regex kTb90(R"(using TileShape = cute::Shape<cute::_(\d+), cute::_(\d+), cute::_(\d+)>;)");
    const auto m = all_matches(src, sm80 ? kTb80 : kTb90);
    if (m.size() != 1 || std::stoi(m[0][1]) != t[0] || std::stoi(m[0][2]) != t[1] || std::stoi(m[0][3]) != t[2]) {
      add("tile mismatch: source tile does not equal config " + triple(t[0], t[1], t[2]));
    }
  }

  // Stages.
  static const std::regex kStages(R"(constexpr int kStages = (\d+);)");
  const auto st = all_matches(src, kStages);
  if (sm80) {
    if (st.size() != 1 || std::stoi(st[0][1]) != config.stages) {
      add(fmt::format("stage mismatch: expected kStages = {}", config.stages));
    }
  } else if (!st.empty()) {
    add("stage mismatch: SM90 source pins a stage count");
  }

  // Cluster.
  static const std::regex kCluster(R"(using ClusterShape = cute::Shape<cute::_(\d+), cute::_(\d+), cute::_(\d+)>;)");
  const auto cl = all_matches(src, kCluster);
  if (sm80) {
    if (count_of(src, "ClusterShape") > 0) add("cluster mismatch: SM80 source declares a cluster shape");
  } else {
    const Cluster& c = config.cluster;
    if (cl.size() != 1 || std::stoi(cl[0][1]) != c[0] || std::stoi(cl[0][2]) != c[1] ||
        std::stoi(cl[0][3]) != c[2]) {
      add("cluster mismatch: source cluster does not equal config " + triple(c[0], c[1], c[2]));
    }
  }

  // Epilogue agrees with the rule.
  const bool gelu = count_of(src, "LinearCombinationGELU") + count_of(src, "GELU_taylor") > 0;
  const bool silu = count_of(src, "LeftSiLUAndMul") + count_of(src, "SiLu") > 0;
  switch (p.rule) {
    case RuleTag::MLP_GELU: {
      const std::string token =
          sm80 ? "cutlass::epilogue::thread::LinearCombinationGELU" : "cutlass::epilogue::thread::GELU_taylor";
      if (count_of(src, token) == 0 || silu) add("epilogue mismatch: MLP_GELU needs " + token);
      break;
    }
    case RuleTag::MLP_SwiGLU: {
      const bool ok = sm80 ? count_of(src, "cutlass::epilogue::thread::LeftSiLUAndMul") > 0
                           : count_of(src, "cutlass::epilogue::thread::SiLu") > 0 &&
                                 count_of(src, "cutlass::multiplies") > 0;
      if (!ok || gelu) add("epilogue mismatch: MLP_SwiGLU needs a SiLU gate multiplied into the up projection");
      break;
    }
    default:
      if (gelu || silu) add("epilogue mismatch: activation epilogue in a " + std::string(to_string(p.rule)) + " kernel");
  }

  // Dtype tokens.
  static const std::regex kOperand(R"(using ElementOperand = ([^;]+);)");
  static const std::regex kAcc(R"(using ElementAccumulator = ([^;]+);)");
  const auto op = all_matches(src, kOperand);
  const auto acc = all_matches(src, kAcc);
  if (op.size() != 1 || op[0][1].str() != element_token(p.dtype)) {
    add("dtype mismatch: expected ElementOperand " + element_token(p.dtype));
  }
  if (acc.size() != 1 || acc[0][1].str() != "float") add("dtype mismatch: accumulator must be float");

  if (spec.content_hash != sha256_hex(src)) add("hash mismatch: content_hash does not match source_text");
  return r;
}

std::filesystem::path write_spec(const KernelSpec& spec, const std::filesystem::path& root) {
  const auto dir = root / spec.pattern_id / spec.config.slug();
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : {std::pair{"kernel.cu", &spec.source_text}, std::pair{"wrapper.cpp", &spec.wrapper_text}}) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << *text;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  }
  return dir;
}

}  // namespace ksynth
