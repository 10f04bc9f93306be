#!/usr/bin/env python3
"""Regenerates the trace fixtures under data/traces/.

Shapes are written symbolically against each trace's `dims` so the same
document can be re-ingested at desk scale.
"""
import json
import os
import sys


class Trace:
    def __init__(self, name, dims, desk_dims=None):
        self.doc = {"name": name, "dims": dims, "nodes": [], "graph_inputs": [], "graph_outputs": []}
        if desk_dims:
            self.doc["desk_dims"] = desk_dims

    def node(self, id, kind, inputs=(), shape=None, attrs=None, dtype="fp32"):
        n = {"id": id, "kind": kind, "inputs": list(inputs), "attrs": attrs or {}}
        if shape is not None:
            n["shape"] = shape
        n["dtype"] = dtype
        self.doc["nodes"].append(n)
        if kind == "input":
            self.doc["graph_inputs"].append(id)
        if kind == "output":
            self.doc["graph_outputs"].append(id)
        return id

    def write(self, path):
        with open(path, "w") as f:
            json.dump(self.doc, f, indent=2)
            f.write("\n")


def gemm(name, m, k, n, desk_dims=None):
    t = Trace(name, {"M": m, "K": k, "N": n}, desk_dims)
    t.node("A", "input", shape=["M", "K"])
    t.node("B", "input", shape=["K", "N"])
    t.node("C", "matmul", ["A", "B"], shape=["M", "N"])
    t.node("out", "output", ["C"])
    return t


def batched_gemm(name, b, m, k, n, desk_dims=None):
    t = Trace(name, {"BATCH": b, "M": m, "K": k, "N": n}, desk_dims)
    t.node("A", "input", shape=["BATCH", "M", "K"])
    t.node("B", "input", shape=["BATCH", "K", "N"])
    t.node("C", "batched_matmul", ["A", "B"], shape=["BATCH", "M", "N"])
    t.node("out", "output", ["C"])
    return t


def heads(t, src, prefix, heads_dim):
    t.node(prefix + "_h", "reshape", [src], attrs={"shape": ["B", "T", heads_dim, "C/H"]})
    return t.node(prefix + "_t", "transpose", [prefix + "_h"], attrs={"perm": [0, 2, 1, 3]})


def minigpt():
    t = Trace("minigpt_block", {"B": 128, "T": 512, "C": 768, "H": 12},
              desk_dims=[{"B": 2, "T": 8, "C": 32, "H": 2}, {"B": 4, "T": 16, "C": 64, "H": 2}])
    t.node("x", "input", shape=["B", "T", "C"])
    t.node("ln1_g", "parameter", shape=["C"])
    t.node("ln1_b", "parameter", shape=["C"])
    t.node("ln1", "layernorm", ["x", "ln1_g", "ln1_b"], attrs={"eps": 1e-5})
    t.node("attn_w", "parameter", shape=["C", "3*C"])
    t.node("attn_b", "parameter", shape=["3*C"])
    t.node("qkv", "linear", ["ln1", "attn_w", "attn_b"], shape=["B", "T", "3*C"])
    for i, name in enumerate("qkv"):
        t.node(name, "split", ["qkv"], attrs={"axis": -1, "parts": 3, "index": i})
    heads(t, "q", "q", "H")
    heads(t, "k", "k", "H")
    heads(t, "v", "v", "H")
    t.node("k_tt", "transpose", ["k_t"], attrs={"perm": [0, 1, 3, 2]})
    t.node("scores", "batched_matmul", ["q_t", "k_tt"], shape=["B", "H", "T", "T"])
    t.node("scaled", "scale", ["scores"], attrs={"rsqrt_of": "C/H"})
    t.node("masked", "causal_mask", ["scaled"])
    t.node("probs", "softmax", ["masked"], attrs={"axis": -1})
    t.node("attn_drop", "dropout_eval", ["probs"])
    t.node("ctx", "batched_matmul", ["attn_drop", "v_t"], shape=["B", "H", "T", "C/H"])
    t.node("ctx_t", "transpose", ["ctx"], attrs={"perm": [0, 2, 1, 3]})
    t.node("ctx_r", "reshape", ["ctx_t"], attrs={"shape": ["B", "T", "C"]})
    t.node("proj_w", "parameter", shape=["C", "C"])
    t.node("proj_b", "parameter", shape=["C"])
    t.node("attn_out", "linear", ["ctx_r", "proj_w", "proj_b"], shape=["B", "T", "C"])
    t.node("resid_drop", "dropout_eval", ["attn_out"])
    t.node("res1", "add", ["x", "resid_drop"])
    t.node("ln2_g", "parameter", shape=["C"])
    t.node("ln2_b", "parameter", shape=["C"])
    t.node("ln2", "layernorm", ["res1", "ln2_g", "ln2_b"], attrs={"eps": 1e-5})
    t.node("fc_w", "parameter", shape=["C", "4*C"])
    t.node("fc_b", "parameter", shape=["4*C"])
    t.node("fc", "linear", ["ln2", "fc_w", "fc_b"], shape=["B", "T", "4*C"])
    t.node("act", "gelu", ["fc"])
    t.node("mproj_w", "parameter", shape=["4*C", "C"])
    t.node("mproj_b", "parameter", shape=["C"])
    t.node("mlp_out", "linear", ["act", "mproj_w", "mproj_b"], shape=["B", "T", "C"])
    t.node("mlp_drop", "dropout_eval", ["mlp_out"])
    t.node("res2", "add", ["res1", "mlp_drop"])
    t.node("out", "output", ["res2"])
    return t


def llama():
    t = Trace("llama3_8b_block", {"B": 16, "T": 2048, "C": 4096, "H": 32, "KV": 8, "I": 14336},
              desk_dims=[{"B": 2, "T": 8, "C": 32, "H": 4, "KV": 2, "I": 64},
                         {"B": 4, "T": 16, "C": 64, "H": 4, "KV": 2, "I": 128}])
    t.node("x", "input", shape=["B", "T", "C"])
    t.node("norm1_g", "parameter", shape=["C"])
    t.node("norm1", "rmsnorm", ["x", "norm1_g"], attrs={"eps": 1e-5})
    t.node("wq", "parameter", shape=["C", "C"])
    t.node("wk", "parameter", shape=["C", "KV*C/H"])
    t.node("wv", "parameter", shape=["C", "KV*C/H"])
    t.node("q", "linear", ["norm1", "wq"], shape=["B", "T", "C"])
    t.node("k", "linear", ["norm1", "wk"], shape=["B", "T", "KV*C/H"])
    t.node("v", "linear", ["norm1", "wv"], shape=["B", "T", "KV*C/H"])
    heads(t, "q", "q", "H")
    heads(t, "k", "k", "KV")
    heads(t, "v", "v", "KV")
    t.node("k_rep", "repeat_interleave", ["k_t"], attrs={"repeats": "H/KV", "axis": 1})
    t.node("v_rep", "repeat_interleave", ["v_t"], attrs={"repeats": "H/KV", "axis": 1})
    t.node("k_tt", "transpose", ["k_rep"], attrs={"perm": [0, 1, 3, 2]})
    t.node("scores", "batched_matmul", ["q_t", "k_tt"], shape=["B", "H", "T", "T"])
    t.node("scaled", "scale", ["scores"], attrs={"rsqrt_of": "C/H"})
    t.node("masked", "causal_mask", ["scaled"])
    t.node("probs", "softmax", ["masked"], attrs={"axis": -1})
    t.node("ctx", "batched_matmul", ["probs", "v_rep"], shape=["B", "H", "T", "C/H"])
    t.node("ctx_t", "transpose", ["ctx"], attrs={"perm": [0, 2, 1, 3]})
    t.node("ctx_r", "reshape", ["ctx_t"], attrs={"shape": ["B", "T", "C"]})
    t.node("wo", "parameter", shape=["C", "C"])
    t.node("attn_out", "linear", ["ctx_r", "wo"], shape=["B", "T", "C"])
    t.node("res1", "add", ["x", "attn_out"])
    t.node("norm2_g", "parameter", shape=["C"])
    t.node("norm2", "rmsnorm", ["res1", "norm2_g"], attrs={"eps": 1e-5})
    t.node("w_gate", "parameter", shape=["C", "I"])
    t.node("w_up", "parameter", shape=["C", "I"])
    t.node("w_down", "parameter", shape=["I", "C"])
    t.node("gate", "linear", ["norm2", "w_gate"], shape=["B", "T", "I"])
    t.node("gate_act", "silu", ["gate"])
    t.node("up", "linear", ["norm2", "w_up"], shape=["B", "T", "I"])
    t.node("gated", "mul", ["gate_act", "up"])
    t.node("down", "linear", ["gated", "w_down"], shape=["B", "T", "C"])
    t.node("res2", "add", ["res1", "down"])
    t.node("out", "output", ["res2"])
    return t


def main():
    root = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "traces")
    os.makedirs(root, exist_ok=True)
    gemm("p1_square_gemm", 4096, 4096, 4096,
         [{"M": 16, "K": 16, "N": 16}, {"M": 32, "K": 32, "N": 32}]).write(os.path.join(root, "p1_square_gemm.json"))
    batched_gemm("p3_batched_gemm", 128, 512, 1024, 2048,
                 [{"BATCH": 2, "M": 8, "K": 16, "N": 32}, {"BATCH": 3, "M": 16, "K": 32, "N": 64}]).write(os.path.join(root, "p3_batched_gemm.json"))
    gemm("p6_large_k_gemm", 256, 524288, 256,
         [{"M": 4, "K": 512, "N": 4}, {"M": 8, "K": 1024, "N": 8}]).write(os.path.join(root, "p6_large_k_gemm.json"))
    minigpt().write(os.path.join(root, "minigpt_block.json"))
    llama().write(os.path.join(root, "llama3_block.json"))

    single = Trace("single_input", {})
    single.node("A", "input", shape=[4, 4])
    single.doc["graph_outputs"] = ["A"]
    single.write(os.path.join(root, "single_input.json"))

    add = Trace("single_add", {})
    add.node("A", "input", shape=[8, 8])
    add.node("B", "input", shape=[8, 8])
    add.node("S", "add", ["A", "B"])
    add.node("out", "output", ["S"])
    add.write(os.path.join(root, "single_add.json"))


if __name__ == "__main__":
    main()
