"""Dense transformer workloads as per-layer operator graphs.

Byte accounting uses mixed precision: FP16 weights, FP16 gradients and FP32
Adam state (master copy + two moments) give 16 bytes per parameter. Activations
are FP16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

BYTES_PER_PARAM = 16
ACT_BYTES = 2
STAT_BYTES = 4  # FP32 softmax log-sum-exp per row
ALIGN = 256

LAYERNORM_FLOPS_PER_ELEM = 5
ACTIVATION_FLOPS_PER_ELEM = 8
FLASH_BWD_RATIO = 2.5  # backward recomputes the score tiles

LAYERNORM = "LayerNorm"
QKV = "QKV-GEMM"
FLASH = "FlashAttention"
PROJ = "Proj-GEMM"
MLP_UP = "MLP-Up-GEMM"
MLP_DOWN = "MLP-Down-GEMM"
ACT_FN = "Activation-Fn"

GEMM_KINDS = frozenset({QKV, PROJ, MLP_UP, MLP_DOWN})
ELEMENTWISE_KINDS = frozenset({LAYERNORM, ACT_FN})
OPERATOR_KINDS = (LAYERNORM, QKV, FLASH, PROJ, MLP_UP, MLP_DOWN, ACT_FN)


class UnsupportedModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    name: str
    num_layers: int
    hidden_size: int
    num_heads: int
    seq_len: int
    vocab_size: int
    param_count: int | None = None
    ffn_hidden: int | None = None
    moe_experts: int = 0

    def __post_init__(self):
        for attr in ("num_layers", "hidden_size", "num_heads", "seq_len", "vocab_size"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{attr} must be positive")
        if self.hidden_size % self.num_heads:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")

    @property
    def ffn(self) -> int:
        return self.ffn_hidden or 4 * self.hidden_size

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    @property
    def params(self) -> int:
        if self.param_count is not None:
            return self.param_count
        h = self.hidden_size
        per_layer = 4 * h * h + 2 * h * self.ffn + 4 * h
        return self.num_layers * per_layer + self.vocab_size * h


@dataclass(frozen=True)
class OperatorNode:
    """One operator of a transformer layer for a single microbatch.

    ``shape`` is ``(M, K, N)`` for GEMMs, ``(B, heads, S, head_dim)`` for
    FlashAttention and ``(elements,)`` for elementwise kinds.
    """

    name: str
    kind: str
    shape: tuple[int, ...]
    fwd_flops: float
    bwd_flops: float
    checkpoint_bytes: int
    tp_comm_after: bool = False

    @property
    def is_gemm(self) -> bool:
        return self.kind in GEMM_KINDS


def _gemm(name, kind, m, k, n, ckpt, comm=False):
    flops = 2.0 * m * k * n
    return OperatorNode(name, kind, (m, k, n), flops, 2.0 * flops, ckpt, comm)


def _eltwise(name, kind, elems, per_elem, ckpt):
    flops = float(per_elem * elems)
    return OperatorNode(name, kind, (elems,), flops, 2.0 * flops, ckpt)


def build_operator_graph(model: ModelConfig, microbatch: int) -> list[OperatorNode]:
    """Operators of one transformer layer in forward order.

    Each node's checkpoint is the input activation it keeps for backward.
    FlashAttention is a fused node retaining Q, K, V and the softmax
    statistics only (no S x S score matrix).
    """
    if model.moe_experts:
        raise UnsupportedModelError(f"{model.name}: mixture-of-experts graphs are not supported")
    if microbatch < 0:
        raise ValueError("microbatch must be non-negative")
    b, s, h, f = microbatch, model.seq_len, model.hidden_size, model.ffn
    tokens = b * s
    act = tokens * h * ACT_BYTES
    flash_fwd = 4.0 * b * s * s * h
    stats = b * model.num_heads * s * STAT_BYTES
    return [
        _eltwise("ln_attn", LAYERNORM, tokens * h, LAYERNORM_FLOPS_PER_ELEM, act),
        _gemm("qkv", QKV, tokens, h, 3 * h, act),
        OperatorNode("attn", FLASH, (b, model.num_heads, s, model.head_dim),
                     flash_fwd, FLASH_BWD_RATIO * flash_fwd, 3 * act + stats),
        _gemm("proj", PROJ, tokens, h, h, act, comm=True),
        _eltwise("ln_mlp", LAYERNORM, tokens * h, LAYERNORM_FLOPS_PER_ELEM, act),
        _gemm("mlp_up", MLP_UP, tokens, h, f, act),
        _eltwise("act_fn", ACT_FN, tokens * f, ACTIVATION_FLOPS_PER_ELEM, tokens * f * ACT_BYTES),
        _gemm("mlp_down", MLP_DOWN, tokens, f, h, tokens * f * ACT_BYTES, comm=True),
    ]


def unfused_attention_checkpoint_bytes(model: ModelConfig, microbatch: int) -> int:
    """Bytes a naive attention keeps: Q, K, V, scores and softmax probabilities."""
    b, s, h = microbatch, model.seq_len, model.hidden_size
    qkv = 3 * b * s * h * ACT_BYTES
    scores = b * model.num_heads * s * s * ACT_BYTES
    return qkv + 2 * scores


def layer_flops(graph: Sequence[OperatorNode]) -> tuple[float, float]:
    return sum(op.fwd_flops for op in graph), sum(op.bwd_flops for op in graph)


def align_up(nbytes: float, quantum: int = ALIGN) -> int:
    return int(math.ceil(nbytes / quantum)) * quantum


def model_state_bytes(model: ModelConfig, tp: int, pp: int) -> int:
    """Weights + grads + optimizer state held by one die, 256-byte aligned."""
    if tp < 1 or pp < 1:
        raise ValueError("tp and pp must be >= 1")
    total = BYTES_PER_PARAM * model.params
    return align_up(math.ceil(total / (tp * pp)))


def shard_bytes(nbytes: int, tp: int) -> int:
    return -(-nbytes // tp)


def checkpoint_bytes_per_stage(graph: Sequence[OperatorNode], layers_in_stage: int, tp: int,
                               live_microbatches: int, stored: set[str] | None = None) -> int:
    """Checkpoint bytes one die of a stage retains at its 1F1B peak.

    ``stored`` restricts the sum to operator names kept in memory; ``None``
    means every operator stores its checkpoint.
    """
    if live_microbatches < 0:
        raise ValueError("live_microbatches must be >= 0")
    per_layer = sum(shard_bytes(op.checkpoint_bytes, tp) for op in graph
                    if stored is None or op.name in stored)
    return per_layer * layers_in_stage * live_microbatches


def boundary_bytes(model: ModelConfig, microbatch: int, tp: int) -> int:
    """Stage-input activation one die keeps per live microbatch."""
    return shard_bytes(microbatch * model.seq_len * model.hidden_size * ACT_BYTES, tp)


def layers_per_stage(num_layers: int, pp: int) -> list[int]:
    """Contiguous layer split; earlier stages take the remainder."""
    if pp > num_layers:
        raise ValueError(f"pp={pp} exceeds num_layers={num_layers}")
    base, extra = divmod(num_layers, pp)
    return [base + (1 if s < extra else 0) for s in range(pp)]


@dataclass(frozen=True)
class TrainingWorkload:
    model: ModelConfig
    microbatch_size: int
    num_microbatches: int
    graph: tuple[OperatorNode, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.num_microbatches < 1:
            raise ValueError("num_microbatches must be >= 1")
        if self.microbatch_size < 0:
            raise ValueError("microbatch_size must be >= 0")
        if not self.graph:
            object.__setattr__(self, "graph",
                               tuple(build_operator_graph(self.model, self.microbatch_size)))

    @property
    def modelP_bytes(self) -> int:
        return BYTES_PER_PARAM * self.model.params

    def checkpoint_bytes_total(self, pp: int = 1) -> int:
        """Peak checkpoint bytes over all stages for a 1F1B pipeline of ``pp`` stages."""
        per_layer = sum(op.checkpoint_bytes for op in self.graph)
        layers = layers_per_stage(self.model.num_layers, pp)
        return sum(per_layer * n * (pp - s) for s, n in enumerate(layers))

    def useful_flops(self) -> float:
        """Forward + backward FLOPs of one iteration, recomputation excluded."""
        fwd, bwd = layer_flops(self.graph)
        return (fwd + bwd) * self.model.num_layers * self.num_microbatches

    def with_microbatch(self, b: int) -> "TrainingWorkload":
        return replace(self, microbatch_size=b, graph=())
