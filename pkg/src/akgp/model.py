"""The named parameter groups of the full pipeline and their initialization.

Groups: visual encoder, text encoder, fusion, knowledge path (GNN weights
plus the graph's node features), gate, and task adaptor. Weight matrices
are xavier-initialized from seeds derived deterministically from the master
seed; biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import TrainConfig
from .encoders import EncoderParams
from .fusion import PARAM_GROUPS, AdaptorParams, GateParams
from .gnn import GnnParams
from .kg import KnowledgeGraph
from .rng import derive_seed
from .tensor import Tensor, xavier, zeros


@dataclass
class ModelParams:
    """All trainable state, addressable by group and by qualified name."""

    theta_v: dict[str, Tensor]
    theta_t: dict[str, Tensor]
    theta_m: dict[str, Tensor]
    theta_k: dict[str, Tensor]
    w_g: dict[str, Tensor]
    theta_a: dict[str, Tensor]
    gate_mode: str = "literal"

    def groups(self) -> dict[str, dict[str, Tensor]]:
        return {name: getattr(self, name) for name in PARAM_GROUPS}

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """(qualified name, tensor) pairs in a fixed deterministic order."""
        out = []
        for group_name, tensors in self.groups().items():
            for name, t in tensors.items():
                out.append((f"{group_name}.{name}", t))
        return out

    def encoder_params(self) -> EncoderParams:
        return EncoderParams(
            w_visual=self.theta_v["weight"], b_visual=self.theta_v["bias"],
            token_table=self.theta_t["table"],
            w_text=self.theta_t["weight"], b_text=self.theta_t["bias"],
            w_fusion=self.theta_m["weight"], b_fusion=self.theta_m["bias"],
        )

    def gnn_params(self) -> GnnParams:
        return GnnParams(w1=self.theta_k["w1"], b1=self.theta_k["b1"],
                         w2=self.theta_k["w2"], b2=self.theta_k["b2"])

    def gate_params(self) -> GateParams:
        return GateParams(weight=self.w_g["weight"], bias=self.w_g["bias"],
                          mode=self.gate_mode)

    def adaptor_params(self) -> AdaptorParams:
        return AdaptorParams(
            w_hidden=self.theta_a["w_hidden"], b_hidden=self.theta_a["b_hidden"],
            w_out=self.theta_a["w_out"], b_out=self.theta_a["b_out"],
        )

    def parameter_counts(self) -> dict[str, int]:
        return {g: sum(t.size for t in tensors.values())
                for g, tensors in self.groups().items()}


def init_model(cfg: TrainConfig, graph: KnowledgeGraph) -> ModelParams:
    """Create all parameter groups; adopts the graph's feature matrix into
    the knowledge group so one freeze flag governs the whole knowledge path."""

    def mat(shape, tag):
        return xavier(shape, derive_seed(cfg.seed, tag)).requires_grad_(True)

    def vec(shape):
        return zeros(shape).requires_grad_(True)

    model = ModelParams(
        theta_v={"weight": mat([cfg.d_i, cfg.d_m], "visual.weight"),
                 "bias": vec([cfg.d_m])},
        theta_t={"table": mat([cfg.vocab_size, cfg.d_t], "text.table"),
                 "weight": mat([cfg.d_t, cfg.d_m], "text.weight"),
                 "bias": vec([cfg.d_m])},
        theta_m={"weight": mat([2 * cfg.d_m, cfg.d_m], "fusion.weight"),
                 "bias": vec([cfg.d_m])},
        theta_k={"node_features": graph.features.requires_grad_(True),
                 "w1": mat([cfg.d_k, cfg.d_h], "gnn.w1"),
                 "b1": vec([cfg.d_h]),
                 "w2": mat([cfg.d_h, cfg.d_m], "gnn.w2"),
                 "b2": vec([cfg.d_m])},
        w_g={"weight": mat([2 * cfg.d_m, cfg.d_m], "gate.weight"),
             "bias": vec([cfg.d_m])},
        theta_a={"w_hidden": mat([2 * cfg.d_m, cfg.d_a], "adaptor.w_hidden"),
                 "b_hidden": vec([cfg.d_a]),
                 "w_out": mat([cfg.d_a, cfg.n_classes], "adaptor.w_out"),
                 "b_out": vec([cfg.n_classes])},
        gate_mode=cfg.gate,
    )
    if graph.features.shape != (graph.n_nodes, cfg.d_k):
        raise ValueError(
            f"graph features {graph.features.shape} do not match configured d_k={cfg.d_k}")
    return model
