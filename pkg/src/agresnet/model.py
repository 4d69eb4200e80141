"""Model configuration, parameter registry, and the assembled network.

The network stacks residual blocks of conv units (conv -> batch norm ->
leaky ReLU -> attention) over the coarsening hierarchy. Pooling halves
the node count after every ``pool_after_every`` convolutions and is
applied at block boundaries, so shortcuts never span a pooling stage;
with 3-conv blocks the owed poolings accrue and are applied together.
The final node x feature map is flattened, attention-weighted over the
feature axis, and mapped to class logits by one fully connected layer.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .coarsening import CoarseningHierarchy
from .graph import ScaledLaplacian, max_eigenvalue, scale_laplacian
from .layers import (
    AttentionParams,
    ResidualBlockParams,
    attention_forward,
    glorot_uniform,
    residual_block_forward,
)


def default_feature_widths(n_blocks: int) -> list:
    # 16 doubling every two blocks, capped at 64
    return [min(16 * 2 ** (i // 2), 64) for i in range(n_blocks)]


@dataclass
class ModelConfig:
    """Layer-stack description; every field is overridable from a config file."""

    n_conv_layers: int = 12
    convs_per_block: int = 2
    cheb_order: int = 3
    feature_widths: list = field(default_factory=list)
    pool_after_every: int = 2  # in convolutions; 0 disables pooling
    n_classes: int = 4
    in_features: int = 1
    leaky_slope: float = 0.01
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    lambda_max_tol: float = 1e-4

    def __post_init__(self):
        if self.n_conv_layers % self.convs_per_block:
            raise ValueError(
                f"n_conv_layers ({self.n_conv_layers}) must be divisible by "
                f"convs_per_block ({self.convs_per_block})"
            )
        if not self.feature_widths:
            self.feature_widths = default_feature_widths(self.n_blocks)
        if len(self.feature_widths) != self.n_blocks:
            raise ValueError(
                f"feature_widths has {len(self.feature_widths)} entries for "
                f"{self.n_blocks} blocks"
            )

    @property
    def n_blocks(self) -> int:
        return self.n_conv_layers // self.convs_per_block

    @property
    def n_pool_stages(self) -> int:
        if self.pool_after_every <= 0:
            return 0
        return self.n_conv_layers // self.pool_after_every

    def pooling_schedule(self) -> list:
        """Pool applications after each block: owed pools accrue with the
        convolution count and are settled at block boundaries."""
        if self.pool_after_every <= 0:
            return [0] * self.n_blocks
        schedule = []
        convs = done = 0
        for _ in range(self.n_blocks):
            convs += self.convs_per_block
            owed = convs // self.pool_after_every
            schedule.append(owed - done)
            done = owed
        return schedule

    CONFIG_KEYS = (
        "n_conv_layers", "convs_per_block", "cheb_order", "feature_widths",
        "pool_after_every", "n_classes", "in_features", "leaky_slope",
        "bn_momentum", "bn_eps", "lambda_max_tol",
    )

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ModelConfig":
        kwargs = {k: mapping[k] for k in cls.CONFIG_KEYS if k in mapping}
        if "feature_widths" in kwargs and isinstance(kwargs["feature_widths"], int):
            kwargs["feature_widths"] = [kwargs["feature_widths"]]
        return cls(**kwargs)


def model1_config(**overrides) -> ModelConfig:
    """Two convolutions per residual block."""
    base = dict(n_conv_layers=12, convs_per_block=2,
                feature_widths=[16, 16, 32, 32, 64, 64])
    base.update(overrides)
    return ModelConfig(**base)


def model2_config(**overrides) -> ModelConfig:
    """Three convolutions per residual block."""
    base = dict(n_conv_layers=12, convs_per_block=3,
                feature_widths=[16, 32, 64, 64])
    base.update(overrides)
    return ModelConfig(**base)


class ModelParams:
    """Every trainable tensor registered exactly once, plus batch-norm state."""

    def __init__(self):
        self._params = {}  # name -> (Tensor, kind)
        self._bn_states = {}  # name -> BatchNormState

    def register(self, name: str, tensor: Tensor, kind: str):
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice")
        self._params[name] = (tensor, kind)

    def register_bn(self, name: str, state: BatchNormState):
        self.register(f"{name}.gamma", state.gamma, "bn_scale")
        self.register(f"{name}.beta", state.beta, "bn_shift")
        self._bn_states[name] = state

    def trainable(self):
        """(name, tensor) pairs the optimizer updates."""
        return [(name, t) for name, (t, _) in self._params.items()]

    def weights(self):
        """Weight tensors subject to L2 (biases and BN scale/shift excluded)."""
        return [t for t, kind in self._params.values() if kind == "weight"]

    def named_arrays(self) -> dict:
        """Checkpoint view: parameters plus running BN statistics."""
        out = {name: t.data for name, (t, _) in self._params.items()}
        for name, state in self._bn_states.items():
            out[f"{name}.running_mean"] = state.running_mean
            out[f"{name}.running_var"] = state.running_var
        return out

    def load_arrays(self, named: dict):
        expected = set(self.named_arrays())
        got = set(named)
        if expected != got:
            missing, extra = expected - got, got - expected
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for name, (tensor, _) in self._params.items():
            arr = named[name]
            if arr.shape != tensor.data.shape:
                raise ValueError(f"checkpoint tensor {name!r} has shape {arr.shape}, "
                                 f"expected {tensor.data.shape}")
            tensor.data = arr.astype(tensor.data.dtype)
        for name, state in self._bn_states.items():
            state.running_mean = named[f"{name}.running_mean"].astype(state.running_mean.dtype)
            state.running_var = named[f"{name}.running_var"].astype(state.running_var.dtype)

    def snapshot(self) -> dict:
        return {name: arr.copy() for name, arr in self.named_arrays().items()}


class AttentionGraphResNet:
    """The assembled network over a fixed coarsening hierarchy."""

    def __init__(self, config: ModelConfig, hierarchy: CoarseningHierarchy, seed: int = 0):
        needed = sum(config.pooling_schedule())
        if needed > hierarchy.n_levels:
            raise ValueError(
                f"model needs {needed} pooling stages but hierarchy has "
                f"{hierarchy.n_levels} levels"
            )
        self.config = config
        self.hierarchy = hierarchy
        self.params = ModelParams()
        rng = np.random.default_rng(seed)

        self.laplacians = [
            scale_laplacian(g.laplacian,
                            max_eigenvalue(g.laplacian, tol=config.lambda_max_tol))
            for g in hierarchy.levels[: needed + 1]
        ]

        self.blocks = []
        self._block_levels = []
        schedule = config.pooling_schedule()
        width = config.in_features
        level = 0
        for b, out_width in enumerate(config.feature_widths):
            block = ResidualBlockParams.create(
                rng, config.convs_per_block, config.cheb_order, width, out_width,
                config.bn_momentum, config.bn_eps,
            )
            self.blocks.append(block)
            self._block_levels.append(level)
            self._register_block(b, block)
            width = out_width
            level += schedule[b]

        self.final_nodes = hierarchy.levels[needed].n_nodes
        flat_dim = self.final_nodes * width
        self.head_att = AttentionParams.create(rng, 1)
        self.head_w = Tensor(glorot_uniform(rng, (flat_dim, config.n_classes),
                                            flat_dim, config.n_classes),
                             requires_grad=True)
        self.head_b = Tensor(np.zeros(config.n_classes), requires_grad=True)
        self.params.register("head.att.w", self.head_att.w, "weight")
        self.params.register("head.att.b", self.head_att.b, "bias")
        self.params.register("head.att.u_w", self.head_att.u_w, "weight")
        self.params.register("head.fc.w", self.head_w, "weight")
        self.params.register("head.fc.b", self.head_b, "bias")

    def _register_block(self, b: int, block: ResidualBlockParams):
        for u, unit in enumerate(block.units):
            base = f"block{b}.unit{u}"
            self.params.register(f"{base}.conv.theta", unit.conv.theta, "weight")
            self.params.register(f"{base}.conv.bias", unit.conv.bias, "bias")
            self.params.register_bn(f"{base}.bn", unit.bn)
            self.params.register(f"{base}.att.w", unit.att.w, "weight")
            self.params.register(f"{base}.att.b", unit.att.b, "bias")
            self.params.register(f"{base}.att.u_w", unit.att.u_w, "weight")
        if block.projection is not None:
            self.params.register(f"block{b}.proj", block.projection, "weight")

    def _as_node_tensor(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x))
        if x.ndim == 2:
            x = ad.reshape(x, (x.shape[0], x.shape[1], 1))
        if x.shape[1] != self.hierarchy.padded_n:
            raise ad.ShapeError(
                f"input has {x.shape[1]} nodes; expected the permuted/padded "
                f"count {self.hierarchy.padded_n}"
            )
        return x

    def conv_stack(self, x, training: bool = False) -> Tensor:
        """Residual blocks and pooling only; returns batch x nodes x features."""
        h = self._as_node_tensor(x)
        schedule = self.config.pooling_schedule()
        for b, block in enumerate(self.blocks):
            level = self._block_levels[b]
            h = residual_block_forward(h, self.laplacians[level], block,
                                       self.config.leaky_slope, training)
            for p in range(schedule[b]):
                h = ad.masked_pair_max(h, self.hierarchy.masks[level + p])
        return h

    def forward(self, x, training: bool = False) -> Tensor:
        """Permuted/padded node signals -> class logits."""
        h = self.conv_stack(x, training)
        batch = h.shape[0]
        flat_dim = h.shape[1] * h.shape[2]
        flat = ad.reshape(h, (batch, flat_dim, 1))
        attended = attention_forward(flat, self.head_att)  # feature-axis attention
        attended = ad.reshape(attended, (batch, flat_dim))
        return ad.add(ad.matmul(attended, self.head_w), self.head_b)

    def predict(self, features: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        """Argmax class per row, in inference mode without taping."""
        out = []
        for lo in range(0, features.shape[0], batch_size):
            logits = self.forward(features[lo: lo + batch_size], training=False)
            out.append(np.argmax(logits.data, axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)
