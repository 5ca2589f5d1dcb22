"""Architectural units: residual block, squeeze-excitation, MBConv, head.

Every block is a pure function from (input tensor, config, parameter
dict) to an output tensor. Parameters live in flat ``dict[str,
Parameter]`` containers with dotted names so the checkpoint writer and
the optimizer can address them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from morphnet.tensor import (
    Parameter,
    ShapeError,
    Tensor,
    dense,
    depthwise_conv2d,
    dropout,
    global_avg_pool,
    he_init,
    pointwise_conv,
    relu,
    sigmoid,
    softmax,
)

__all__ = [
    "SEConfig",
    "ResidualConfig",
    "MBConvConfig",
    "HeadConfig",
    "se_squeeze",
    "se_excite",
    "se_scale",
    "se_block",
    "residual_forward",
    "init_se_params",
    "init_mbconv_params",
    "init_head_params",
    "mbconv_forward",
    "head_forward",
    "param_count",
]


@dataclass(frozen=True)
class SEConfig:
    """Channel-recalibration gate: squeeze to D stats, bottleneck to m, re-expand.

    ``variant`` picks the realization of the two gate layers: plain
    dense matrices or 1x1 convolutions (identical arithmetic).
    ``gate_activation`` is normally sigmoid; ``relu_unbounded`` swaps
    in ReLU for ablations, trading the (0, 1) bound for a free scale.
    """

    channels: int
    bottleneck: int
    variant: str = "fc_sigmoid"
    gate_activation: str = "sigmoid"

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if not 1 <= self.bottleneck <= self.channels:
            raise ValueError(
                f"bottleneck must be in [1, {self.channels}], got {self.bottleneck}"
            )
        if self.variant not in ("fc_sigmoid", "pointwise"):
            raise ValueError(f"unknown SE variant {self.variant!r}")
        if self.gate_activation not in ("sigmoid", "relu_unbounded"):
            raise ValueError(f"unknown gate activation {self.gate_activation!r}")

    @classmethod
    def with_reduction(cls, channels: int, reduction: int = 4, **kw) -> "SEConfig":
        return cls(channels, max(1, channels // reduction), **kw)


@dataclass(frozen=True)
class ResidualConfig:
    """Two weighted layers on the inner path; the skip is a fixed identity."""

    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ValueError(f"units must be positive, got {self.units}")


@dataclass(frozen=True)
class MBConvConfig:
    """Inverted residual: expand, depthwise, SE gate, linear projection."""

    in_channels: int
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    expansion_ratio: int = 6
    se_bottleneck: float = 0.25

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.expansion_ratio < 1:
            raise ValueError(f"expansion_ratio must be >= 1, got {self.expansion_ratio}")
        if not 0.0 < self.se_bottleneck <= 1.0:
            raise ValueError(f"se_bottleneck must be in (0, 1], got {self.se_bottleneck}")

    @property
    def expanded_channels(self) -> int:
        return self.in_channels * self.expansion_ratio

    @property
    def se_units(self) -> int:
        return max(1, round(self.se_bottleneck * self.in_channels))

    @property
    def has_skip(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels


@dataclass(frozen=True)
class HeadConfig:
    """Classifier tail: pooled features, dropout, a 64-wide ReLU layer, output."""

    mode: str = "classify"
    hidden_units: int = 64
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.mode not in ("classify", "regress"):
            raise ValueError(f"mode must be classify or regress, got {self.mode!r}")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def outputs(self) -> int:
        return 7 if self.mode == "classify" else 37


# -- squeeze and excitation --


def se_squeeze(u: Tensor) -> Tensor:
    """Per-channel spatial mean: (H, W, D) -> (D,), batched likewise."""
    return global_avg_pool(u)


def _gate(cfg: SEConfig):
    return sigmoid if cfg.gate_activation == "sigmoid" else relu


def se_excite(
    z: Tensor,
    cfg: SEConfig,
    w1: Tensor,
    w2: Tensor,
    b1: Optional[Tensor] = None,
    b2: Optional[Tensor] = None,
) -> Tensor:
    """Bottleneck gate: gate(W2 . relu(W1 . z)), one scale per channel.

    ``fc_sigmoid`` treats w1/w2 as dense matrices (D, m) and (m, D);
    ``pointwise`` runs the same weights as two 1x1 convolutions over a
    1x1 spatial map, which is arithmetic-identical but reuses the conv
    machinery.
    """
    d, m = cfg.channels, cfg.bottleneck
    if w1.shape not in ((d, m), (1, 1, d, m)) or w2.shape not in ((m, d), (1, 1, m, d)):
        raise ShapeError(
            f"SE weights {w1.shape}/{w2.shape} do not map {d} -> {m} -> {d}"
        )
    if z.shape[-1] != d:
        raise ShapeError(f"excitation input has {z.shape[-1]} channels, expected {d}")
    gate = _gate(cfg)
    if cfg.variant == "fc_sigmoid":
        w1m = w1.reshape(d, m) if w1.ndim == 4 else w1
        w2m = w2.reshape(m, d) if w2.ndim == 4 else w2
        hidden = dense(z, w1m, b1, activation=relu)
        return dense(hidden, w2m, b2, activation=gate)
    # pointwise: lift z onto a 1x1 spatial map and convolve
    batched = z.ndim == 2
    n = z.shape[0] if batched else 1
    zmap = z.reshape(n, 1, 1, d)
    k1 = w1 if w1.ndim == 4 else w1.reshape(1, 1, d, m)
    k2 = w2 if w2.ndim == 4 else w2.reshape(1, 1, m, d)
    hidden = relu(pointwise_conv(zmap, k1, bias=b1))
    s = gate(pointwise_conv(hidden, k2, bias=b2))
    return s.reshape(n, d) if batched else s.reshape(d)


def se_scale(u: Tensor, s: Tensor) -> Tensor:
    """Rescale each channel of ``u`` by its gate value."""
    if u.shape[-1] != s.shape[-1]:
        raise ShapeError(f"gate has {s.shape[-1]} channels, input has {u.shape[-1]}")
    if s.ndim == 1:
        return u * s
    if s.ndim == 2 and u.ndim == 4 and u.shape[0] == s.shape[0]:
        return u * s.reshape(s.shape[0], 1, 1, s.shape[1])
    raise ShapeError(f"cannot scale input {u.shape} with gates {s.shape}")


def se_block(u: Tensor, cfg: SEConfig, params: dict) -> Tensor:
    """squeeze -> excite -> scale, using params named se.w1/se.b1/se.w2/se.b2."""
    z = se_squeeze(u)
    s = se_excite(z, cfg, params["se.w1"], params["se.w2"], params.get("se.b1"), params.get("se.b2"))
    return se_scale(u, s)


# -- residual unit --


def residual_forward(a: Tensor, cfg: ResidualConfig, params: dict) -> Tensor:
    """ReLU(a + W2 . ReLU(W1 . a)) with an identity skip."""
    w1, w2 = params["w1"], params["w2"]
    if w1.shape != (cfg.units, cfg.units) or w2.shape != (cfg.units, cfg.units):
        raise ShapeError(
            f"residual weights {w1.shape}/{w2.shape} must be square of width {cfg.units}"
        )
    if a.shape[-1] != cfg.units:
        raise ShapeError(f"input width {a.shape[-1]} does not match unit width {cfg.units}")
    inner = dense(relu(dense(a, w1, params.get("b1"))), w2, params.get("b2"))
    return relu(a + inner)


# -- MBConv --


def init_se_params(channels: int, units: int, rng: np.random.Generator) -> dict:
    return {
        "se.w1": Parameter(he_init((channels, units), fan_in=channels, rng=rng)),
        "se.b1": Parameter(np.zeros(units)),
        "se.w2": Parameter(he_init((units, channels), fan_in=units, rng=rng)),
        "se.b2": Parameter(np.zeros(channels)),
    }


def init_mbconv_params(cfg: MBConvConfig, rng: np.random.Generator) -> dict:
    """He-initialized parameter dict for one MBConv block."""
    mid = cfg.expanded_channels
    k = cfg.kernel_size
    params: dict = {}
    if cfg.expansion_ratio > 1:
        params["expand.kernel"] = Parameter(
            he_init((1, 1, cfg.in_channels, mid), fan_in=cfg.in_channels, rng=rng)
        )
        params["expand.bias"] = Parameter(np.zeros(mid))
    params["dw.kernel"] = Parameter(he_init((k, k, mid), fan_in=k * k, rng=rng))
    params["dw.bias"] = Parameter(np.zeros(mid))
    params.update(init_se_params(mid, cfg.se_units, rng))
    params["project.kernel"] = Parameter(he_init((1, 1, mid, cfg.out_channels), fan_in=mid, rng=rng))
    params["project.bias"] = Parameter(np.zeros(cfg.out_channels))
    return params


def mbconv_forward(x: Tensor, cfg: MBConvConfig, params: dict) -> Tensor:
    """Expand, depthwise filter, SE-gate, project; skip-add when shapes allow."""
    h = x
    if cfg.expansion_ratio > 1:
        h = relu(pointwise_conv(h, params["expand.kernel"], bias=params["expand.bias"]))
    h = relu(
        depthwise_conv2d(h, params["dw.kernel"], bias=params["dw.bias"], stride=cfg.stride, padding="same")
    )
    se_cfg = SEConfig(cfg.expanded_channels, cfg.se_units)
    h = se_block(h, se_cfg, params)
    h = pointwise_conv(h, params["project.kernel"], bias=params["project.bias"])
    if cfg.has_skip:
        h = h + x
    return h


# -- head --


def init_head_params(cfg: HeadConfig, in_channels: int, rng: np.random.Generator) -> dict:
    return {
        "fc1.w": Parameter(he_init((in_channels, cfg.hidden_units), fan_in=in_channels, rng=rng)),
        "fc1.b": Parameter(np.zeros(cfg.hidden_units)),
        "fc2.w": Parameter(he_init((cfg.hidden_units, cfg.outputs), fan_in=cfg.hidden_units, rng=rng)),
        "fc2.b": Parameter(np.zeros(cfg.outputs)),
    }


def head_forward(
    features: Tensor,
    cfg: HeadConfig,
    params: dict,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """GAP -> dropout -> 64-wide ReLU layer -> 7-way softmax or 37-way sigmoid."""
    pooled = global_avg_pool(features)
    if pooled.shape[-1] != params["fc1.w"].shape[0]:
        raise ShapeError(
            f"head expects {params['fc1.w'].shape[0]} channels, got {pooled.shape[-1]}"
        )
    h = dropout(pooled, cfg.dropout_rate, training=training, rng=rng)
    h = dense(h, params["fc1.w"], params["fc1.b"], activation=relu)
    out_act = softmax if cfg.mode == "classify" else sigmoid
    return dense(h, params["fc2.w"], params["fc2.b"], activation=out_act)


def param_count(params: dict) -> int:
    """Total number of scalar parameters in a parameter dict."""
    return sum(int(p.size) for p in params.values())
