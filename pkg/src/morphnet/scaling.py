"""Staged architecture descriptions, compound scaling, and network assembly.

A baseline architecture is a stem/stage list read from a small text
format (see :func:`parse_arch_text`). Scaling multiplies depth by
``alpha**phi``, width by ``beta**phi``, and input resolution by
``gamma**phi``; the three coefficients are meant to satisfy
``alpha * beta**2 * gamma**2`` close to 2 so estimated FLOPs roughly
double per unit of ``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from typing import Optional

import numpy as np

from morphnet import blocks
from morphnet.blocks import HeadConfig, MBConvConfig
from morphnet.tensor import Parameter, Tensor, conv2d, he_init, relu

__all__ = [
    "ScalingCoefficients",
    "StageSpec",
    "ScaledArch",
    "DEFAULT_COEFFICIENTS",
    "CHANNEL_UNIT",
    "check_constraint",
    "round_channels",
    "scale_arch",
    "estimate_flops",
    "parse_arch_text",
    "format_arch_text",
    "load_arch",
    "baseline_arch",
    "toy_arch",
    "Network",
    "build_network",
    "build_preset",
    "network_from_descriptor",
    "PRESET_NAMES",
]

CHANNEL_UNIT = 8


@dataclass(frozen=True)
class ScalingCoefficients:
    """Depth/width/resolution multipliers alpha^phi, beta^phi, gamma^phi."""

    alpha: float = 1.2
    beta: float = 1.1
    gamma: float = 1.15
    phi: float = 0.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 1.0:
            raise ValueError("alpha, beta, gamma must all be >= 1")
        if self.phi < 0:
            raise ValueError("phi must be nonnegative")

    @property
    def depth(self) -> float:
        return self.alpha**self.phi

    @property
    def width(self) -> float:
        return self.beta**self.phi

    @property
    def resolution(self) -> float:
        return self.gamma**self.phi


DEFAULT_COEFFICIENTS = ScalingCoefficients()


@dataclass(frozen=True)
class StageSpec:
    """One stage: either plain convolutions or a run of MBConv blocks."""

    kind: str
    kernel: int
    stride: int
    channels: int
    layers: int
    expansion: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("conv", "mbconv"):
            raise ValueError(f"stage kind must be conv or mbconv, got {self.kind!r}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.channels < 1 or self.layers < 1:
            raise ValueError("channels and layers must be positive")
        if self.kind == "mbconv" and (self.expansion is None or self.expansion < 1):
            raise ValueError("mbconv stages need expansion >= 1")


@dataclass(frozen=True)
class ScaledArch:
    resolution: int
    in_channels: int
    stages: tuple[StageSpec, ...]

    def __post_init__(self):
        if self.resolution < 1 or self.in_channels < 1:
            raise ValueError("resolution and input channels must be positive")
        if not self.stages:
            raise ValueError("architecture needs at least one stage")

    @property
    def min_resolution(self) -> int:
        """Product of stage strides: the smallest input that survives downsampling."""
        prod = 1
        for s in self.stages:
            prod *= s.stride
        return prod

    @property
    def out_channels(self) -> int:
        return self.stages[-1].channels


def check_constraint(c: ScalingCoefficients) -> float:
    """Signed deviation of alpha*beta^2*gamma^2 from the target value 2."""
    return c.alpha * c.beta**2 * c.gamma**2 - 2.0


def round_channels(value: float, unit: int = CHANNEL_UNIT) -> int:
    """Round to the nearest multiple of ``unit`` (half up), never below ``unit``."""
    return max(unit, unit * int(math.floor(value / unit + 0.5)))


def scale_arch(baseline: ScaledArch, c: ScalingCoefficients) -> ScaledArch:
    """Scale stage depth and width, and the input resolution, by phi.

    Depth scaling applies to the repeatable mbconv stages; plain conv
    stages (stem, final feature mixer) keep their layer counts, since
    they are fixed plumbing rather than repeated blocks. Width scaling
    applies everywhere.
    """
    if c.phi == 0:
        return replace(baseline)
    d, w, r = c.depth, c.width, c.resolution
    stages = tuple(
        replace(
            s,
            layers=math.ceil(d * s.layers) if s.kind == "mbconv" else s.layers,
            channels=round_channels(w * s.channels),
        )
        for s in baseline.stages
    )
    resolution = int(math.floor(r * baseline.resolution + 0.5))
    arch = ScaledArch(resolution, baseline.in_channels, stages)
    if resolution < arch.min_resolution:
        raise ValueError(
            f"scaled resolution {resolution} below minimum feasible {arch.min_resolution}"
        )
    return arch


def _stage_layer_plan(arch: ScaledArch):
    """Yield (stage_index, layer_index, spec-with-per-layer-stride, in_channels, in_res).

    The first layer of a stage carries the stage stride and the channel
    change; later layers run stride 1 at the stage's output width.
    """
    cin = arch.in_channels
    res = arch.resolution
    for si, stage in enumerate(arch.stages):
        for li in range(stage.layers):
            stride = stage.stride if li == 0 else 1
            yield si, li, replace(stage, stride=stride), cin, res
            res = -(-res // stride)
            cin = stage.channels


def estimate_flops(arch: ScaledArch, head: Optional[HeadConfig] = None) -> int:
    """Analytic cost: 2 x multiply-accumulates over conv and dense layers.

    Biases, activations, pooling, and the SE gatings' elementwise scale
    are excluded; SE's two small dense layers are counted.
    """
    macs = 0
    for _, _, spec, cin, res in _stage_layer_plan(arch):
        out_res = -(-res // spec.stride)
        if spec.kind == "conv":
            macs += out_res * out_res * spec.kernel * spec.kernel * cin * spec.channels
        else:
            cfg = MBConvConfig(
                cin, spec.channels, kernel_size=spec.kernel,
                stride=spec.stride, expansion_ratio=spec.expansion,
            )
            mid = cfg.expanded_channels
            if cfg.expansion_ratio > 1:
                macs += res * res * cin * mid
            macs += out_res * out_res * spec.kernel * spec.kernel * mid
            macs += 2 * mid * cfg.se_units
            macs += out_res * out_res * mid * spec.channels
    if head is not None:
        macs += arch.out_channels * head.hidden_units
        macs += head.hidden_units * head.outputs
    return 2 * macs


# -- text format --


def parse_arch_text(text: str) -> ScaledArch:
    """Parse the staged-architecture text format.

    Line grammar (one directive per line, ``#`` comments allowed)::

        version 1
        input <resolution> <channels>
        stage <conv|mbconv> k<kernel> s<stride> c<channels> l<layers> e<expansion|->
    """
    version = None
    resolution = in_channels = None
    stages: list[StageSpec] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "version":
                version = int(parts[1])
            elif parts[0] == "input":
                resolution, in_channels = int(parts[1]), int(parts[2])
            elif parts[0] == "stage":
                fields = {p[0]: p[1:] for p in parts[2:]}
                expansion = fields.get("e", "-")
                stages.append(
                    StageSpec(
                        kind=parts[1],
                        kernel=int(fields["k"]),
                        stride=int(fields["s"]),
                        channels=int(fields["c"]),
                        layers=int(fields["l"]),
                        expansion=None if expansion == "-" else int(expansion),
                    )
                )
            else:
                raise ValueError(f"unknown directive {parts[0]!r}")
        except (IndexError, KeyError, ValueError) as exc:
            raise ValueError(f"arch text line {lineno}: {raw.strip()!r}: {exc}") from None
    if version != 1:
        raise ValueError(f"unsupported arch format version {version!r}")
    if resolution is None:
        raise ValueError("arch text missing 'input' line")
    return ScaledArch(resolution, in_channels, tuple(stages))


def format_arch_text(arch: ScaledArch) -> str:
    lines = ["version 1", f"input {arch.resolution} {arch.in_channels}"]
    for s in arch.stages:
        e = "-" if s.expansion is None else str(s.expansion)
        lines.append(f"stage {s.kind} k{s.kernel} s{s.stride} c{s.channels} l{s.layers} e{e}")
    return "\n".join(lines) + "\n"


def load_arch(path) -> ScaledArch:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_arch_text(fh.read())


def _bundled_arch(filename: str) -> ScaledArch:
    data = resources.files("morphnet").joinpath("data", filename)
    return parse_arch_text(data.read_text(encoding="utf-8"))


def baseline_arch() -> ScaledArch:
    """The phi=0 staged baseline the b-presets scale from."""
    return _bundled_arch("baseline_b0.arch")


def toy_arch() -> ScaledArch:
    """Three-stage, <=32-channel baseline for 32x32 desk-scale runs."""
    return _bundled_arch("toy.arch")


# -- network assembly --


class Network:
    """Initialized parameters plus a forward pass over the staged architecture."""

    def __init__(self, arch: ScaledArch, head: HeadConfig, rng: np.random.Generator):
        self.arch = arch
        self.head = head
        self.params: dict[str, Parameter] = {}
        self._plan = []
        cin = arch.in_channels
        for si, stage in enumerate(arch.stages):
            for li in range(stage.layers):
                name = f"s{si}.l{li}"
                stride = stage.stride if li == 0 else 1
                if stage.kind == "conv":
                    k = stage.kernel
                    self.params[f"{name}.kernel"] = Parameter(
                        he_init((k, k, cin, stage.channels), fan_in=k * k * cin, rng=rng)
                    )
                    self.params[f"{name}.bias"] = Parameter(np.zeros(stage.channels))
                    self._plan.append((name, "conv", stride, None))
                else:
                    cfg = MBConvConfig(
                        cin, stage.channels, kernel_size=stage.kernel,
                        stride=stride, expansion_ratio=stage.expansion,
                    )
                    for pname, p in blocks.init_mbconv_params(cfg, rng).items():
                        self.params[f"{name}.{pname}"] = p
                    self._plan.append((name, "mbconv", stride, cfg))
                cin = stage.channels
        for pname, p in blocks.init_head_params(head, cin, rng).items():
            self.params[f"head.{pname}"] = p

    def _local(self, prefix: str) -> dict:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def forward(
        self,
        x: Tensor,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        record: Optional[dict] = None,
    ) -> Tensor:
        """Run the stages then the head; optionally record block outputs by name."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        for name, kind, stride, cfg in self._plan:
            if kind == "conv":
                h = relu(
                    conv2d(
                        h,
                        self.params[f"{name}.kernel"],
                        bias=self.params[f"{name}.bias"],
                        stride=stride,
                        padding="same",
                    )
                )
            else:
                h = blocks.mbconv_forward(h, cfg, self._local(name))
            if record is not None:
                record[name] = h.data
        out = blocks.head_forward(h, self.head, self._local("head"), training=training, rng=rng)
        if record is not None:
            record["head"] = out.data
        return out

    def layer_names(self) -> list[str]:
        return [name for name, _, _, _ in self._plan] + ["head"]

    def descriptor(self) -> str:
        """Text form sufficient to rebuild this network's shape (not its weights)."""
        head = self.head
        return format_arch_text(self.arch) + (
            f"head {head.mode} hidden {head.hidden_units} dropout {head.dropout_rate!r}\n"
        )

    @property
    def num_params(self) -> int:
        return blocks.param_count(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def set_weights(self, tensors: dict[str, np.ndarray]) -> None:
        for name, value in tensors.items():
            if name not in self.params:
                raise KeyError(f"unknown parameter {name!r}")
            p = self.params[name]
            if p.data.shape != value.shape:
                raise ValueError(
                    f"parameter {name!r} has shape {p.data.shape}, checkpoint has {value.shape}"
                )
            p.data = value.astype(p.data.dtype, copy=True)
            p.grad = np.zeros_like(p.data)


PRESET_NAMES = tuple(f"b{i}" for i in range(8)) + ("toy",)


def build_preset(name: str, mode: str = "classify") -> tuple[ScaledArch, HeadConfig]:
    """Resolve a preset name to its scaled architecture and head config.

    b0..b7 scale the full baseline with phi = 0..7 under the default
    coefficients, then pin the input resolution to the published sizes
    (224 below b4, 256 from b4 up). ``toy`` is the small test network.
    """
    head = HeadConfig(mode=mode)
    if name == "toy":
        return toy_arch(), head
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; expected one of {', '.join(PRESET_NAMES)}")
    phi = int(name[1])
    arch = scale_arch(baseline_arch(), replace(DEFAULT_COEFFICIENTS, phi=phi))
    arch = replace(arch, resolution=224 if phi <= 3 else 256)
    return arch, head


def build_network(
    arch: ScaledArch, head: HeadConfig, rng: Optional[np.random.Generator] = None
) -> Network:
    if rng is None:
        rng = np.random.default_rng(0)
    return Network(arch, head, rng)


def network_from_descriptor(text: str, rng: Optional[np.random.Generator] = None) -> Network:
    """Rebuild a network's structure from :meth:`Network.descriptor` output."""
    arch_lines = []
    head_line = None
    for line in text.splitlines():
        if line.startswith("head "):
            head_line = line.split()
        else:
            arch_lines.append(line)
    if head_line is None:
        raise ValueError("descriptor missing head line")
    arch = parse_arch_text("\n".join(arch_lines))
    head = HeadConfig(
        mode=head_line[1],
        hidden_units=int(head_line[3]),
        dropout_rate=float(head_line[5]),
    )
    return build_network(arch, head, rng)
