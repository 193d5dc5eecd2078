"""DSNet: VGG front end, dense dilated conv blocks with dense residual links, regression head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConstructionError, ContractViolation
from .optim import ParamStore
from .tensor import Conv2dSpec, Tensor, add, concat_channels, conv2d, max_pool_2x2, relu

POOL = "pool"

# (channels, repeats) per VGG-16 stage, truncated after the tenth conv
VGG_FRONT10 = ((64, 2), (128, 2), (256, 3), (512, 3))
HEAD_WIDTHS = (128, 64)


def _scaled(channels: int, channel_scale: float) -> int:
    return max(1, int(round(channels * channel_scale)))


def build_backbone(preset: str = "vgg_front10", channel_scale: float = 1.0) -> list:
    """Ten same-padded 3x3 convs with ReLU and three 2x2 max pools.

    ``preset="toy"`` keeps the topology and multiplies every width by
    ``channel_scale``.
    """
    if preset == "vgg_front10":
        channel_scale = 1.0
    elif preset != "toy":
        raise ConstructionError(f"unknown backbone preset {preset!r}")
    layers, c_in = [], 3
    for stage, (width, repeats) in enumerate(VGG_FRONT10):
        c_out = _scaled(width, channel_scale)
        for _ in range(repeats):
            layers.append(Conv2dSpec.same(c_in, c_out, 3))
            c_in = c_out
        if stage < len(VGG_FRONT10) - 1:
            layers.append(POOL)
    return layers


def backbone_out_channels(backbone: Sequence) -> int:
    return [layer for layer in backbone if layer != POOL][-1].out_channels


@dataclass(frozen=True)
class DdcbSpec:
    in_channels: int
    growth: int
    bottleneck: int
    fuse_out: int
    dilations: tuple = (1, 2, 3)

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConstructionError(f"dilations must be positive, got {self.dilations}")
        if any(b <= a for a, b in zip(self.dilations, self.dilations[1:])):
            raise ConstructionError(f"dilations must be strictly increasing, got {self.dilations}")
        if self.fuse_out != self.in_channels:
            raise ConstructionError(
                f"fuse_out must equal in_channels for residual addition: expected {self.in_channels}, got {self.fuse_out}"
            )


@dataclass(frozen=True)
class DdcbLayers:
    """Concrete conv specs of one block: per dilation a (1x1 reduce, dilated 3x3) pair, then the fusion conv."""

    spec: DdcbSpec
    pairs: tuple
    fuse: Conv2dSpec


def build_ddcb(spec: DdcbSpec) -> DdcbLayers:
    pairs = []
    for j, d in enumerate(spec.dilations):
        c_in = spec.in_channels + j * spec.growth
        reduce = Conv2dSpec.same(c_in, spec.bottleneck, 1)
        dilated = Conv2dSpec.same(spec.bottleneck, spec.growth, 3, dilation=d)
        pairs.append((reduce, dilated))
    fuse_in = spec.in_channels + len(spec.dilations) * spec.growth
    # the fusion conv is the block's last layer: no ReLU
    fuse = Conv2dSpec.same(fuse_in, spec.fuse_out, 3, has_relu=False)
    _check_block_accounting(spec, pairs, fuse)
    return DdcbLayers(spec, tuple(pairs), fuse)


def _check_block_accounting(spec, pairs, fuse):
    available = spec.in_channels
    for j, (reduce, dilated) in enumerate(pairs):
        if reduce.in_channels != available:
            raise ConstructionError(f"layer {j} input: expected {available} channels, got {reduce.in_channels}")
        if dilated.in_channels != reduce.out_channels:
            raise ConstructionError(
                f"layer {j} dilated input: expected {reduce.out_channels} channels, got {dilated.in_channels}"
            )
        available += dilated.out_channels
    if fuse.in_channels != available:
        raise ConstructionError(f"fusion input: expected {available} channels, got {fuse.in_channels}")


def build_head(in_channels: int, channel_scale: float = 1.0) -> list[Conv2dSpec]:
    w1, w2 = (_scaled(c, channel_scale) for c in HEAD_WIDTHS)
    # final ReLU keeps the density non-negative
    return [Conv2dSpec.same(in_channels, w1, 3), Conv2dSpec.same(w1, w2, 3), Conv2dSpec.same(w2, 1, 1)]


@dataclass
class ModelGraph:
    backbone: list
    blocks: list[DdcbLayers]
    head: list[Conv2dSpec]
    params: ParamStore = field(default_factory=ParamStore)

    def conv_layers(self):
        """Yield ``(param_prefix, Conv2dSpec)`` for every conv in forward order."""
        i = 0
        for layer in self.backbone:
            if layer != POOL:
                yield f"backbone.conv{i}", layer
                i += 1
        for b, block in enumerate(self.blocks):
            for j, (reduce, dilated) in enumerate(block.pairs):
                yield f"ddcb{b}.layer{j}.reduce", reduce
                yield f"ddcb{b}.layer{j}.dilated", dilated
            yield f"ddcb{b}.fuse", block.fuse
        for i, spec in enumerate(self.head):
            yield f"head.conv{i}", spec

    def topology(self) -> dict:
        return {
            "backbone": [layer if layer == POOL else asdict(layer) for layer in self.backbone],
            "blocks": [asdict(block.spec) for block in self.blocks],
            "head": [asdict(spec) for spec in self.head],
        }

    @classmethod
    def from_topology(cls, topo: dict) -> "ModelGraph":
        backbone = [layer if layer == POOL else Conv2dSpec(**layer) for layer in topo["backbone"]]
        blocks = [DdcbSpec(**{**b, "dilations": tuple(b["dilations"])}) for b in topo["blocks"]]
        head = [Conv2dSpec(**h) for h in topo["head"]]
        return build_dsnet(backbone, blocks, head)


def build_dsnet(backbone: list, block_specs: Sequence[DdcbSpec], head: list[Conv2dSpec]) -> ModelGraph:
    """Wire the network and allocate zero parameters (see :func:`init_params`)."""
    pools = sum(1 for layer in backbone if layer == POOL)
    if pools != 3:
        raise ConstructionError(f"backbone must contain exactly 3 pools (output stride 8), found {pools}")
    c = 3
    for i, layer in enumerate(backbone):
        if layer == POOL:
            continue
        if layer.in_channels != c:
            raise ConstructionError(f"backbone layer {i}: expected {c} input channels, got {layer.in_channels}")
        c = layer.out_channels
    blocks = []
    for b, spec in enumerate(block_specs):
        if spec.in_channels != c:
            raise ConstructionError(f"block {b}: expected {c} input channels, got {spec.in_channels}")
        blocks.append(build_ddcb(spec))
    for i, spec in enumerate(head):
        if spec.in_channels != c:
            raise ConstructionError(f"head layer {i}: expected {c} input channels, got {spec.in_channels}")
        c = spec.out_channels
    if c != 1:
        raise ConstructionError(f"head must end with 1 output channel, got {c}")

    graph = ModelGraph(list(backbone), blocks, list(head))
    for prefix, spec in graph.conv_layers():
        graph.params.add(f"{prefix}.weight", Tensor(np.zeros(spec.weight_shape)))
        graph.params.add(f"{prefix}.bias", Tensor(np.zeros(spec.out_channels)))
    return graph


def dsnet_preset(name: str = "full", channel_scale: float = 1.0 / 8, n_blocks: int = 3) -> ModelGraph:
    """``"full"``: VGG widths, blocks (bottleneck 256, growth 64, fuse 512).
    ``"toy"``: every width times ``channel_scale``."""
    if name == "full":
        channel_scale = 1.0
        backbone = build_backbone("vgg_front10")
    elif name == "toy":
        backbone = build_backbone("toy", channel_scale)
    else:
        raise ConstructionError(f"unknown model preset {name!r}")
    c = backbone_out_channels(backbone)
    block = DdcbSpec(
        in_channels=c,
        growth=_scaled(64, channel_scale),
        bottleneck=_scaled(256, channel_scale),
        fuse_out=c,
    )
    return build_dsnet(backbone, [block] * n_blocks, build_head(c, channel_scale))


def init_params(graph: ModelGraph, seed: int = 0, std: float = 0.01, backbone_init: str = "gaussian") -> ParamStore:
    """Weights ~ N(0, std^2) in layer order from one seeded generator; biases zero.

    ``backbone_init="he"`` draws the backbone convs from N(0, 2/fan_in) instead,
    a stand-in for pretrained VGG weights so signal survives ten layers.
    """
    if backbone_init not in ("gaussian", "he"):
        raise ConstructionError(f"backbone_init must be 'gaussian' or 'he', got {backbone_init!r}")
    rng = np.random.default_rng(seed)
    for prefix, spec in graph.conv_layers():
        s = std
        if backbone_init == "he" and prefix.startswith("backbone."):
            s = np.sqrt(2.0 / (spec.in_channels * spec.kernel * spec.kernel))
        graph.params[f"{prefix}.weight"].data = rng.normal(0.0, s, spec.weight_shape)
        graph.params[f"{prefix}.bias"].data = np.zeros(spec.out_channels)
    return graph.params


def _conv(graph, prefix, spec, x):
    y = conv2d(x, graph.params[f"{prefix}.weight"], graph.params[f"{prefix}.bias"], spec)
    return relu(y) if spec.has_relu else y


def ddcb_forward(graph: ModelGraph, b: int, x: Tensor, probe=None) -> Tensor:
    block = graph.blocks[b]
    features = [x]
    for j, (reduce, dilated) in enumerate(block.pairs):
        inp = features[0] if len(features) == 1 else concat_channels(features)
        y = _conv(graph, f"ddcb{b}.layer{j}.reduce", reduce, inp)
        y = _conv(graph, f"ddcb{b}.layer{j}.dilated", dilated, y)
        if probe is not None:
            probe.append((f"ddcb{b}.layer{j}", y.shape))
        features.append(y)
    out = _conv(graph, f"ddcb{b}.fuse", block.fuse, concat_channels(features))
    if probe is not None:
        probe.append((f"ddcb{b}.fuse", out.shape))
    return out


def backbone_forward(graph: ModelGraph, x: Tensor, probe=None) -> Tensor:
    i = 0
    for layer in graph.backbone:
        if layer == POOL:
            x = max_pool_2x2(x)
            name = "backbone.pool"
        else:
            name = f"backbone.conv{i}"
            x = _conv(graph, name, layer, x)
            i += 1
        if probe is not None:
            probe.append((name, x.shape))
    return x


def forward(graph: ModelGraph, x: Tensor, drop_links=(), probe: list | None = None) -> Tensor:
    """Density map at 1/8 resolution, shape ``(n, 1, h/8, w/8)``.

    Dense residual wiring: block ``j`` receives ``f0 + o_1 + ... + o_{j-1}`` and
    the head receives ``f0 + o_1 + ... + o_B``. ``drop_links`` holds
    ``(source_block, target)`` pairs (1-based blocks, target a block index or
    ``"head"``) whose contribution is omitted; used to probe the wiring.
    """
    if x.ndim != 4 or x.shape[2] % 8 or x.shape[3] % 8:
        raise ContractViolation(f"forward: input spatial dims must be divisible by 8, got shape {x.shape}")
    dropped = set(drop_links)
    f0 = backbone_forward(graph, x, probe)
    outputs = []
    for b in range(len(graph.blocks)):
        inp = f0
        for i, o in enumerate(outputs, start=1):
            if (i, b + 1) not in dropped:
                inp = add(inp, o)
        outputs.append(ddcb_forward(graph, b, inp, probe))
    y = f0
    for i, o in enumerate(outputs, start=1):
        if (i, "head") not in dropped:
            y = add(y, o)
    for i, spec in enumerate(graph.head):
        y = _conv(graph, f"head.conv{i}", spec, y)
        if probe is not None:
            probe.append((f"head.conv{i}", y.shape))
    return y


def parameter_count(backbone, block_specs, head) -> int:
    """Closed-form count from the specs alone (weights plus biases)."""

    def conv(cin, cout, k):
        return cout * cin * k * k + cout

    total = sum(conv(l.in_channels, l.out_channels, l.kernel) for l in backbone if l != POOL)
    for s in block_specs:
        for j in range(len(s.dilations)):
            total += conv(s.in_channels + j * s.growth, s.bottleneck, 1) + conv(s.bottleneck, s.growth, 3)
        total += conv(s.in_channels + len(s.dilations) * s.growth, s.fuse_out, 3)
    return total + sum(conv(h.in_channels, h.out_channels, h.kernel) for h in head)
