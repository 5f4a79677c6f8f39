"""Multi-stage network with scale-associated side outputs and fusion.

The backbone is a VGG-style stack of 3x3 conv+relu stages separated by 2x2
max pools. Selected stages ("taps") carry side-output heads: a 1x1
projection to one channel per detectable scale class plus background,
upsampled to input size and softmax-normalized. A per-class weight vector
fuses the per-stage probabilities for that class into the final stack.

Two head modes share the schema: "scale" gives side output i the classes
{0..i} (quantized scales it can see), "binary" gives every side output the
two classes {background, skeleton} with a single full-length fusion vector
per class -- the HED-style ablation baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DataFormat, ShapeMismatch
from .geometry import ReceptiveFieldSchedule
from .losses import softmax, softmax_vjp
from .nn import LayerParams

_CONFIG_KEYS = {"in_channels", "stages", "taps", "head_mode", "precision",
                "margin", "fusion_lr_mult", "head_lr_mult"}
_STAGE_KEYS = {"convs", "pool_after"}


@dataclass(frozen=True)
class StageSpec:
    """One backbone stage: (kernel, out_channels) conv specs + pool flag."""

    convs: tuple[tuple[int, int], ...]
    pool_after: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    stages: tuple[StageSpec, ...]
    taps: tuple[int, ...]  # 1-based backbone stage indices carrying heads
    in_channels: int = 1
    head_mode: str = "scale"  # "scale" | "binary"
    precision: str = "f32"  # "f32" | "f64"
    margin: float = 1.2
    fusion_lr_mult: float = 5.0
    head_lr_mult: float = 1.0

    def __post_init__(self):
        n = len(self.stages)
        taps = self.taps
        if not taps or list(taps) != sorted(set(taps)):
            raise DataFormat("taps must be strictly increasing")
        if taps[0] < 1 or taps[-1] > n:
            raise DataFormat("tap index out of range")
        # Suffix-closed: once a stage is tapped, all deeper stages are too.
        if list(taps) != list(range(taps[0], taps[0] + len(taps))) or taps[-1] != n:
            raise DataFormat("taps must form a suffix of the stage indices")
        if self.head_mode not in ("scale", "binary"):
            raise DataFormat(f"unknown head_mode {self.head_mode!r}")
        if self.precision not in ("f32", "f64"):
            raise DataFormat(f"unknown precision {self.precision!r}")

    @property
    def num_sides(self) -> int:
        return len(self.taps)

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def head_classes(self, side: int) -> int:
        """Channel count of side output `side` (1-based)."""
        return 2 if self.head_mode == "binary" else side + 1

    @property
    def num_classes(self) -> int:
        """Channel count of the fused stack."""
        return 2 if self.head_mode == "binary" else self.num_sides + 1

    def contributing_sides(self, k: int) -> list[int]:
        """Side outputs whose class set includes class k."""
        return [i for i in range(1, self.num_sides + 1)
                if k < self.head_classes(i)]

    @property
    def total_stride(self) -> int:
        return 2 ** sum(1 for s in self.stages[:-1] if s.pool_after)


def config_from_json(doc) -> NetworkConfig:
    """Parse a NetworkConfig from a JSON document (dict or string)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise DataFormat(f"unknown config keys: {sorted(unknown)}")
    stages = []
    for s in doc["stages"]:
        bad = set(s) - _STAGE_KEYS
        if bad:
            raise DataFormat(f"unknown stage keys: {sorted(bad)}")
        stages.append(StageSpec(
            convs=tuple((int(k), int(c)) for k, c in s["convs"]),
            pool_after=bool(s.get("pool_after", True))))
    kwargs = {k: doc[k] for k in doc if k not in ("stages", "taps")}
    return NetworkConfig(stages=tuple(stages), taps=tuple(doc["taps"]), **kwargs)


def config_to_json(config: NetworkConfig) -> str:
    doc = {
        "in_channels": config.in_channels,
        "stages": [{"convs": [list(c) for c in s.convs],
                    "pool_after": s.pool_after} for s in config.stages],
        "taps": list(config.taps),
        "head_mode": config.head_mode,
        "precision": config.precision,
        "margin": config.margin,
        "fusion_lr_mult": config.fusion_lr_mult,
        "head_lr_mult": config.head_lr_mult,
    }
    return json.dumps(doc, indent=2)


def compute_receptive_fields(config: NetworkConfig) -> ReceptiveFieldSchedule:
    """Receptive field size at each tapped stage end.

    Composition rule per layer: a conv with kernel k grows the field by
    (k-1)*jump; a 2x2 stride-2 pool grows it by jump and doubles the jump.
    """
    r, jump = 1, 1
    fields = []
    for idx, stage in enumerate(config.stages, start=1):
        for k, _ in stage.convs:
            r += (k - 1) * jump
        if idx in config.taps:
            fields.append(r)
        if stage.pool_after:
            r += jump
            jump *= 2
    return ReceptiveFieldSchedule(r=tuple(fields), margin=config.margin)


# Reference backbone: the classic 5-stage 3x3 pattern whose taps at the
# ends of stages 2-5 sit on receptive fields (14, 40, 92, 196).
def reference_config(width: int = 64, head_mode: str = "scale",
                     precision: str = "f32", in_channels: int = 3) -> NetworkConfig:
    w = width
    return NetworkConfig(
        stages=(
            StageSpec(convs=((3, w), (3, w))),
            StageSpec(convs=((3, 2 * w), (3, 2 * w))),
            StageSpec(convs=((3, 4 * w), (3, 4 * w), (3, 4 * w))),
            StageSpec(convs=((3, 8 * w), (3, 8 * w), (3, 8 * w))),
            StageSpec(convs=((3, 8 * w), (3, 8 * w), (3, 8 * w)), pool_after=False),
        ),
        taps=(2, 3, 4, 5),
        in_channels=in_channels, head_mode=head_mode, precision=precision)


def toy_config(head_mode: str = "scale", precision: str = "f32",
               in_channels: int = 1,
               head_lr_mult: float = 1.0) -> NetworkConfig:
    """Desk-scale default: reference layer pattern at 1/8 width, 4 stages,
    taps after stages 2-4 (receptive fields 14, 40, 92), M = 3.

    `head_lr_mult` damps the 1x1 side projections relative to the backbone;
    when training from random initialization the heads otherwise saturate
    against near-frozen trunk features.
    """
    return NetworkConfig(
        stages=(
            StageSpec(convs=((3, 8), (3, 8))),
            StageSpec(convs=((3, 16), (3, 16))),
            StageSpec(convs=((3, 32), (3, 32), (3, 32))),
            StageSpec(convs=((3, 64), (3, 64), (3, 64)), pool_after=False),
        ),
        taps=(2, 3, 4),
        in_channels=in_channels, head_mode=head_mode, precision=precision,
        head_lr_mult=head_lr_mult)


class Model:
    """Parameter container bound to a NetworkConfig."""

    def __init__(self, config: NetworkConfig, params: dict[str, LayerParams]):
        self.config = config
        self.params = params
        self.schedule = compute_receptive_fields(config)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name->array view used by checkpoints and the optimizer."""
        out = {}
        for name, p in self.params.items():
            out[f"{name}.w"] = p.kernels
            if p.biases is not None:
                out[f"{name}.b"] = p.biases
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        dtype = self.config.dtype
        for name, p in self.params.items():
            p.kernels = arrays[f"{name}.w"].astype(dtype).reshape(p.kernels.shape)
            if p.biases is not None:
                p.biases = arrays[f"{name}.b"].astype(dtype).reshape(p.biases.shape)


def init_model(config: NetworkConfig, seed: int = 0) -> Model:
    """Seeded initialization.

    Backbone convs use He-style normal init; side-output 1x1 projections
    start at zero and carry the config's head learning-rate multiplier;
    each fusion vector starts uniform at 1/n (summing to 1).
    """
    rng = np.random.default_rng(seed)
    dtype = config.dtype
    params: dict[str, LayerParams] = {}
    in_ch = config.in_channels
    for si, stage in enumerate(config.stages, start=1):
        for ci, (k, out_ch) in enumerate(stage.convs, start=1):
            fan_in = in_ch * k * k
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                           size=(out_ch, in_ch, k, k)).astype(dtype)
            params[f"stage{si}.conv{ci}"] = LayerParams(
                kernels=w, biases=np.zeros(out_ch, dtype))
            in_ch = out_ch
    tap_channels = {}
    ch = config.in_channels
    for si, stage in enumerate(config.stages, start=1):
        for _, out_ch in stage.convs:
            ch = out_ch
        tap_channels[si] = ch
    for side, tap in enumerate(config.taps, start=1):
        classes = config.head_classes(side)
        params[f"side{side}"] = LayerParams(
            kernels=np.zeros((classes, tap_channels[tap], 1, 1), dtype),
            biases=np.zeros(classes, dtype), lr_mult=config.head_lr_mult)
    for k in range(config.num_classes):
        n = len(config.contributing_sides(k))
        params[f"fuse{k}"] = LayerParams(
            kernels=np.full(n, 1.0 / n, dtype), biases=None,
            lr_mult=config.fusion_lr_mult)
    return Model(config, params)


@dataclass
class ForwardResult:
    """Forward-pass outputs plus the cache backward needs."""

    stage_probs: list[np.ndarray]  # per side: (classes, H, W), softmaxed
    fused_scores: np.ndarray       # (num_classes, H, W), pre-softmax
    fused_probs: np.ndarray        # (num_classes, H, W)
    cache: dict = field(repr=False, default_factory=dict)


def fuse(stage_probs: list[np.ndarray], fusion_weights: dict[int, np.ndarray],
         config: NetworkConfig) -> np.ndarray:
    """Per-class weighted sum of the per-stage probability stacks.

    Class k draws only from the side outputs whose class sets contain k;
    f[k] = sum_i a_k[i] * Pr(side i predicts k).
    """
    h, w = stage_probs[0].shape[1:]
    f = np.zeros((config.num_classes, h, w), stage_probs[0].dtype)
    for k in range(config.num_classes):
        sides = config.contributing_sides(k)
        a = fusion_weights[k]
        if len(a) != len(sides):
            raise ShapeMismatch(f"fusion vector {k} has length {len(a)}, "
                                f"expected {len(sides)}")
        for t, side in enumerate(sides):
            f[k] += a[t] * stage_probs[side - 1][k]
    return f


def forward(model: Model, image: np.ndarray, need_cache: bool = False) -> ForwardResult:
    """Run the full network on one (C, H, W) image.

    The image is zero-padded to a multiple of the total stride; all output
    stacks are cropped back to the original size.
    """
    config = model.config
    dtype = config.dtype
    if image.ndim == 2:
        image = image[None]
    if image.shape[0] != config.in_channels:
        raise ShapeMismatch(f"expected {config.in_channels} input channels, "
                            f"got {image.shape[0]}")
    h, w = image.shape[1:]
    stride = config.total_stride
    ph = (-h) % stride
    pw = (-w) % stride
    x = np.pad(image.astype(dtype), ((0, 0), (0, ph), (0, pw)))[None]

    cache: dict = {"input": x, "orig_size": (h, w), "stages": []}
    tap_features: dict[int, np.ndarray] = {}
    for si, stage in enumerate(config.stages, start=1):
        stage_cache = {"convs": []}
        for ci in range(1, len(stage.convs) + 1):
            p = model.params[f"stage{si}.conv{ci}"]
            pre = nn.conv2d_forward(x, p)
            post = nn.relu_forward(pre)
            stage_cache["convs"].append({"input": x, "pre": pre})
            x = post
        if si in config.taps:
            tap_features[si] = x
        if stage.pool_after and si < len(config.stages):
            pooled, argmax = nn.maxpool2_forward(x)
            stage_cache["pool"] = {"input_shape": x.shape, "argmax": argmax}
            x = pooled
        cache["stages"].append(stage_cache)

    hp, wp = h + ph, w + pw
    stage_probs = []
    cache["sides"] = []
    for side, tap in enumerate(config.taps, start=1):
        p = model.params[f"side{side}"]
        feat = tap_features[tap]
        act_small = nn.conv2d_forward(feat, p)
        act_up = nn.upsample_bilinear_forward(act_small, (hp, wp))
        act = act_up[0, :, :h, :w]
        probs = softmax(act, axis=0)
        cache["sides"].append({"feat": feat, "small_size": act_small.shape[2:],
                               "padded_size": (hp, wp)})
        stage_probs.append(probs)

    fusion_weights = {k: model.params[f"fuse{k}"].kernels
                      for k in range(config.num_classes)}
    f = fuse(stage_probs, fusion_weights, config)
    fused_probs = softmax(f, axis=0)
    result = ForwardResult(stage_probs=stage_probs, fused_scores=f,
                           fused_probs=fused_probs,
                           cache=cache if need_cache else {})
    return result


def backward(model: Model, result: ForwardResult,
             grad_side_acts: list[np.ndarray],
             grad_fused_scores: np.ndarray) -> dict[str, tuple]:
    """Backpropagate loss gradients through fusion, heads and backbone.

    `grad_side_acts[i]` is the gradient w.r.t. side output i+1's full-size
    pre-softmax activations (from its side loss); `grad_fused_scores` is
    the gradient w.r.t. the fused score stack. Returns name -> (grad_w,
    grad_b) with fusion entries as (grad_vector, None).
    """
    config = model.config
    cache = result.cache
    if not cache:
        raise ValueError("forward was run without need_cache=True")
    grads: dict[str, tuple] = {}

    # Fusion: split the fused-score gradient into per-weight and per-stage
    # probability gradients.
    grad_stage_probs = [np.zeros_like(p) for p in result.stage_probs]
    for k in range(config.num_classes):
        sides = config.contributing_sides(k)
        a = model.params[f"fuse{k}"].kernels
        gk = grad_fused_scores[k]
        ga = np.empty_like(a)
        for t, side in enumerate(sides):
            ga[t] = (gk * result.stage_probs[side - 1][k]).sum()
            grad_stage_probs[side - 1][k] += a[t] * gk
        grads[f"fuse{k}"] = (ga, None)

    # Heads: combine the side-loss gradient with the fusion path, undo the
    # softmax, then the upsample and the 1x1 projection.
    grad_taps: dict[int, np.ndarray] = {}
    for side, tap in enumerate(config.taps, start=1):
        side_cache = cache["sides"][side - 1]
        probs = result.stage_probs[side - 1]
        grad_act = grad_side_acts[side - 1] + softmax_vjp(
            probs, grad_stage_probs[side - 1])
        hp, wp = side_cache["padded_size"]
        h, w = cache["orig_size"]
        grad_up = np.zeros((1, grad_act.shape[0], hp, wp), grad_act.dtype)
        grad_up[0, :, :h, :w] = grad_act
        grad_small = nn.upsample_bilinear_backward(grad_up, side_cache["small_size"])
        p = model.params[f"side{side}"]
        gx, gw, gb = nn.conv2d_backward(grad_small, side_cache["feat"], p)
        grads[f"side{side}"] = (gw, gb)
        grad_taps[tap] = grad_taps.get(tap, 0) + gx

    # Backbone, deepest stage first.
    grad_x = None
    for si in range(len(config.stages), 0, -1):
        stage = config.stages[si - 1]
        stage_cache = cache["stages"][si - 1]
        if "pool" in stage_cache:
            pc = stage_cache["pool"]
            grad_x = nn.maxpool2_backward(grad_x, pc["argmax"], pc["input_shape"])
        if si in grad_taps:
            grad_x = grad_taps[si] if grad_x is None else grad_x + grad_taps[si]
        if grad_x is None:
            break  # no tap at or above this stage, nothing to propagate
        for ci in range(len(stage.convs), 0, -1):
            conv_cache = stage_cache["convs"][ci - 1]
            p = model.params[f"stage{si}.conv{ci}"]
            grad_pre = nn.relu_backward(grad_x, conv_cache["pre"])
            grad_x, gw, gb = nn.conv2d_backward(grad_pre, conv_cache["input"], p)
            grads[f"stage{si}.conv{ci}"] = (gw, gb)
    return grads
