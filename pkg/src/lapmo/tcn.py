"""Sequence-to-sequence dilated temporal convolution network in numpy.

Maps a ``(T, J, 2)`` 2D joint sequence to a ``(T, J, 3)`` 3D sequence with the
same number of frames. Every layer is a 1D convolution over time with
symmetric edge-replication padding, so the output length always equals the
input length. Tensors inside the network are laid out ``(batch, channels, T)``;
joint ``j`` coordinate ``c`` lives in channel ``j * dims + c``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import LossConfig, LossMode, combined_loss
from .motion import MotionSequence, MotionSequence2D, Skeleton

__all__ = [
    "ConvLayerSpec",
    "NetworkSpec",
    "NetworkState",
    "ForwardCache",
    "StaleCacheError",
    "TrainingDiverged",
    "AdamConfig",
    "forward",
    "forward_array",
    "backward",
    "train_step",
    "batch_gradients",
    "save_checkpoint",
    "load_checkpoint",
]


class StaleCacheError(RuntimeError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_size: int = 3
    dilation: int = 1
    has_activation: bool = True
    residual: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.residual and self.in_channels != self.out_channels:
            raise ValueError("residual layers need equal in/out width")

    @property
    def pad(self) -> int:
        return self.dilation * (self.kernel_size - 1) // 2


@dataclass(frozen=True)
class NetworkSpec:
    """Layer stack plus ``unit``: millimetres per network unit on both ends."""

    layers: tuple[ConvLayerSpec, ...]
    unit: float = 100.0

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(f"layer width mismatch: {a.out_channels} -> {b.in_channels}")
        if layers[0].in_channels % 2 or layers[-1].out_channels % 3:
            raise ValueError("first layer takes 2J channels, last layer emits 3J channels")
        if layers[0].in_channels // 2 != layers[-1].out_channels // 3:
            raise ValueError("input and output joint counts differ")
        if layers[-1].has_activation:
            raise ValueError("last layer must be linear")
        if not self.unit > 0:
            raise ValueError("unit must be positive")

    @property
    def n_joints(self) -> int:
        return self.layers[0].in_channels // 2

    @property
    def receptive_field(self) -> int:
        return 1 + 2 * sum(l.pad for l in self.layers)

    @classmethod
    def default(
        cls,
        n_joints: int,
        hidden: int = 32,
        kernel_size: int = 3,
        dilations: tuple[int, ...] = (1, 2, 4, 1),
        residual: bool = True,
        unit: float = 100.0,
    ) -> "NetworkSpec":
        widths = [2 * n_joints] + [hidden] * (len(dilations) - 1) + [3 * n_joints]
        layers = []
        for i, d in enumerate(dilations):
            last = i == len(dilations) - 1
            cin, cout = widths[i], widths[i + 1]
            layers.append(
                ConvLayerSpec(
                    cin,
                    cout,
                    kernel_size,
                    d,
                    has_activation=not last,
                    residual=residual and not last and cin == cout,
                )
            )
        return cls(tuple(layers), unit)

    def to_dict(self) -> dict:
        return {
            "unit": self.unit,
            "layers": [
                {
                    "in_channels": l.in_channels,
                    "out_channels": l.out_channels,
                    "kernel_size": l.kernel_size,
                    "dilation": l.dilation,
                    "has_activation": l.has_activation,
                    "residual": l.residual,
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(ConvLayerSpec(**l) for l in d["layers"]), d.get("unit", 100.0))


@dataclass
class NetworkState:
    """Parameters, Adam moments and step counter.

    ``version`` changes whenever parameters change; caches from an older
    version are rejected by :func:`backward`.
    """

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    version: int = 0

    @classmethod
    def init(cls, spec: NetworkSpec, seed: int = 0) -> "NetworkState":
        """Uniform init in +-1/sqrt(fan_in) for weights and biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for l in spec.layers:
            bound = 1.0 / np.sqrt(l.in_channels * l.kernel_size)
            weights.append(rng.uniform(-bound, bound, (l.out_channels, l.in_channels, l.kernel_size)))
            biases.append(rng.uniform(-bound, bound, l.out_channels))
        state = cls(spec, weights, biases, seed=seed)
        state.m = [np.zeros_like(p) for p in state.params()]
        state.v = [np.zeros_like(p) for p in state.params()]
        return state

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "NetworkState":
        state = cls.init(spec)
        for p in state.params():
            p[...] = 0.0
        return state

    def params(self) -> list[np.ndarray]:
        """Parameters in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "NetworkState":
        return NetworkState(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            self.step,
            [a.copy() for a in self.m],
            [a.copy() for a in self.v],
            self.version,
        )

    def touch(self) -> None:
        self.version += 1


@dataclass
class ForwardCache:
    version: int
    inputs: list[np.ndarray]
    cols: list[np.ndarray]
    pre: list[np.ndarray]
    T: int


def _im2col(x: np.ndarray, layer: ConvLayerSpec) -> np.ndarray:
    """``(B, C, T)`` -> ``(B, C * K, T)`` tap matrix with edge padding."""
    T = x.shape[2]
    p, d, K = layer.pad, layer.dilation, layer.kernel_size
    xp = np.pad(x, ((0, 0), (0, 0), (p, p)), mode="edge") if p else x
    taps = np.stack([xp[:, :, k * d : k * d + T] for k in range(K)], axis=2)
    return taps.reshape(x.shape[0], -1, T)


def _col2im(dcols: np.ndarray, layer: ConvLayerSpec, T: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`, folding padded taps back onto the edge frames."""
    B = dcols.shape[0]
    p, d, K = layer.pad, layer.dilation, layer.kernel_size
    dcols = dcols.reshape(B, -1, K, T)
    dxp = np.zeros((B, dcols.shape[1], T + 2 * p))
    for k in range(K):
        dxp[:, :, k * d : k * d + T] += dcols[:, :, k]
    dx = dxp[:, :, p : p + T].copy()
    if p:
        dx[:, :, 0] += dxp[:, :, :p].sum(axis=2)
        dx[:, :, T - 1] += dxp[:, :, p + T :].sum(axis=2)
    return dx


def forward_array(state: NetworkState, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on ``(B, 2J, T)`` millimetre inputs; returns ``(B, 3J, T)`` mm."""
    spec = state.spec
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != spec.layers[0].in_channels:
        raise ValueError(
            f"channel mismatch: network expects {spec.layers[0].in_channels} input channels, got shape {x.shape}"
        )
    h = x / spec.unit
    cache = ForwardCache(state.version, [], [], [], x.shape[2])
    for l, W, b in zip(spec.layers, state.weights, state.biases):
        cols = _im2col(h, l)
        z = W.reshape(l.out_channels, -1) @ cols + b[None, :, None]
        cache.inputs.append(h)
        cache.cols.append(cols)
        cache.pre.append(z)
        y = np.maximum(z, 0.0) if l.has_activation else z
        h = h + y if l.residual else y
    return h * spec.unit, cache


def backward(
    state: NetworkState, cache: ForwardCache, grad_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse pass. ``grad_out`` is dLoss/dOutput in the layout of
    :func:`forward_array`. Returns parameter gradients (``params()`` order) and
    dLoss/dInput."""
    if cache.version != state.version:
        raise StaleCacheError("forward cache predates the current parameters; rerun forward")
    spec = state.spec
    g = np.asarray(grad_out, dtype=np.float64) * spec.unit
    grads: list[np.ndarray] = [None] * (2 * len(spec.layers))
    for i in reversed(range(len(spec.layers))):
        l, W = spec.layers[i], state.weights[i]
        gz = g * (cache.pre[i] > 0) if l.has_activation else g
        grads[2 * i] = np.einsum("bot,bct->oc", gz, cache.cols[i]).reshape(W.shape)
        grads[2 * i + 1] = gz.sum(axis=(0, 2))
        dcols = W.reshape(l.out_channels, -1).T @ gz
        dh = _col2im(dcols, l, cache.T)
        g = g + dh if l.residual else dh
    return grads, g / spec.unit


def _to_channels(pos2d: np.ndarray) -> np.ndarray:
    """``(..., T, J, 2)`` -> ``(..., 2J, T)``."""
    T, J, c = pos2d.shape[-3:]
    return np.swapaxes(pos2d.reshape(*pos2d.shape[:-3], T, J * c), -1, -2)


def _from_channels(y: np.ndarray, dims: int = 3) -> np.ndarray:
    """``(..., dims*J, T)`` -> ``(..., T, J, dims)``."""
    C, T = y.shape[-2:]
    return np.swapaxes(y, -1, -2).reshape(*y.shape[:-2], T, C // dims, dims)


def forward(state: NetworkState, seq: MotionSequence2D) -> MotionSequence:
    if seq.J * 2 != state.spec.layers[0].in_channels:
        raise ValueError(
            f"channel mismatch: input has {seq.J} joints, network expects {state.spec.n_joints}"
        )
    y, _ = forward_array(state, _to_channels(seq.positions2d)[None])
    return MotionSequence(seq.skeleton, seq.fps, _from_channels(y[0]))


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_update(state: NetworkState, grads: list[np.ndarray], opt: AdamConfig) -> None:
    state.step += 1
    t = state.step
    bc1 = 1.0 - opt.beta1**t
    bc2 = 1.0 - opt.beta2**t
    for p, g, m, v in zip(state.params(), grads, state.m, state.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p -= opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
    state.touch()


def batch_gradients(
    state: NetworkState,
    batch: list[tuple[MotionSequence2D, MotionSequence]],
    mode=LossMode.P_ONLY,
    loss_config: LossConfig | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mean loss over the batch and its parameter gradients."""
    if not batch:
        raise ValueError("empty batch")
    lengths = {x.T for x, _ in batch} | {y.T for _, y in batch}
    if len(lengths) != 1:
        raise ValueError(f"batch needs a uniform sequence length, got {sorted(lengths)}")
    loss_config = loss_config or LossConfig()
    X = np.stack([_to_channels(x.positions2d) for x, _ in batch])
    Y, cache = forward_array(state, X)
    est = _from_channels(Y)
    B = len(batch)
    total = 0.0
    dest = np.empty_like(est)
    # fixed sample order keeps the reduction deterministic
    for k, (_, gt) in enumerate(batch):
        lv = combined_loss(est[k], gt.positions, loss_config, mode, skeleton=gt.skeleton)
        total += lv.value
        dest[k] = lv.grad / B
    loss = total / B
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss} at step {state.step}")
    grads, _ = backward(state, cache, _to_channels(dest))
    return loss, grads


def train_step(
    state: NetworkState,
    batch: list[tuple[MotionSequence2D, MotionSequence]],
    mode=LossMode.P_ONLY,
    loss_config: LossConfig | None = None,
    opt: AdamConfig | None = None,
) -> tuple[NetworkState, float]:
    """One Adam step on ``state`` (updated in place). Returns the pre-step mean loss."""
    loss, grads = batch_gradients(state, batch, mode, loss_config)
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingDiverged(f"non-finite gradient at step {state.step}")
    adam_update(state, grads, opt or AdamConfig())
    return state, loss


# Checkpoint layout: b"LAPMOCK1", uint32 LE header length, UTF-8 JSON header,
# then float32 LE parameters: for each layer in order, weights (out, in, k)
# row-major followed by bias (out,).
_MAGIC = b"LAPMOCK1"


def save_checkpoint(state: NetworkState, path: str | Path) -> None:
    header = json.dumps(
        {"spec": state.spec.to_dict(), "step": state.step, "seed": state.seed},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    blob = b"".join(np.asarray(p, dtype="<f4").tobytes(order="C") for p in state.params())
    Path(path).write_bytes(_MAGIC + struct.pack("<I", len(header)) + header + blob)


def load_checkpoint(path: str | Path) -> NetworkState:
    """Restore parameters (as float64) with fresh optimizer moments."""
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + n].decode("utf-8"))
    spec = NetworkSpec.from_dict(header["spec"])
    state = NetworkState.init(spec, header.get("seed", 0))
    flat = np.frombuffer(raw[12 + n :], dtype="<f4")
    expected = sum(p.size for p in state.params())
    if flat.size != expected:
        raise ValueError(f"{path}: expected {expected} parameters, found {flat.size}")
    off = 0
    for p in state.params():
        p[...] = flat[off : off + p.size].reshape(p.shape)
        off += p.size
    state.step = header.get("step", 0)
    return state


def spec_for(skeleton: Skeleton, **kwargs) -> NetworkSpec:
    return NetworkSpec.default(skeleton.joint_count, **kwargs)
