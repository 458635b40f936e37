"""Training losses with analytic gradients w.r.t. the estimated positions.

Every loss takes ``(T, J, 3)`` arrays or :class:`MotionSequence` objects and
returns a :class:`LossValue`. Rows with a zero residual contribute a zero
subgradient.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .laplacian import LaplacianVariant, SparseLaplacian, motion_laplacian
from .motion import MotionSequence, Skeleton

__all__ = [
    "LossValue",
    "LossMode",
    "LossConfig",
    "position_loss",
    "laplacian_loss",
    "motion_loss",
    "combined_loss",
]


@dataclass(frozen=True, eq=False)
class LossValue:
    value: float
    grad: np.ndarray

    def __add__(self, other: "LossValue") -> "LossValue":
        return LossValue(self.value + other.value, self.grad + other.grad)

    def scaled(self, k: float) -> "LossValue":
        return LossValue(k * self.value, k * self.grad)


class LossMode(str, enum.Enum):
    P_ONLY = "p"
    P_PLUS_M = "pm"
    P_PLUS_LAP = "plap"

    @classmethod
    def parse(cls, value) -> "LossMode":
        if isinstance(value, cls):
            return value
        key = str(value)
        for m in cls:
            if key in (m.value, m.name):
                return m
        raise ValueError(f"unknown loss mode {value!r} (use p, pm or plap)")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    lam: float = 1.0
    motion_scales: tuple[int, ...] = (1, 2, 4, 8)
    laplacian_variant: LaplacianVariant = LaplacianVariant.COMBINATORIAL
    root_relative: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("loss coefficients must be nonnegative")
        scales = tuple(sorted(int(s) for s in self.motion_scales))
        if not scales or scales[0] < 1:
            raise ValueError("motion scales must be positive integers")
        object.__setattr__(self, "motion_scales", scales)
        object.__setattr__(self, "laplacian_variant", LaplacianVariant.parse(self.laplacian_variant))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "lambda": self.lam,
            "motion_scales": list(self.motion_scales),
            "laplacian_variant": self.laplacian_variant.value,
            "root_relative": self.root_relative,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(
            alpha=d.get("alpha", 1.0),
            lam=d.get("lambda", d.get("lam", 1.0)),
            motion_scales=tuple(d.get("motion_scales", (1, 2, 4, 8))),
            laplacian_variant=d.get("laplacian_variant", "comb"),
            root_relative=d.get("root_relative", False),
        )


def _arrays(est, gt) -> tuple[np.ndarray, np.ndarray]:
    e = est.positions if isinstance(est, MotionSequence) else np.asarray(est, dtype=np.float64)
    g = gt.positions if isinstance(gt, MotionSequence) else np.asarray(gt, dtype=np.float64)
    if e.shape != g.shape:
        raise ValueError(f"shape mismatch: estimate {e.shape} vs ground truth {g.shape}")
    if e.ndim != 3 or e.shape[2] != 3:
        raise ValueError(f"expected (T, J, 3) positions, got {e.shape}")
    return e, g


def _norms_and_units(residual: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row norms over the last axis and unit rows (0 where the norm is 0)."""
    n = np.sqrt(np.sum(residual * residual, axis=-1))
    safe = np.where(n > 0, n, 1.0)
    u = np.where(n[..., None] > 0, residual / safe[..., None], 0.0)
    return n, u


def position_loss(est, gt) -> LossValue:
    """Mean per-joint Euclidean distance."""
    e, g = _arrays(est, gt)
    T, J, _ = e.shape
    n, u = _norms_and_units(e - g)
    return LossValue(float(n.mean()), u / (T * J))


def laplacian_loss(est, gt, L: SparseLaplacian) -> LossValue:
    """Mean row distance between differential coordinates of ``gt`` and ``est``."""
    e, g = _arrays(est, gt)
    N = e.shape[0] * e.shape[1]
    if L.N != N:
        raise ValueError(f"shape mismatch: Laplacian N={L.N}, sequence has T*J={N}")
    R = L @ (g - e).reshape(N, 3)
    n, U = _norms_and_units(R)
    grad = -L.rmatmul_T(U) / N
    return LossValue(float(n.mean()), grad.reshape(e.shape))


def motion_loss(est, gt, scales=(1, 2, 4, 8)) -> LossValue:
    """Multi-scale subtraction-encoding loss.

    Encodes ``m_s[t] = P[t + s] - P[t]`` for each scale ``s < T`` and averages,
    with equal weight per scale, the mean distance between encodings.
    """
    e, g = _arrays(est, gt)
    T, J, _ = e.shape
    usable = [s for s in sorted(scales) if s < T]
    if not usable:
        raise ValueError(f"no usable motion scale: all of {list(scales)} >= T={T}")
    value = 0.0
    grad = np.zeros_like(e)
    k = 1.0 / len(usable)
    for s in usable:
        r = (e[s:] - e[:-s]) - (g[s:] - g[:-s])
        n, u = _norms_and_units(r)
        w = k / ((T - s) * J)
        value += k * float(n.mean())
        grad[s:] += w * u
        grad[:-s] -= w * u
    return LossValue(value, grad)


def _root_relative(P: np.ndarray, root: int) -> np.ndarray:
    return P - P[:, root : root + 1, :]


def _root_relative_grad(grad: np.ndarray, root: int) -> np.ndarray:
    out = grad.copy()
    out[:, root, :] -= grad.sum(axis=1)
    return out


def combined_loss(
    est,
    gt,
    config: LossConfig | None = None,
    mode=LossMode.P_ONLY,
    L: SparseLaplacian | None = None,
    skeleton: Skeleton | None = None,
) -> LossValue:
    """``L_P``, ``L_P + lam * L_M`` or ``L_P + alpha * L_lap`` depending on ``mode``.

    For ``P_PLUS_LAP`` either pass ``L`` or a skeleton (taken from ``est``/``gt``
    when they are :class:`MotionSequence` objects).
    """
    config = config or LossConfig()
    mode = LossMode.parse(mode)
    if skeleton is None:
        for s in (est, gt):
            if isinstance(s, MotionSequence):
                skeleton = s.skeleton
                break
    e, g = _arrays(est, gt)

    root = None
    if config.root_relative:
        if skeleton is None:
            raise ValueError("root_relative losses need a skeleton")
        root = skeleton.root_index
        e, g = _root_relative(e, root), _root_relative(g, root)

    total = position_loss(e, g)
    if mode is LossMode.P_PLUS_M:
        total = total + motion_loss(e, g, config.motion_scales).scaled(config.lam)
    elif mode is LossMode.P_PLUS_LAP:
        if L is None:
            if skeleton is None:
                raise ValueError("P_PLUS_LAP needs a Laplacian or a skeleton")
            L = motion_laplacian(skeleton, e.shape[0], config.laplacian_variant)
        total = total + laplacian_loss(e, g, L).scaled(config.alpha)

    if root is not None:
        total = LossValue(total.value, _root_relative_grad(total.grad, root))
    return total
