"""Finite-difference checks of the analytic loss gradients on random instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laplacian import LaplacianVariant, motion_laplacian
from .losses import LossConfig, LossMode, combined_loss, laplacian_loss, motion_loss, position_loss
from .motion import Skeleton

__all__ = ["LOSSES", "GradcheckResult", "central_difference", "relative_error", "random_instance", "gradcheck"]

LOSSES = ("pos", "lap", "motion", "combined")


@dataclass
class GradcheckResult:
    loss: str
    trials: int
    max_rel_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.threshold


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the larger of the two max magnitudes."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def random_instance(rng: np.random.Generator, max_T: int = 8, max_J: int = 4):
    T = int(rng.integers(3, max_T + 1))
    J = int(rng.integers(2, max_J + 1))
    parents = (None,) + tuple(int(rng.integers(0, j)) for j in range(1, J))
    gt = rng.normal(0.0, 100.0, (T, J, 3))
    est = gt + rng.normal(0.0, 30.0, (T, J, 3))
    return Skeleton(parents), est, gt


def _loss_fn(name: str, rng, skeleton, T):
    variant = list(LaplacianVariant)[int(rng.integers(0, 2))]
    if name == "pos":
        return lambda e, g: position_loss(e, g)
    if name == "lap":
        L = motion_laplacian(skeleton, T, variant)
        return lambda e, g: laplacian_loss(e, g, L)
    if name == "motion":
        return lambda e, g: motion_loss(e, g)
    if name == "combined":
        mode = list(LossMode)[int(rng.integers(0, 3))]
        cfg = LossConfig(
            alpha=float(rng.uniform(0.1, 2.0)),
            lam=float(rng.uniform(0.1, 2.0)),
            laplacian_variant=variant,
            root_relative=bool(rng.integers(0, 2)),
        )
        return lambda e, g: combined_loss(e, g, cfg, mode, skeleton=skeleton)
    raise ValueError(f"unknown loss {name!r}; choose from {LOSSES}")


def gradcheck(loss: str, trials: int = 100, seed: int = 0, h: float = 1e-5, threshold: float = 1e-4) -> GradcheckResult:
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        sk, est, gt = random_instance(rng)
        f = _loss_fn(loss, rng, sk, est.shape[0])
        numeric = central_difference(lambda x: f(x, gt).value, est.copy(), h)
        worst = max(worst, relative_error(f(est, gt).grad, numeric))
    return GradcheckResult(loss, trials, worst, threshold)
