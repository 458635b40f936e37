import numpy as np

from lapmo.motion import MotionSequence, Skeleton


def random_skeleton(rng: np.random.Generator, J: int) -> Skeleton:
    """Random tree: each joint's parent is any earlier joint."""
    parents = [None] + [int(rng.integers(0, j)) for j in range(1, J)]
    return Skeleton(parents=tuple(parents))


def random_sequence(rng, T: int, J: int, scale: float = 100.0, skeleton=None) -> MotionSequence:
    skeleton = skeleton or random_skeleton(rng, J)
    return MotionSequence(skeleton, 50.0, rng.normal(0.0, scale, (T, J, 3)))


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


# filled by test_acceptance, printed by the terminal summary hook in conftest
ACCEPTANCE_LINES: list[str] = []
