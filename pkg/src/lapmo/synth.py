"""Synthetic sinusoidal motions via forward kinematics, and 2D projection.

Two angle parameterisations are available; in both, every angle is a
constant offset plus a sum of sinusoids and bones keep their rest length
because positions come from rotating fixed offsets.

``world`` (default): each non-root bone has an azimuth that turns it inside
the image (x, y) plane and an elevation that tilts it toward +z. Elevation
stays inside (0, pi/2), so bone depth is recoverable from the projected
length and an orthographic 2D-to-3D lift is well posed.

``local``: each joint carries three Euler angles relative to its parent
(``Rz @ Ry @ Rx``), composed down the chain. Orthographic depth is then
ambiguous in sign.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .motion import MotionSequence, MotionSequence2D, Skeleton, load_motion, save_motion

__all__ = [
    "SkeletonPreset",
    "chain_preset",
    "h36m_preset",
    "SynthConfig",
    "generate",
    "generate_one",
    "Projection",
    "project_2d",
    "split_indices",
    "write_corpus",
    "load_corpus",
]


@dataclass(frozen=True)
class SkeletonPreset:
    """Topology plus rest offsets (mm) of each joint from its parent."""

    name: str
    parents: tuple[int | None, ...]
    offsets: tuple[tuple[float, float, float], ...]
    joint_names: tuple[str, ...] | None = None

    def skeleton(self) -> Skeleton:
        return Skeleton(parents=self.parents, root_index=self.parents.index(None), joint_names=self.joint_names)

    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.asarray(self.offsets, dtype=np.float64), axis=1)


def chain_preset(n_joints: int = 5, bone_length: float = 100.0) -> SkeletonPreset:
    offsets = ((0.0, 0.0, 0.0),) + ((0.0, bone_length, 0.0),) * (n_joints - 1)
    return SkeletonPreset(
        name=f"chain{n_joints}",
        parents=(None,) + tuple(range(n_joints - 1)),
        offsets=offsets,
        joint_names=tuple(f"j{k}" for k in range(n_joints)),
    )


def h36m_preset() -> SkeletonPreset:
    """17-joint humanoid in the common Human3.6M joint order (y up, mm)."""
    names = (
        "hip", "rhip", "rknee", "rfoot", "lhip", "lknee", "lfoot", "spine",
        "thorax", "neck", "head", "lshoulder", "lelbow", "lwrist",
        "rshoulder", "relbow", "rwrist",
    )
    parents = (None, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
    offsets = (
        (0.0, 0.0, 0.0),
        (-130.0, 0.0, 0.0), (0.0, -450.0, 0.0), (0.0, -440.0, 0.0),
        (130.0, 0.0, 0.0), (0.0, -450.0, 0.0), (0.0, -440.0, 0.0),
        (0.0, 230.0, 0.0), (0.0, 250.0, 0.0), (0.0, 110.0, 0.0), (0.0, 120.0, 0.0),
        (150.0, -20.0, 0.0), (280.0, 0.0, 0.0), (250.0, 0.0, 0.0),
        (-150.0, -20.0, 0.0), (-280.0, 0.0, 0.0), (-250.0, 0.0, 0.0),
    )
    return SkeletonPreset("h36m17", parents, offsets, names)


_PRESETS = {"chain5": chain_preset, "h36m17": h36m_preset}


@dataclass(frozen=True)
class SynthConfig:
    preset: str = "chain5"
    T: int = 64
    fps: float = 50.0
    harmonics: int = 3
    freq_range: tuple[float, float] = (0.25, 2.0)
    amp_range: tuple[float, float] = (0.05, 0.15)
    azimuth_range: float = 0.8
    elevation_range: tuple[float, float] = (0.5, 1.05)
    root_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angle_frame: str = "world"
    seed: int = 0
    noise_std_2d: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "freq_range", tuple(float(f) for f in self.freq_range))
        object.__setattr__(self, "amp_range", tuple(float(a) for a in self.amp_range))
        object.__setattr__(self, "elevation_range", tuple(float(a) for a in self.elevation_range))
        object.__setattr__(self, "root_position", tuple(float(c) for c in self.root_position))
        if self.preset not in _PRESETS:
            raise ValueError(f"unknown skeleton preset {self.preset!r}; choose from {sorted(_PRESETS)}")
        if self.T < 1 or self.fps <= 0 or self.harmonics < 0:
            raise ValueError("T >= 1, fps > 0 and harmonics >= 0 required")
        lo, hi = self.freq_range
        if not 0 <= lo <= hi < self.fps / 2:
            raise ValueError(f"frequencies must lie in [0, fps/2) = [0, {self.fps / 2}), got {self.freq_range}")
        alo, ahi = self.amp_range
        if not 0 <= alo <= ahi:
            raise ValueError(f"bad amplitude range {self.amp_range}")
        if self.angle_frame not in ("world", "local"):
            raise ValueError(f"angle_frame must be 'world' or 'local', got {self.angle_frame!r}")
        swing = self.harmonics * ahi
        if self.angle_frame == "local":
            # every relative angle stays inside (-pi/2, pi/2)
            if self.azimuth_range + swing >= np.pi / 2:
                raise ValueError("azimuth_range + harmonics * max amplitude must stay below pi/2")
            if self.noise_std_2d < 0:
                raise ValueError("noise_std_2d must be nonnegative")
            return
        elo, ehi = self.elevation_range
        # elevation must stay strictly inside (0, pi/2) for a unique depth sign
        if not (elo - swing > 0 and ehi + swing < np.pi / 2):
            raise ValueError("elevation_range widened by harmonics * max amplitude must stay inside (0, pi/2)")
        if self.azimuth_range + swing >= np.pi / 2:
            raise ValueError("azimuth_range + harmonics * max amplitude must stay below pi/2")
        if self.noise_std_2d < 0:
            raise ValueError("noise_std_2d must be nonnegative")

    def skeleton_preset(self) -> SkeletonPreset:
        return _PRESETS[self.preset]()

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("freq_range", "amp_range", "elevation_range", "root_position"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _rodrigues(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """``(T,)`` angles about the fixed unit ``axis`` -> ``(T, 3, 3)`` rotations."""
    K = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    s, c = np.sin(angle)[:, None, None], np.cos(angle)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def _tilt_axis(rest: np.ndarray) -> np.ndarray:
    """In-plane axis perpendicular to ``rest``; positive rotation tilts it toward +z."""
    d = rest[:2]
    n = np.linalg.norm(d)
    if n == 0:
        return np.array([1.0, 0.0, 0.0])
    return np.array([d[1], -d[0], 0.0]) / n


def _topological_order(parents) -> list[int]:
    depth = []
    for j in range(len(parents)):
        d, k = 0, j
        while parents[k] is not None:
            k, d = parents[k], d + 1
        depth.append(d)
    return sorted(range(len(parents)), key=lambda j: (depth[j], j))


def joint_angles(config: SynthConfig, index: int, J: int) -> np.ndarray:
    """``(T, J, 2)`` (azimuth, elevation) angles for sequence ``index``; root stays 0."""
    rng = np.random.default_rng([config.seed, index])
    t = np.arange(config.T) / config.fps
    H = config.harmonics
    base = np.stack(
        [
            rng.uniform(-config.azimuth_range, config.azimuth_range, J),
            rng.uniform(*config.elevation_range, J),
        ],
        axis=-1,
    )
    amp = rng.uniform(*config.amp_range, (J, 2, H))
    freq = rng.uniform(*config.freq_range, (J, 2, H))
    phase = rng.uniform(0.0, 2 * np.pi, (J, 2, H))
    theta = base[None] + np.sum(
        amp[None] * np.sin(2 * np.pi * freq[None] * t[:, None, None, None] + phase[None]), axis=-1
    )
    theta[:, 0] = 0.0
    return theta


def local_angles(config: SynthConfig, index: int, J: int) -> np.ndarray:
    """``(T, J, 3)`` Euler angles relative to the parent; root stays 0.

    Offsets are drawn in ``[-azimuth_range, azimuth_range]`` for all three axes.
    """
    rng = np.random.default_rng([config.seed, index])
    t = np.arange(config.T) / config.fps
    H = config.harmonics
    base = rng.uniform(-config.azimuth_range, config.azimuth_range, (J, 3))
    amp = rng.uniform(*config.amp_range, (J, 3, H))
    freq = rng.uniform(*config.freq_range, (J, 3, H))
    phase = rng.uniform(0.0, 2 * np.pi, (J, 3, H))
    theta = base[None] + np.sum(
        amp[None] * np.sin(2 * np.pi * freq[None] * t[:, None, None, None] + phase[None]), axis=-1
    )
    theta[:, 0] = 0.0
    return theta


def _euler_xyz(angles: np.ndarray) -> np.ndarray:
    """``(T, 3)`` angles -> ``(T, 3, 3)`` matrices ``Rz @ Ry @ Rx``."""
    ex, ey, ez = (np.eye(3)[k] for k in range(3))
    return _rodrigues(ez, angles[:, 2]) @ _rodrigues(ey, angles[:, 1]) @ _rodrigues(ex, angles[:, 0])


def local_forward_kinematics(preset: SkeletonPreset, theta: np.ndarray, root_position) -> np.ndarray:
    T, J = theta.shape[:2]
    offsets = np.asarray(preset.offsets, dtype=np.float64)
    pos = np.zeros((T, J, 3))
    glob = np.zeros((T, J, 3, 3))
    for j in _topological_order(preset.parents):
        R = _euler_xyz(theta[:, j])
        p = preset.parents[j]
        if p is None:
            glob[:, j] = R
            pos[:, j] = np.asarray(root_position)
        else:
            glob[:, j] = glob[:, p] @ R
            pos[:, j] = pos[:, p] + glob[:, j] @ offsets[j]
    return pos


def forward_kinematics(preset: SkeletonPreset, theta: np.ndarray, root_position) -> np.ndarray:
    """Positions ``(T, J, 3)``: each bone's rest offset is tilted out of the image
    plane by its elevation, then turned about z by its azimuth."""
    T, J = theta.shape[:2]
    offsets = np.asarray(preset.offsets, dtype=np.float64)
    z_axis = np.array([0.0, 0.0, 1.0])
    pos = np.zeros((T, J, 3))
    for j in _topological_order(preset.parents):
        p = preset.parents[j]
        if p is None:
            pos[:, j] = np.asarray(root_position)
            continue
        tilted = _rodrigues(_tilt_axis(offsets[j]), theta[:, j, 1]) @ offsets[j]
        bone = np.einsum("tab,tb->ta", _rodrigues(z_axis, theta[:, j, 0]), tilted)
        pos[:, j] = pos[:, p] + bone
    return pos


def generate_one(config: SynthConfig, index: int) -> MotionSequence:
    preset = config.skeleton_preset()
    J = len(preset.parents)
    if config.angle_frame == "local":
        pos = local_forward_kinematics(preset, local_angles(config, index, J), config.root_position)
    else:
        pos = forward_kinematics(preset, joint_angles(config, index, J), config.root_position)
    return MotionSequence(preset.skeleton(), config.fps, pos, action="synth")


def generate(config: SynthConfig, count: int) -> list[MotionSequence]:
    """``count`` sequences; sequence ``i`` depends only on ``(config, i)``."""
    return [generate_one(config, i) for i in range(count)]


class Projection(str, enum.Enum):
    ORTHO_XY = "ortho"
    PERSP = "persp"


def project_2d(
    seq: MotionSequence,
    mode=Projection.ORTHO_XY,
    focal: float = 1000.0,
    noise_std: float = 0.0,
    seed: int = 0,
    min_depth: float = 1e-6,
) -> MotionSequence2D:
    """Orthographic (drop z) or pinhole ``f * (x / z, y / z)`` projection, plus
    optional Gaussian noise with std ``noise_std``."""
    mode = Projection(mode)
    P = seq.positions
    if mode is Projection.ORTHO_XY:
        uv = P[..., :2].copy()
    else:
        z = P[..., 2]
        if np.any(z <= min_depth):
            raise ValueError(f"nonpositive depth under perspective projection (min z = {z.min()})")
        uv = focal * P[..., :2] / z[..., None]
    if noise_std > 0:
        uv = uv + np.random.default_rng(seed).normal(0.0, noise_std, uv.shape)
    return MotionSequence2D(seq.skeleton, seq.fps, uv)


def split_indices(count: int, test_fraction: float = 0.2, seed: int = 0) -> tuple[list[int], list[int]]:
    """Disjoint sorted train/test index lists from a seeded permutation."""
    n_test = int(round(count * test_fraction))
    perm = np.random.default_rng([seed, 0x5EED]).permutation(count)
    test = sorted(int(i) for i in perm[:n_test])
    train = sorted(int(i) for i in perm[n_test:])
    return train, test


def write_corpus(
    config: SynthConfig, count: int, out_dir: str | Path, test_fraction: float = 0.2
) -> dict:
    """Write ``seq_XXXXX.json`` files and ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, seq in enumerate(generate(config, count)):
        name = f"seq_{i:05d}.json"
        save_motion(seq, out / name)
        names.append(name)
    train, test = split_indices(count, test_fraction, config.seed)
    manifest = {
        "seed": config.seed,
        "config_hash": config.digest(),
        "config": config.to_dict(),
        "count": count,
        "test_fraction": test_fraction,
        "split": {"train": [names[i] for i in train], "test": [names[i] for i in test]},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


@dataclass
class Corpus:
    train: list[MotionSequence]
    test: list[MotionSequence]
    manifest: dict = field(default_factory=dict)


def load_corpus(corpus_dir: str | Path) -> Corpus:
    root = Path(corpus_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    split = manifest["split"]
    if set(split["train"]) & set(split["test"]):
        raise ValueError(f"{root}: train and test splits overlap")
    train = [load_motion(root / n) for n in split["train"]]
    test = [load_motion(root / n) for n in split["test"]]
    return Corpus(train, test, manifest)


def make_corpus(config: SynthConfig, count: int, test_fraction: float = 0.2) -> Corpus:
    seqs = generate(config, count)
    train, test = split_indices(count, test_fraction, config.seed)
    return Corpus(
        [seqs[i] for i in train],
        [seqs[i] for i in test],
        {"seed": config.seed, "config_hash": config.digest(), "count": count},
    )
