"""Motion data types, skeleton topology and Motion-JSON I/O.

Positions are millimetres, indexed ``positions[t, j, xyz]``. Joint order in
files is authoritative: array index ``j`` is the position of the joint in
``parents`` / ``joint_names``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "MotionFormatError",
    "Skeleton",
    "MotionSequence",
    "MotionSequence2D",
    "load_motion",
    "save_motion",
    "root_align",
]


class MotionFormatError(ValueError):
    """Invalid motion content. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree. ``parents[j]`` is the parent index, ``None`` for the root."""

    parents: tuple[int | None, ...]
    root_index: int = 0
    joint_names: tuple[str, ...] | None = None

    def __post_init__(self):
        parents = tuple(None if p is None else int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        if self.joint_names is not None:
            object.__setattr__(self, "joint_names", tuple(self.joint_names))
        self._validate()

    def _validate(self) -> None:
        J = len(self.parents)
        if J == 0:
            raise MotionFormatError("parents", "skeleton needs at least one joint")
        if self.joint_names is not None and len(self.joint_names) != J:
            raise MotionFormatError(
                "joint_names", f"expected {J} names, got {len(self.joint_names)}"
            )
        if not 0 <= self.root_index < J:
            raise MotionFormatError("root_index", f"{self.root_index} not in [0, {J})")
        roots = [j for j, p in enumerate(self.parents) if p is None]
        for j, p in enumerate(self.parents):
            if p is not None and not 0 <= p < J:
                raise MotionFormatError("parents", f"parent {p} of joint {j} out of range")
            if p == j:
                raise MotionFormatError("parents", f"cyclic skeleton (joint {j} is its own parent)")
        # walk every joint upwards; a cycle never reaches a None parent
        for j in range(J):
            k, steps = j, 0
            while self.parents[k] is not None:
                k = self.parents[k]
                steps += 1
                if steps >= J:
                    raise MotionFormatError("parents", f"cyclic skeleton (from joint {j})")
        if len(roots) != 1:
            raise MotionFormatError("parents", f"expected exactly one root, found {len(roots)}")
        if roots[0] != self.root_index:
            raise MotionFormatError(
                "root_index", f"root_index {self.root_index} but parentless joint is {roots[0]}"
            )

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def bones(self) -> list[tuple[int, int]]:
        """(child, parent) pairs in ascending child order."""
        return [(j, p) for j, p in enumerate(self.parents) if p is not None]

    @classmethod
    def chain(cls, n_joints: int) -> "Skeleton":
        return cls(parents=(None,) + tuple(range(n_joints - 1)))


def _as_positions(array, ndim_last: int, name: str) -> np.ndarray:
    arr = np.array(array, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != ndim_last:
        raise MotionFormatError(name, f"expected T x J x {ndim_last} array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise MotionFormatError(name, "sequence must have at least one frame")
    if not np.all(np.isfinite(arr)):
        raise MotionFormatError(name, "non-finite coordinate")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MotionSequence:
    skeleton: Skeleton
    fps: float
    positions: np.ndarray
    action: str | None = field(default=None)

    def __post_init__(self):
        pos = _as_positions(self.positions, 3, "frames")
        if pos.shape[1] != self.skeleton.joint_count:
            raise MotionFormatError(
                "frames",
                f"frames have {pos.shape[1]} joints, skeleton declares {self.skeleton.joint_count}",
            )
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise MotionFormatError("fps", f"must be positive, got {self.fps}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def T(self) -> int:
        return self.positions.shape[0]

    @property
    def J(self) -> int:
        return self.positions.shape[1]

    def with_positions(self, positions) -> "MotionSequence":
        return MotionSequence(self.skeleton, self.fps, positions, self.action)

    def __eq__(self, other):
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return (
            self.skeleton == other.skeleton
            and self.fps == other.fps
            and self.action == other.action
            and np.array_equal(self.positions, other.positions)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MotionSequence2D:
    skeleton: Skeleton
    fps: float
    positions2d: np.ndarray

    def __post_init__(self):
        pos = _as_positions(self.positions2d, 2, "frames2d")
        if pos.shape[1] != self.skeleton.joint_count:
            raise MotionFormatError(
                "frames2d",
                f"frames have {pos.shape[1]} joints, skeleton declares {self.skeleton.joint_count}",
            )
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise MotionFormatError("fps", f"must be positive, got {self.fps}")
        object.__setattr__(self, "positions2d", pos)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def T(self) -> int:
        return self.positions2d.shape[0]

    @property
    def J(self) -> int:
        return self.positions2d.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MotionSequence2D):
            return NotImplemented
        return (
            self.skeleton == other.skeleton
            and self.fps == other.fps
            and np.array_equal(self.positions2d, other.positions2d)
        )

    __hash__ = None


def _skeleton_from_doc(doc: dict) -> Skeleton:
    if "parents" not in doc:
        raise MotionFormatError("parents", "missing")
    parents = doc["parents"]
    if not isinstance(parents, list) or not all(p is None or isinstance(p, int) for p in parents):
        raise MotionFormatError("parents", "must be a list of integers or null")
    names = doc.get("joint_names")
    if names is not None and not isinstance(names, list):
        raise MotionFormatError("joint_names", "must be a list of strings")
    root = doc.get("root_index", 0)
    if not isinstance(root, int):
        raise MotionFormatError("root_index", "must be an integer")
    return Skeleton(parents=tuple(parents), root_index=root, joint_names=names)


def _check_frames(frames, J: int, width: int, key: str) -> None:
    if not isinstance(frames, list) or not frames:
        raise MotionFormatError(key, "must be a non-empty list of frames")
    for t, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != J:
            got = len(frame) if isinstance(frame, list) else type(frame).__name__
            raise MotionFormatError(key, f"frame {t} has {got} joints, expected {J}")
        for j, p in enumerate(frame):
            if not isinstance(p, list) or len(p) != width:
                raise MotionFormatError(key, f"frame {t} joint {j} must have {width} coordinates")


def load_motion(path: str | Path) -> MotionSequence | MotionSequence2D:
    """Read a Motion-JSON file.

    Returns a :class:`MotionSequence2D` when the file holds ``frames2d``.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MotionFormatError("json", f"parse failure: {exc}") from exc
    if not isinstance(doc, dict):
        raise MotionFormatError("json", "top level must be an object")
    if "fps" not in doc or not isinstance(doc["fps"], (int, float)):
        raise MotionFormatError("fps", "missing or not a number")
    skeleton = _skeleton_from_doc(doc)
    J = skeleton.joint_count
    if "frames" in doc:
        _check_frames(doc["frames"], J, 3, "frames")
        return MotionSequence(skeleton, doc["fps"], doc["frames"], doc.get("action"))
    if "frames2d" in doc:
        _check_frames(doc["frames2d"], J, 2, "frames2d")
        return MotionSequence2D(skeleton, doc["fps"], doc["frames2d"])
    raise MotionFormatError("frames", "missing (neither 'frames' nor 'frames2d' present)")


def motion_to_json(seq: MotionSequence | MotionSequence2D) -> str:
    sk = seq.skeleton
    doc = {"fps": seq.fps}
    if sk.joint_names is not None:
        doc["joint_names"] = list(sk.joint_names)
    doc["parents"] = list(sk.parents)
    doc["root_index"] = sk.root_index
    if isinstance(seq, MotionSequence2D):
        doc["frames2d"] = seq.positions2d.tolist()
    else:
        if seq.action is not None:
            doc["action"] = seq.action
        doc["frames"] = seq.positions.tolist()
    # float repr is shortest round-trip, so values survive exactly
    return json.dumps(doc, separators=(",", ":"))


def save_motion(seq: MotionSequence | MotionSequence2D, path: str | Path) -> None:
    Path(path).write_text(motion_to_json(seq) + "\n", encoding="utf-8")


def root_align(seq: MotionSequence) -> MotionSequence:
    """Subtract the root joint from every joint, frame by frame."""
    pos = seq.positions
    root = pos[:, seq.skeleton.root_index : seq.skeleton.root_index + 1, :]
    return seq.with_positions(pos - root)


def stack_positions(seqs: Sequence[MotionSequence]) -> np.ndarray:
    return np.stack([s.positions for s in seqs])
