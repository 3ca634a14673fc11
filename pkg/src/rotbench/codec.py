"""Encoding orientations for network input and decoding network output
into bounded rotation actions.

Observations concatenate the absolute state and the absolute goal, both
flattened in the same representation (matrix forms are flattened
column-major). Actions come out of a tanh head, so every raw component is
in [-1, 1]; decoding maps that cube onto rotations of geodesic angle at
most ``max_angle``.

The tangent ("lie-algebra") action keeps a per-component box bound of
``max_angle / sqrt(3)`` so its worst-case corner has angle exactly
``max_angle``; every other representation decodes first and then clamps
the geodesic angle. The asymmetry is intentional: the box bound means
tangent actions cannot reach ``max_angle`` along a single axis, which is
part of what the benchmark measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rotbench.rotations import (
    DEGENERATE_EPS,
    ReprTag,
    Rotation,
    _euler_to_quat,
    _matrix_to_quat,
    _quat_canonicalize,
    _quat_exp,
    _quat_log,
    _quat_to_euler,
    _quat_to_matrix,
    _to_quat,
    clamp_angle,
    identity,
    project_to_so3,
)

_FLAT_DIM = {
    ReprTag.MATRIX: 9,
    ReprTag.SIXD: 6,
    ReprTag.QUAT: 4,
    ReprTag.QUAT_CANONICAL: 4,
    ReprTag.EULER: 3,
    ReprTag.LIE_ALGEBRA: 3,
}


def obs_dim(tag: ReprTag) -> int:
    """Flat size of one rotation in this representation (state and goal each)."""
    return _FLAT_DIM[tag]


def action_dim(tag: ReprTag) -> int:
    """Number of raw network outputs the action head needs for this representation."""
    return _FLAT_DIM[tag]


@dataclass(frozen=True)
class ActionSpec:
    """How raw actor output is turned into a rotation."""

    tag: ReprTag
    max_angle: float = 0.1 * np.pi

    def __post_init__(self):
        if not self.max_angle > 0.0:
            raise ValueError("max_angle must be positive")

    @property
    def raw_dim(self) -> int:
        return action_dim(self.tag)


@dataclass
class DegeneracyCounter:
    """Tally of raw actions that had no usable decode and fell back to identity."""

    count: int = 0

    def bump(self) -> None:
        self.count += 1


def _flatten_batch(q: np.ndarray, tag: ReprTag) -> np.ndarray:
    """(n, 4) quaternions -> (n, obs_dim(tag)) rows in the target representation."""
    if tag is ReprTag.LIE_ALGEBRA:
        return _quat_log(q)
    if tag is ReprTag.QUAT:
        return q
    if tag is ReprTag.QUAT_CANONICAL:
        return _quat_canonicalize(q)
    if tag is ReprTag.EULER:
        return _quat_to_euler(q)
    m = _quat_to_matrix(q)
    if tag is ReprTag.SIXD:
        m = m[..., :, :2]
    # column-major flatten: first column, then the next
    return np.swapaxes(m, -1, -2).reshape(*m.shape[:-2], -1)


def encode_observation_batch(
    state_q: np.ndarray, goal_q: np.ndarray, tag: ReprTag
) -> np.ndarray:
    """Vectorized encoder over (n, 4) quaternion rows for state and goal."""
    return np.concatenate(
        [_flatten_batch(state_q, tag), _flatten_batch(goal_q, tag)], axis=-1
    )


def encode_observation(state: Rotation, goal: Rotation, tag: ReprTag) -> np.ndarray:
    """Network input for one state/goal pair: flatten(state) then flatten(goal)."""
    return encode_observation_batch(
        _to_quat(state)[None], _to_quat(goal)[None], tag
    )[0]


def _clamped(q: np.ndarray, max_angle: float) -> Rotation:
    tau = _quat_log(q)
    angle = float(np.linalg.norm(tau))
    if angle > max_angle:
        q = _quat_exp(clamp_angle(tau, max_angle))
    return Rotation(ReprTag.QUAT, q)


def decode_action(
    raw: np.ndarray, spec: ActionSpec, counter: DegeneracyCounter | None = None
) -> Rotation:
    """Turn one raw actor output into a rotation with angle <= spec.max_angle.

    Degenerate raws (zero-norm quaternions, parallel 3x2 columns,
    rank-deficient matrices) decode to the identity; the optional counter
    records how often that happened so runs can report it. Decoding never
    raises on such inputs, a random exploration action must always produce
    some legal rotation.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (spec.raw_dim,):
        raise ValueError(f"raw action must have shape ({spec.raw_dim},), got {raw.shape}")
    tag = spec.tag

    if tag is ReprTag.LIE_ALGEBRA:
        # box bound: worst-case corner norm is exactly max_angle, no clamp
        return Rotation(ReprTag.QUAT, _quat_exp(raw * (spec.max_angle / np.sqrt(3.0))))

    if tag is ReprTag.EULER:
        return _clamped(_euler_to_quat(raw * spec.max_angle), spec.max_angle)

    if tag in (ReprTag.QUAT, ReprTag.QUAT_CANONICAL):
        norm = np.linalg.norm(raw)
        if norm < DEGENERATE_EPS:
            if counter is not None:
                counter.bump()
            return identity(ReprTag.QUAT)
        q = raw / norm
        if tag is ReprTag.QUAT_CANONICAL:
            q = _quat_canonicalize(q)
        return _clamped(q, spec.max_angle)

    if tag is ReprTag.MATRIX:
        r, degenerate = project_to_so3(raw.reshape(3, 3, order="F"))
        if degenerate:
            if counter is not None:
                counter.bump()
            return identity(ReprTag.QUAT)
        return _clamped(_to_quat(r), spec.max_angle)

    # sixd: Gram-Schmidt the two columns, complete with the cross product
    c1, c2 = raw[:3].copy(), raw[3:].copy()
    n1 = np.linalg.norm(c1)
    if n1 < DEGENERATE_EPS:
        if counter is not None:
            counter.bump()
        return identity(ReprTag.QUAT)
    c1 /= n1
    c2 -= (c1 @ c2) * c1
    n2 = np.linalg.norm(c2)
    if n2 < DEGENERATE_EPS:
        if counter is not None:
            counter.bump()
        return identity(ReprTag.QUAT)
    c2 /= n2
    m = np.column_stack([c1, c2, np.cross(c1, c2)])
    return _clamped(_matrix_to_quat(m), spec.max_angle)
