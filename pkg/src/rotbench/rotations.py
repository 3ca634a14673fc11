"""Rotation math on SO(3) with six interchangeable representations.

Conventions used across the package:

* quaternions are unit length, ordered ``(w, x, y, z)``
* the canonical quaternion half-space is ``w >= 0``; an exact ``w == 0`` is
  disambiguated by requiring the first nonzero of ``(x, y, z)`` to be positive
* rotation matrices are right-handed, columns are the rotated basis vectors,
  and the 3x2 form keeps the first two columns
* Euler angles are ``(roll, pitch, yaw)`` applied intrinsically Z-Y'-X''
  (yaw about z, pitch about the new y, roll about the newest x), i.e.
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``; pitch lives in ``[-pi/2, pi/2]``
* tangent vectors (axis-angle, "Lie algebra") are plain length-3 float arrays,
  ``tau = angle * unit_axis``, with ``Log`` always returning ``|tau| <= pi``
* everything is float64

Composition acts on the right: ``boxplus(x, tau) = x * Exp(tau)`` applies
``tau`` in the body frame of ``x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Taylor switchover for Exp/Log; below this the closed forms lose digits.
SMALL_ANGLE = 1e-8
# Inputs this close to degenerate (zero quaternion, parallel columns,
# vanishing singular value) are rejected or flagged instead of normalized.
DEGENERATE_EPS = 1e-6
# Invariant tolerance for validate(); un-normalized inputs beyond this fail.
VALIDATE_TOL = 1e-6


class ReprTag(enum.Enum):
    """Names for the six orientation representations."""

    LIE_ALGEBRA = "lie-algebra"
    MATRIX = "so3-matrix"
    SIXD = "so3-sixd"
    QUAT_CANONICAL = "quaternion-canonical"
    QUAT = "quaternion"
    EULER = "euler"

    @classmethod
    def parse(cls, name: str) -> "ReprTag":
        for tag in cls:
            if tag.value == name:
                return tag
        known = ", ".join(t.value for t in cls)
        raise ValueError(f"unknown representation {name!r} (expected one of: {known})")


_PAYLOAD_SHAPE = {
    ReprTag.LIE_ALGEBRA: (3,),
    ReprTag.MATRIX: (3, 3),
    ReprTag.SIXD: (3, 2),
    ReprTag.QUAT_CANONICAL: (4,),
    ReprTag.QUAT: (4,),
    ReprTag.EULER: (3,),
}


@dataclass(frozen=True, eq=False)
class Rotation:
    """A single orientation tagged with the representation of its payload."""

    rep: ReprTag
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        want = _PAYLOAD_SHAPE[self.rep]
        if arr.shape != want:
            raise ValueError(f"{self.rep.value} payload must have shape {want}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{self.rep.value} payload contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


def identity(rep: ReprTag = ReprTag.QUAT) -> Rotation:
    """The group identity in the requested representation."""
    if rep in (ReprTag.QUAT, ReprTag.QUAT_CANONICAL):
        return Rotation(rep, np.array([1.0, 0.0, 0.0, 0.0]))
    if rep == ReprTag.MATRIX:
        return Rotation(rep, np.eye(3))
    if rep == ReprTag.SIXD:
        return Rotation(rep, np.eye(3)[:, :2])
    return Rotation(rep, np.zeros(3))


# ---------- quaternion kernels (array-valued, broadcast over leading axes)


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def _quat_conj(q: np.ndarray) -> np.ndarray:
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def _quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def _canonical_sign(q: np.ndarray) -> np.ndarray:
    """Sign that flips q onto the w >= 0 sheet, tie-breaking w == 0 by the
    first nonzero of (x, y, z)."""
    sign = np.sign(q[..., 0])
    for i in (1, 2, 3):
        sign = np.where(sign == 0.0, np.sign(q[..., i]), sign)
    return np.where(sign == 0.0, 1.0, sign)


def _quat_canonicalize(q: np.ndarray) -> np.ndarray:
    return q * _canonical_sign(q)[..., None]


def _quat_exp(tau: np.ndarray) -> np.ndarray:
    """Exp: tangent vector(s) -> unit quaternion(s)."""
    tau = np.asarray(tau, dtype=np.float64)
    theta = np.linalg.norm(tau, axis=-1, keepdims=True)
    half = 0.5 * theta
    small = theta < SMALL_ANGLE
    # sin(theta/2)/theta, second-order Taylor below the branch point
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    return np.concatenate([np.cos(half), k * tau], axis=-1)


def _quat_log(q: np.ndarray) -> np.ndarray:
    """Log: unit quaternion(s) -> tangent vector(s) with norm <= pi.

    Works on either sheet of the double cover; the w < 0 sheet is flipped
    first so the returned angle is the geodesic one.
    """
    q = np.asarray(q, dtype=np.float64)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    w = q[..., :1] * sign
    v = q[..., 1:] * sign
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    small = s < SMALL_ANGLE
    safe_s = np.where(small, 1.0, s)
    safe_w = np.where(small, w, 1.0)  # w ~ 1 whenever s is small and q is unit
    # theta/sin(theta/2) via atan2; Taylor in s/w near the identity
    k = np.where(
        small,
        (2.0 / safe_w) * (1.0 - s * s / (3.0 * safe_w * safe_w)),
        2.0 * np.arctan2(s, w) / safe_s,
    )
    return k * v


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    row0 = np.stack([1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)], axis=-1)
    row1 = np.stack([2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)], axis=-1)
    row2 = np.stack([2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Shepperd's method: branch on the largest of trace and diagonal."""
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t >= m[0, 0] and t >= m[1, 1] and t >= m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + t)
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = 2.0 * np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2])
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2])
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return _quat_normalize(q)


def _wrap_half_open(angle: np.ndarray) -> np.ndarray:
    # atan2 yields [-pi, pi]; fold the -pi endpoint so angles live in (-pi, pi]
    return np.where(angle <= -np.pi, angle + 2.0 * np.pi, angle)


def _quat_to_euler(q: np.ndarray) -> np.ndarray:
    """Extract (roll, pitch, yaw) for R = Rz(yaw) @ Ry(pitch) @ Rx(roll).

    At gimbal lock (|pitch| within ~1e-6 of pi/2 the row that separates roll
    from yaw vanishes), the convention is roll = 0 with the remaining freedom
    folded into yaw.
    """
    m = _quat_to_matrix(q)
    r20, r21, r22 = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
    r10, r00 = m[..., 1, 0], m[..., 0, 0]
    r01, r11 = m[..., 0, 1], m[..., 1, 1]
    cos_pitch = np.hypot(r21, r22)
    pitch = np.arctan2(-r20, cos_pitch)
    locked = cos_pitch < 1e-6
    roll = np.where(locked, 0.0, np.arctan2(r21, r22))
    yaw = np.where(locked, np.arctan2(-r01, r11), np.arctan2(r10, r00))
    return _wrap_half_open(np.stack([roll, pitch, yaw], axis=-1))


def _euler_to_quat(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    hr, hp, hy = 0.5 * e[..., 0], 0.5 * e[..., 1], 0.5 * e[..., 2]
    cr, sr = np.cos(hr), np.sin(hr)
    cp, sp = np.cos(hp), np.sin(hp)
    cy, sy = np.cos(hy), np.sin(hy)
    # closed form of qz(yaw) * qy(pitch) * qx(roll)
    return np.stack(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ],
        axis=-1,
    )


def _to_quat(x: Rotation) -> np.ndarray:
    """Internal hub: any representation -> unit quaternion array."""
    if x.rep in (ReprTag.QUAT, ReprTag.QUAT_CANONICAL):
        return x.data
    if x.rep == ReprTag.LIE_ALGEBRA:
        return _quat_exp(x.data)
    if x.rep == ReprTag.EULER:
        return _euler_to_quat(x.data)
    if x.rep == ReprTag.MATRIX:
        return _matrix_to_quat(x.data)
    # sixd: the third column is implied by the first two
    c1, c2 = x.data[:, 0], x.data[:, 1]
    m = np.column_stack([c1, c2, np.cross(c1, c2)])
    return _matrix_to_quat(m)


def _from_quat(q: np.ndarray, rep: ReprTag) -> Rotation:
    if rep == ReprTag.QUAT:
        return Rotation(rep, q)
    if rep == ReprTag.QUAT_CANONICAL:
        return Rotation(rep, _quat_canonicalize(q))
    if rep == ReprTag.MATRIX:
        return Rotation(rep, _quat_to_matrix(q))
    if rep == ReprTag.SIXD:
        return Rotation(rep, _quat_to_matrix(q)[:, :2])
    if rep == ReprTag.EULER:
        return Rotation(rep, _quat_to_euler(q))
    return Rotation(rep, _quat_log(q))


# ---------- public operations


def validate(x: Rotation, tol: float = VALIDATE_TOL) -> None:
    """Raise ValueError if the payload violates its representation invariants."""
    d = x.data
    if x.rep in (ReprTag.QUAT, ReprTag.QUAT_CANONICAL):
        if abs(np.linalg.norm(d) - 1.0) > tol:
            raise ValueError(f"quaternion norm {np.linalg.norm(d):.9f} is not 1 within {tol}")
        if x.rep == ReprTag.QUAT_CANONICAL and d[0] < -tol:
            raise ValueError("canonical quaternion has w < 0")
    elif x.rep == ReprTag.MATRIX:
        err = np.max(np.abs(d.T @ d - np.eye(3)))
        if err > tol:
            raise ValueError(f"matrix is not orthonormal (max residual {err:.3e})")
        if np.linalg.det(d) < 0.0:
            raise ValueError("matrix has negative determinant (a reflection)")
    elif x.rep == ReprTag.SIXD:
        c1, c2 = d[:, 0], d[:, 1]
        if abs(np.linalg.norm(c1) - 1.0) > tol or abs(np.linalg.norm(c2) - 1.0) > tol:
            raise ValueError("3x2 columns are not unit length")
        if abs(float(c1 @ c2)) > tol:
            raise ValueError("3x2 columns are not orthogonal")
    elif x.rep == ReprTag.EULER:
        if np.any(np.abs(d) > np.pi + tol) or abs(d[1]) > 0.5 * np.pi + tol:
            raise ValueError("euler angles outside the canonical range")
    # lie-algebra: any finite vector is a valid tangent; wrapping is Log's job


def exp(tau: np.ndarray) -> Rotation:
    """Exp map: tangent vector -> unit quaternion rotation (total on R^3)."""
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (3,):
        raise ValueError(f"tangent vector must have shape (3,), got {tau.shape}")
    return Rotation(ReprTag.QUAT, _quat_exp(tau))


def log(x: Rotation) -> np.ndarray:
    """Log map: rotation -> tangent vector with norm <= pi.

    The input is validated against its representation invariants first so
    un-normalized payloads fail loudly instead of skewing the angle.
    """
    validate(x)
    return _quat_log(_to_quat(x))


def compose(x: Rotation, y: Rotation) -> Rotation:
    """Group composition x * y; both operands must share a representation."""
    if x.rep is not y.rep:
        raise ValueError(f"compose requires matching representations, got {x.rep.value} and {y.rep.value}")
    if x.rep == ReprTag.MATRIX:
        return Rotation(x.rep, x.data @ y.data)
    if x.rep in (ReprTag.QUAT, ReprTag.QUAT_CANONICAL):
        q = _quat_normalize(_quat_mul(x.data, y.data))
        return _from_quat(q, x.rep) if x.rep == ReprTag.QUAT_CANONICAL else Rotation(x.rep, q)
    q = _quat_normalize(_quat_mul(_to_quat(x), _to_quat(y)))
    return _from_quat(q, x.rep)


def inverse(x: Rotation) -> Rotation:
    """Group inverse, kept in the input representation."""
    if x.rep == ReprTag.MATRIX:
        return Rotation(x.rep, x.data.T)
    if x.rep == ReprTag.LIE_ALGEBRA:
        return Rotation(x.rep, -x.data)
    return _from_quat(_quat_conj(_to_quat(x)), x.rep)


def boxplus(x: Rotation, tau: np.ndarray) -> Rotation:
    """Right perturbation x * Exp(tau), returned in the representation of x."""
    tau = np.asarray(tau, dtype=np.float64)
    q = _quat_normalize(_quat_mul(_to_quat(x), _quat_exp(tau)))
    return _from_quat(q, x.rep)


def boxminus(y: Rotation, x: Rotation) -> np.ndarray:
    """Tangent-space difference Log(x^-1 * y); inverse of boxplus at x."""
    if x.rep is not y.rep:
        raise ValueError(f"boxminus requires matching representations, got {y.rep.value} and {x.rep.value}")
    return _quat_log(_quat_mul(_quat_conj(_to_quat(x)), _to_quat(y)))


def geodesic_distance(x: Rotation, y: Rotation) -> float:
    """Rotation angle between x and y, in [0, pi]; representations may differ."""
    rel = _quat_mul(_quat_conj(_to_quat(x)), _to_quat(y))
    return float(np.linalg.norm(_quat_log(rel)))


def convert(x: Rotation, target: ReprTag) -> Rotation:
    """Re-express x in another representation (identity when target matches)."""
    if x.rep is target:
        return x
    return _from_quat(_quat_normalize(_to_quat(x)), target)


def canonicalize(x: Rotation) -> Rotation:
    """Map a quaternion onto the w >= 0 half-space (w == 0 resolved by the
    first nonzero of x, y, z)."""
    if x.rep not in (ReprTag.QUAT, ReprTag.QUAT_CANONICAL):
        raise ValueError(f"canonicalize expects a quaternion, got {x.rep.value}")
    return Rotation(ReprTag.QUAT_CANONICAL, _quat_canonicalize(x.data))


def reconstruct_third_column(x: Rotation) -> Rotation:
    """Complete a 3x2 representation to a full rotation matrix via c1 x c2."""
    if x.rep is not ReprTag.SIXD:
        raise ValueError(f"reconstruct_third_column expects so3-sixd, got {x.rep.value}")
    c1, c2 = x.data[:, 0], x.data[:, 1]
    c3 = np.cross(c1, c2)
    if np.linalg.norm(c3) < DEGENERATE_EPS:
        raise ValueError("columns are near-parallel; no third column can be reconstructed")
    return Rotation(ReprTag.MATRIX, np.column_stack([c1, c2, c3]))


def project_to_so3(m: np.ndarray) -> tuple[Rotation, bool]:
    """Nearest rotation matrix to an arbitrary 3x3 in the Frobenius sense.

    Returns ``(rotation, degenerate)``. Rank-deficient inputs (smallest
    singular value below 1e-9) have no well-defined nearest rotation and map
    to the identity with the flag set; callers decide how to count that.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
    u, s, vt = np.linalg.svd(m)
    if s[2] < 1e-9:
        return identity(ReprTag.MATRIX), True
    d = 1.0 if np.linalg.det(u @ vt) > 0.0 else -1.0
    r = (u * np.array([1.0, 1.0, d])) @ vt
    return Rotation(ReprTag.MATRIX, r), False


def sample_uniform(rng: np.random.Generator) -> Rotation:
    """Haar-uniform random rotation: four standard normals, normalized."""
    return Rotation(ReprTag.QUAT, sample_uniform_batch(rng, 1)[0])


def sample_uniform_batch(rng: np.random.Generator, n: int) -> np.ndarray:
    """Vectorized sample_uniform; returns (n, 4) wxyz rows, identical stream."""
    q = rng.standard_normal((n, 4))
    norms = np.linalg.norm(q, axis=1)
    bad = norms < DEGENERATE_EPS
    while np.any(bad):  # zero draws; probability ~0 but stay total
        q[bad] = rng.standard_normal((int(bad.sum()), 4))
        norms[bad] = np.linalg.norm(q[bad], axis=1)
        bad = norms < DEGENERATE_EPS
    return q / norms[:, None]


def clamp_angle(tau: np.ndarray, max_angle: float) -> np.ndarray:
    """Scale a tangent vector down to max_angle if its norm exceeds it."""
    tau = np.asarray(tau, dtype=np.float64)
    theta = float(np.linalg.norm(tau))
    if theta <= max_angle:
        return tau
    return tau * (max_angle / theta)
