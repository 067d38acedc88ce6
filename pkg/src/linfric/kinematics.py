"""Relative contact movement between two particles over one time step.

All vectors are length-3 numpy arrays.  The contact normal ``n`` points
outward from particle ``p`` toward particle ``q`` and is the normal at the
*end* of the step; the lever arms ``r_p`` and ``r_q`` are likewise taken
from end-of-step geometry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContactInputError, DegenerateDirectionError

UNIT_TOL = 1e-9

_ZERO = np.zeros(3)


def _vec(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ContactInputError(f"{name} must be a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContactInputError(f"{name} has non-finite components: {v}")
    return v


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (``np.cross`` carries heavy per-call overhead)."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def check_unit(n, name: str = "n", tol: float = UNIT_TOL) -> np.ndarray:
    n = _vec(n, name)
    if abs(np.linalg.norm(n) - 1.0) > tol:
        raise ContactInputError(f"{name} must be a unit vector, |{name}|={np.linalg.norm(n)!r}")
    return n


@dataclass(frozen=True)
class StepKinematics:
    """Particle increments and contact geometry for one step.

    ``du_*`` are translation increments, ``dtheta_*`` rotation increments
    (radians, as rotation vectors), ``r_*`` vectors from each particle
    center to the contact point, and ``n`` the unit contact normal.
    """

    du_p: np.ndarray = _ZERO
    du_q: np.ndarray = _ZERO
    dtheta_p: np.ndarray = _ZERO
    dtheta_q: np.ndarray = _ZERO
    r_p: np.ndarray = _ZERO
    r_q: np.ndarray = _ZERO
    n: np.ndarray = np.array([0.0, 0.0, 1.0])

    def __post_init__(self):
        for name in ("du_p", "du_q", "dtheta_p", "dtheta_q", "r_p", "r_q"):
            object.__setattr__(self, name, _vec(getattr(self, name), name))
        object.__setattr__(self, "n", check_unit(self.n))

    @classmethod
    def from_relative(cls, du_bar, n, dtheta_p=_ZERO, dtheta_q=_ZERO) -> "StepKinematics":
        """Kinematics whose relative movement is exactly ``du_bar``.

        Particle ``p`` is held still and ``q`` translates by ``du_bar``; the
        rotation increments only enter through the twirl correction since
        both lever arms are zero.
        """
        return cls(du_q=du_bar, n=n, dtheta_p=dtheta_p, dtheta_q=dtheta_q)


@dataclass(frozen=True)
class MovementDecomposition:
    d_zeta: float
    d_xi: np.ndarray


def relative_contact_movement(k: StepKinematics) -> np.ndarray:
    """Movement of ``q`` relative to ``p`` at the contact point."""
    return (k.du_q - k.du_p) + (cross3(k.dtheta_q, k.r_q) - cross3(k.dtheta_p, k.r_p))


def decompose_movement(du_bar, n) -> MovementDecomposition:
    """Split a relative movement into approach ``d_zeta`` and tangential ``d_xi``.

    ``d_zeta`` is positive when the particles move toward each other, so
    that ``du_bar == -d_zeta * n + d_xi``.
    """
    du_bar = _vec(du_bar, "du_bar")
    n = check_unit(n)
    d_zeta = -float(du_bar @ n)
    d_xi = du_bar + d_zeta * n
    return MovementDecomposition(d_zeta, d_xi)


def tangent_basis(d_xi, n, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Unit movement direction and its in-plane perpendicular ``n x m``.

    Raises
    ------
    DegenerateDirectionError
        If ``|d_xi| <= tol``.
    """
    d_xi = _vec(d_xi, "d_xi")
    n = check_unit(n)
    length = np.linalg.norm(d_xi)
    if length <= tol or length == 0.0:
        raise DegenerateDirectionError("tangential movement is zero; no slip direction")
    m_dxi = d_xi / length
    return m_dxi, cross3(n, m_dxi)
