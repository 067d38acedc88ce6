"""Axisymmetric strain probes on an equilibrated packing.

A probe applies a small homogeneous strain increment whose principal axes
are the box axes, with the two lateral components equal.  Stresses and
strains are compression positive here and are reduced to the Rendulic
plane of axisymmetric tensors, with coordinates

    volumetric  = trace / sqrt(3)
    deviatoric  = sqrt(2/3) * (t11 - t33)

which form an orthonormal basis for diagonal tensors with ``t22 == t33``.

The irreversible (plastic) part of a probe is defined operationally: the
packing is strained forward, relaxed, then servoed back to the base stress
using an elastic stiffness estimate; the net strain left at the base
stress is the plastic strain.  The probe point sits in the direction of the
stress increment at a distance ``|plastic strain| / |stress increment|``.
For a single yield mechanism these points lie on a circle through the
origin whose diameter is the inverse plastic modulus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import Assembly, love_weber_stress, relax, step
from .errors import ContactInputError

SQRT3 = math.sqrt(3.0)
SQRT23 = math.sqrt(2.0 / 3.0)
SQRT6 = math.sqrt(6.0)


def rendulic_coordinates(t, tol: float = 1e-9) -> np.ndarray:
    """``(trace / sqrt 3, sqrt(2/3) (t11 - t33))`` of an axisymmetric tensor.

    Raises
    ------
    ContactInputError
        If ``|t22 - t33|`` exceeds ``tol`` times the largest entry.
    """
    t = np.asarray(t, dtype=float)
    if t.shape != (3, 3):
        raise ContactInputError(f"expected a 3x3 tensor, got shape {t.shape}")
    scale = float(np.abs(t).max())
    if abs(t[1, 1] - t[2, 2]) > tol * scale:
        raise ContactInputError(f"tensor is not axisymmetric about x1: t22={t[1, 1]!r}, t33={t[2, 2]!r}")
    return np.array([np.trace(t) / SQRT3, SQRT23 * (t[0, 0] - t[2, 2])])


def axisymmetric_part(t) -> np.ndarray:
    """Diagonal tensor ``diag(t11, m, m)`` with ``m`` the mean lateral component."""
    t = np.asarray(t, dtype=float)
    m = 0.5 * (t[1, 1] + t[2, 2])
    return np.diag([t[0, 0], m, m])


def rendulic_tensor(v: float, d: float) -> np.ndarray:
    """Inverse of ``rendulic_coordinates``: the axisymmetric tensor at ``(v, d)``."""
    lateral = v / SQRT3 - d / SQRT6
    return np.diag([v / SQRT3 + SQRT23 * d, lateral, lateral])


def lateral_asymmetry(t) -> float:
    """``|t22 - t33|`` relative to the Frobenius norm of the diagonal."""
    t = np.asarray(t, dtype=float)
    norm = float(np.linalg.norm(np.diag(t)))
    return abs(t[1, 1] - t[2, 2]) / norm if norm > 0 else 0.0


# ---------------------------------------------------------------------------
# circle fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircleFit:
    """Circle through the origin: ``|x|^2 = 2 x . c``.

    ``tilt`` is the angle of the diameter through the origin (radians, from
    the volumetric axis); ``residual`` is the RMS distance of the points from
    the fitted circle.
    """

    diameter: float
    tilt: float
    residual: float
    center: np.ndarray


def fit_circle_through_origin(points) -> CircleFit:
    """Least-squares circle constrained to pass through the origin.

    Solves ``2 x . c = |x|^2`` for the center ``c`` in the least-squares
    sense.  Points at the origin carry no information and are skipped; if
    every point is at the origin the circle has zero diameter.

    Raises
    ------
    ContactInputError
        If fewer than 3 points are given or the informative points are
        collinear with the origin.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        raise ContactInputError("need at least 3 two-dimensional points")
    r2 = np.einsum("ij,ij->i", p, p)
    scale = float(np.sqrt(r2.max()))
    if scale == 0.0:
        return CircleFit(0.0, 0.0, 0.0, np.zeros(2))
    A = 2.0 * p / scale
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise ContactInputError("points are collinear with the origin; circle is undefined")
    c, *_ = np.linalg.lstsq(A, r2 / scale, rcond=None)
    dist = np.abs(np.linalg.norm(p - c, axis=1) - np.linalg.norm(c))
    return CircleFit(float(2.0 * np.linalg.norm(c)), float(math.atan2(c[1], c[0])),
                     float(np.sqrt(np.mean(dist ** 2))), c)


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeSettings:
    """How a probe is driven.

    ``magnitude`` is the Rendulic norm of the forward strain increment,
    applied in ``n_steps`` equal steps.  After each loading or unloading
    pass the boundary is held while the packing relaxes to an unbalanced
    force ratio ``relax_tol``.  Unloading passes repeat until the Rendulic
    stress error is below ``servo_tol`` times the stress increment, at most
    ``max_passes`` times.
    """

    magnitude: float
    n_steps: int
    relax_tol: float = 1e-7
    servo_tol: float = 1e-3
    max_passes: int = 6
    relax_steps: int = 100_000

    def __post_init__(self):
        if not (self.magnitude > 0 and self.n_steps >= 1 and self.servo_tol > 0 and self.max_passes >= 1):
            raise ContactInputError(f"invalid probe settings: {self}")


@dataclass
class ProbeResult:
    """One probe point.

    Tensors are compression positive.  ``direction`` is the unit Rendulic
    direction of the stress increment, ``radius`` the plastic strain
    magnitude over the stress increment magnitude (1/stress units).
    ``flow`` is the unit Rendulic direction of the plastic strain.
    """

    angle: float
    kernel: str
    direction: np.ndarray
    radius: float
    flow: np.ndarray
    strain_increment: np.ndarray
    stress_increment: np.ndarray
    plastic_strain: np.ndarray
    servo_error: float
    asymmetry: float
    passes: int
    flagged: bool
    steps: int

    @property
    def point(self) -> np.ndarray:
        return self.radius * self.direction


def _strain(a: Assembly, eps: np.ndarray, s: ProbeSettings) -> int:
    """Apply compression-positive diagonal strain tensor ``eps`` in ``s.n_steps`` steps, then relax."""
    dt = a.stable_dt()
    inc = -np.diag(eps) / s.n_steps
    for _ in range(s.n_steps):
        step(a, dt, inc)
    k, _ = relax(a, dt, unbalanced_tol=s.relax_tol, max_steps=s.relax_steps)
    return s.n_steps + k


def _prepared(base: Assembly, kernel: str, mu: float | None = None) -> Assembly:
    a = base.copy()
    a.kernel = kernel
    a.v[:] = 0.0
    a.w[:] = 0.0
    if mu is not None:
        a.params = replace(a.params, mu=mu)
    return a


def elastic_stiffness(base: Assembly, settings: ProbeSettings, *, kernel: str = "refined") -> np.ndarray:
    """2x2 Rendulic stiffness ``dsigma = K deps`` of the packing with sliding suppressed.

    Two probes (pure volumetric, pure deviatoric) run with a friction
    coefficient so large that no contact reaches its limit.
    """
    K = np.zeros((2, 2))
    for col, unit in enumerate(((1.0, 0.0), (0.0, 1.0))):
        a = _prepared(base, kernel, mu=1e12)
        s0 = love_weber_stress(a)
        eps = rendulic_tensor(*(settings.magnitude * np.array(unit)))
        _strain(a, eps, settings)
        K[:, col] = rendulic_coordinates(axisymmetric_part(love_weber_stress(a) - s0)) / settings.magnitude
    return K


def run_probe(base: Assembly, angle: float, settings: ProbeSettings, *, kernel: str = "refined",
              stiffness: np.ndarray | None = None) -> ProbeResult:
    """Strain probe at Rendulic strain angle ``angle`` (radians from the volumetric axis).

    The base assembly should be in static equilibrium; it is not modified.
    ``stiffness`` (from ``elastic_stiffness``) drives the unloading servo and
    is estimated if omitted.  The result is flagged when the servo fails to
    return within tolerance.
    """
    K = elastic_stiffness(base, settings, kernel=kernel) if stiffness is None else np.asarray(stiffness)
    a = _prepared(base, kernel)
    s0 = love_weber_stress(a)
    r0 = rendulic_coordinates(axisymmetric_part(s0))
    de = settings.magnitude * np.array([math.cos(angle), math.sin(angle)])
    eps_total = de.copy()
    steps = _strain(a, rendulic_tensor(*de), settings)
    s1 = love_weber_stress(a)
    ds_tensor = s1 - s0
    ds = rendulic_coordinates(axisymmetric_part(s1)) - r0
    ds_norm = float(np.linalg.norm(ds))
    err = ds
    passes = 0
    while passes < settings.max_passes and np.linalg.norm(err) > settings.servo_tol * ds_norm:
        back = -np.linalg.solve(K, err)
        steps += _strain(a, rendulic_tensor(*back), settings)
        eps_total += back
        err = rendulic_coordinates(axisymmetric_part(love_weber_stress(a))) - r0
        passes += 1
    servo_error = float(np.linalg.norm(err)) / ds_norm if ds_norm > 0 else math.inf
    flagged = not servo_error <= settings.servo_tol
    plastic = eps_total
    radius = float(np.linalg.norm(plastic)) / ds_norm if ds_norm > 0 else 0.0
    pn = float(np.linalg.norm(plastic))
    return ProbeResult(angle=angle, kernel=kernel, direction=ds / ds_norm if ds_norm > 0 else np.zeros(2),
                       radius=radius, flow=plastic / pn if pn > 0 else np.zeros(2),
                       strain_increment=rendulic_tensor(*de), stress_increment=ds_tensor,
                       plastic_strain=rendulic_tensor(*plastic), servo_error=servo_error,
                       asymmetry=lateral_asymmetry(ds_tensor), passes=passes, flagged=flagged, steps=steps)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def probe_angles(n_directions: int) -> np.ndarray:
    """``n_directions`` strain angles evenly spaced over the full circle."""
    return 2.0 * math.pi * np.arange(n_directions) / n_directions


@dataclass
class ProbeSuite:
    kernel: str
    settings: ProbeSettings
    probes: list[ProbeResult]
    fit: CircleFit | None
    complementary: CircleFit | None

    @property
    def points(self) -> np.ndarray:
        return np.array([p.point for p in self.probes])


def run_suite(base: Assembly, angles, settings: ProbeSettings, *, kernel: str = "refined",
              stiffness: np.ndarray | None = None) -> ProbeSuite:
    """Probe every angle and fit the yield circle.

    The main circle is fit to the points on the loading side, where the
    stress increment has a positive component along the mean plastic flow
    direction; the points on the other side (if at least 3 are away from the
    origin) get their own circle, reported as the complementary circle.
    """
    K = elastic_stiffness(base, settings, kernel=kernel) if stiffness is None else stiffness
    probes = [run_probe(base, float(t), settings, kernel=kernel, stiffness=K) for t in angles]
    pts = np.array([p.point for p in probes])
    flow = np.sum([p.flow * p.radius for p in probes], axis=0)
    loading = pts @ flow > 0 if np.linalg.norm(flow) > 0 else np.ones(len(pts), bool)
    fit = _try_fit(pts[loading])
    comp = _try_fit(pts[~loading])
    return ProbeSuite(kernel, settings, probes, fit, comp)


def _try_fit(points) -> CircleFit | None:
    if len(points) < 3:
        return None
    try:
        return fit_circle_through_origin(points)
    except ContactInputError:
        return None


@dataclass
class KernelComparison:
    """The same probe suite under the refined and the conventional kernel."""

    refined: ProbeSuite
    conventional: ProbeSuite
    stiffness: np.ndarray = field(repr=False)

    @property
    def ratio(self) -> float:
        """Conventional over refined fitted diameter."""
        return self.conventional.fit.diameter / self.refined.fit.diameter

    @property
    def difference(self) -> float:
        return abs(self.conventional.fit.diameter - self.refined.fit.diameter)

    @property
    def residual(self) -> float:
        """Larger of the two fit residuals."""
        return max(self.conventional.fit.residual, self.refined.fit.residual)

    def point_differences(self) -> np.ndarray:
        return self.conventional.points - self.refined.points


def compare_kernels(base: Assembly, angles, settings: ProbeSettings) -> KernelComparison:
    """Run one probe suite with each kernel from the same base state and stiffness."""
    K = elastic_stiffness(base, settings)
    return KernelComparison(run_suite(base, angles, settings, kernel="refined", stiffness=K),
                            run_suite(base, angles, settings, kernel="conventional", stiffness=K), K)
