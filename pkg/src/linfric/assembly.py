"""Desk-scale DEM engine for sphere packings in a box of frictionless walls.

Particles interact through ``contact_model.update_contacts``; walls are
planes that push with a normal spring (and normal dashpot) only.  Time
integration is the explicit central-difference scheme of Cundall and
Strack: contact forces are evaluated at the current positions from the
displacement and rotation increments of the last step, then velocities and
positions advance.

Strain-controlled loading maps particles and walls affinely about the
origin, which is the center of the box built by ``make_packing``.  Strain increments use the kinematic sign (extension positive).

Stress is the Love-Weber average over particle-particle contacts,
compression positive.  The contact force used is the spring force
``-fn n + ft`` on the lower-numbered particle; damping forces are left out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .contact_model import (ContactParams, ContactState, WorkLedger, _raise_status, _update_rows,
                            table_arrays)
from .errors import ContactInputError, DegenerateGeometryError, InstabilityError

SNAPSHOT_VERSION = 1
_TABLE = table_arrays()


@dataclass(frozen=True)
class Particle:
    id: int
    position: np.ndarray
    radius: float
    velocity: np.ndarray
    angular_velocity: np.ndarray
    mass: float
    inertia: float

    def __post_init__(self):
        if not (self.radius > 0 and self.mass > 0 and self.inertia > 0):
            raise ContactInputError(f"particle {self.id}: radius, mass and inertia must be positive")


@dataclass(frozen=True)
class AssemblySnapshot:
    particles: list[Particle]
    contacts: dict[tuple[int, int], ContactState]
    volume: float
    stress: np.ndarray


@dataclass
class ContactSet:
    """Particle-particle contacts, one row each, sorted by ``key = i * N + j`` with ``i < j``."""

    i: np.ndarray
    j: np.ndarray
    zeta: np.ndarray
    n: np.ndarray
    ft: np.ndarray
    sliding: np.ndarray
    point: np.ndarray
    force: np.ndarray       # total force on i (incl. damping) from the last step
    wt_irrev: np.ndarray    # accumulated dissipation

    @classmethod
    def empty(cls) -> "ContactSet":
        z = np.zeros(0)
        v = np.zeros((0, 3))
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), z, v, v, np.zeros(0, bool), v, v, z)

    def __len__(self) -> int:
        return len(self.i)

    def copy(self) -> "ContactSet":
        return ContactSet(*(a.copy() for a in (self.i, self.j, self.zeta, self.n, self.ft, self.sliding,
                                                  self.point, self.force, self.wt_irrev)))


@dataclass
class Walls:
    """Planar walls: inward unit ``normals`` and a ``points`` on each plane.

    Walls come in opposing pairs ``(2k, 2k + 1)`` for box axis ``k``.
    """

    normals: np.ndarray
    points: np.ndarray

    @classmethod
    def box(cls, lo, hi) -> "Walls":
        normals, points = [], []
        for k in range(3):
            e = np.eye(3)[k]
            normals += [e, -e]
            p_lo, p_hi = np.zeros(3), np.zeros(3)
            p_lo[k], p_hi[k] = lo[k], hi[k]
            points += [p_lo, p_hi]
        return cls(np.array(normals), np.array(points))

    def extents(self) -> np.ndarray:
        return np.array([(self.points[2 * k + 1] - self.points[2 * k]) @ self.normals[2 * k] for k in range(3)])

    def volume(self) -> float:
        return float(np.prod(self.extents()))

    def copy(self) -> "Walls":
        return Walls(self.normals.copy(), self.points.copy())


@dataclass
class StepInfo:
    kinetic_energy: float
    max_unbalanced: float     # largest |net force| over particles with contacts, / mean contact force
    n_contacts: int
    n_sliding: int
    wall_forces: np.ndarray   # (6,) normal force exerted by particles on each wall


@dataclass
class Assembly:
    """Mutable packing state; see the module docstring for conventions."""

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    radius: np.ndarray
    mass: np.ndarray
    inertia: np.ndarray
    walls: Walls
    params: ContactParams
    wall_kn: float
    contacts: ContactSet = field(default_factory=ContactSet.empty)
    kernel: str = "refined"
    projection: bool = True
    twirl: bool = True
    du: np.ndarray | None = None
    dtheta: np.ndarray | None = None
    seed: int | None = None
    wall_forces: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        n = len(self.x)
        if self.du is None:
            self.du = np.zeros((n, 3))
        if self.dtheta is None:
            self.dtheta = np.zeros((n, 3))

    @property
    def n_particles(self) -> int:
        return len(self.x)

    @property
    def volume(self) -> float:
        return self.walls.volume()

    def copy(self) -> "Assembly":
        return replace(self, x=self.x.copy(), v=self.v.copy(), w=self.w.copy(), radius=self.radius.copy(),
                       mass=self.mass.copy(), inertia=self.inertia.copy(), walls=self.walls.copy(),
                       contacts=self.contacts.copy(), du=self.du.copy(), dtheta=self.dtheta.copy(),
                       wall_forces=self.wall_forces.copy())

    def stable_dt(self, safety: float = 0.2) -> float:
        """Documented heuristic ``safety * sqrt(m_min / kn)``."""
        return safety * math.sqrt(self.mass.min() / max(self.params.kn, self.wall_kn))

    def kinetic_energy(self) -> float:
        return float(0.5 * (self.mass @ np.einsum("ij,ij->i", self.v, self.v))
                     + 0.5 * (self.inertia @ np.einsum("ij,ij->i", self.w, self.w)))

    def stress(self) -> np.ndarray:
        return love_weber_stress(self)

    def wall_stress(self) -> np.ndarray:
        """Mean normal stress carried by each pair of opposing walls (compression positive)."""
        ext = self.walls.extents()
        area = np.array([ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[1]])
        pair = self.wall_forces.reshape(3, 2).mean(axis=1)
        return pair / area

    def mobilized_fraction(self, tol: float = 1e-5) -> float:
        """Share of contacts whose friction is within ``tol`` (relative) of the limit."""
        c = self.contacts
        if len(c) == 0:
            return 0.0
        ratio = np.linalg.norm(c.ft, axis=1) / (self.params.mu * self.params.kn * c.zeta)
        return float(np.mean(ratio >= 1 - tol))

    def particles(self) -> list[Particle]:
        return [Particle(k, self.x[k].copy(), float(self.radius[k]), self.v[k].copy(), self.w[k].copy(),
                         float(self.mass[k]), float(self.inertia[k])) for k in range(self.n_particles)]

    def snapshot(self) -> AssemblySnapshot:
        c = self.contacts
        states = {(int(a), int(b)): ContactState(zeta=float(z), ft=f.copy(), n=nn.copy(), sliding=bool(s),
                                                 work=WorkLedger(wt_irrev_total=float(wi)))
                  for a, b, z, f, nn, s, wi in zip(c.i, c.j, c.zeta, c.ft, c.n, c.sliding, c.wt_irrev)}
        return AssemblySnapshot(self.particles(), states, self.volume, self.stress())


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def make_packing(n_particles: int, radius: float, params: ContactParams, *, seed: int,
                 radius_spread: float = 0.15, density: float = 2650.0, solid_fraction: float = 0.3,
                 wall_kn: float | None = None) -> Assembly:
    """Random non-overlapping spheres in a cubic box of walls.

    Radii are uniform in ``radius * (1 +/- radius_spread)``; centers are placed
    by random sequential insertion at the requested solid fraction.
    """
    rng = np.random.default_rng(seed)
    radii = radius * (1 + radius_spread * rng.uniform(-1, 1, n_particles))
    vol = (4 / 3) * math.pi * np.sum(radii ** 3) / solid_fraction
    half = 0.5 * vol ** (1 / 3)
    x = np.zeros((n_particles, 3))
    order = np.argsort(-radii)
    placed: list[int] = []
    for k in order:
        for _ in range(10_000):
            cand = rng.uniform(-half + radii[k], half - radii[k], 3)
            if not placed:
                break
            d = np.linalg.norm(x[placed] - cand, axis=1)
            if np.all(d > radii[placed] + radii[k]):
                break
        else:
            raise DegenerateGeometryError("could not place particles; lower the solid fraction")
        x[k] = cand
        placed.append(k)
    mass = density * (4 / 3) * math.pi * radii ** 3
    inertia = 0.4 * mass * radii ** 2
    walls = Walls.box(np.full(3, -half), np.full(3, half))
    return Assembly(x, np.zeros_like(x), np.zeros_like(x), radii, mass, inertia, walls, params,
                    wall_kn if wall_kn is not None else params.kn, seed=seed)


# ---------------------------------------------------------------------------
# contact detection
# ---------------------------------------------------------------------------

@njit(cache=True)
def _grid_pairs(x, radius, cell):
    """Overlapping pairs ``(i, j)``, ``i < j``, found through a uniform cell grid."""
    n = len(x)
    lo = np.empty(3)
    dims = np.empty(3, np.int64)
    for c in range(3):
        lo[c] = x[:, c].min()
        dims[c] = int((x[:, c].max() - lo[c]) / cell) + 1
    cid = np.empty(n, np.int64)
    cx = np.empty((n, 3), np.int64)
    for k in range(n):
        for c in range(3):
            cx[k, c] = int((x[k, c] - lo[c]) / cell)
        cid[k] = (cx[k, 0] * dims[1] + cx[k, 1]) * dims[2] + cx[k, 2]
    order = np.argsort(cid)
    sorted_ids = cid[order]
    ncell = dims[0] * dims[1] * dims[2]
    start = np.searchsorted(sorted_ids, np.arange(ncell + 1))
    pi = []
    pj = []
    for a in range(n):
        for ox in range(-1, 2):
            gx = cx[a, 0] + ox
            if gx < 0 or gx >= dims[0]:
                continue
            for oy in range(-1, 2):
                gy = cx[a, 1] + oy
                if gy < 0 or gy >= dims[1]:
                    continue
                for oz in range(-1, 2):
                    gz = cx[a, 2] + oz
                    if gz < 0 or gz >= dims[2]:
                        continue
                    g = (gx * dims[1] + gy) * dims[2] + gz
                    for t in range(start[g], start[g + 1]):
                        b = order[t]
                        if b <= a:
                            continue
                        d0 = x[b, 0] - x[a, 0]
                        d1 = x[b, 1] - x[a, 1]
                        d2 = x[b, 2] - x[a, 2]
                        rr = radius[a] + radius[b]
                        if d0 * d0 + d1 * d1 + d2 * d2 < rr * rr:
                            pi.append(a)
                            pj.append(b)
    i = np.array(pi, dtype=np.int64)
    j = np.array(pj, dtype=np.int64)
    key = np.argsort(i * n + j)
    return i[key], j[key]


def detect_contacts(x, radius):
    """Overlapping sphere pairs.

    Returns ``(i, j, zeta, n, point)`` arrays sorted by ``(i, j)`` with
    ``i < j``, ``n`` the unit vector from ``i`` toward ``j`` and ``point``
    the middle of the overlap.  Candidates come from a uniform cell grid of
    the largest diameter, so cost grows near-linearly with particle count.
    """
    x = np.ascontiguousarray(x, dtype=float)
    radius = np.ascontiguousarray(radius, dtype=float)
    if len(x) < 2:
        e = np.zeros((0, 3))
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), e, e
    i, j = _grid_pairs(x, radius, 2.0 * float(radius.max()))
    branch = x[j] - x[i]
    dist = np.sqrt(np.einsum("ij,ij->i", branch, branch))
    if np.any(dist == 0.0):
        k = int(np.argmax(dist == 0.0))
        raise DegenerateGeometryError(f"particles {i[k]} and {j[k]} have coincident centers")
    zeta = radius[i] + radius[j] - dist
    n = branch / dist[:, None]
    point = x[i] + (radius[i] - 0.5 * zeta)[:, None] * n
    return i, j, zeta, n, point


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

@njit(cache=True)
def _accumulate(npart, i, j, f, r_i, r_j):
    force = np.zeros((npart, 3))
    moment = np.zeros((npart, 3))
    for k in range(len(i)):
        a, b = i[k], j[k]
        for c in range(3):
            force[a, c] += f[k, c]
            force[b, c] -= f[k, c]
        moment[a, 0] += r_i[k, 1] * f[k, 2] - r_i[k, 2] * f[k, 1]
        moment[a, 1] += r_i[k, 2] * f[k, 0] - r_i[k, 0] * f[k, 2]
        moment[a, 2] += r_i[k, 0] * f[k, 1] - r_i[k, 1] * f[k, 0]
        moment[b, 0] -= r_j[k, 1] * f[k, 2] - r_j[k, 2] * f[k, 1]
        moment[b, 1] -= r_j[k, 2] * f[k, 0] - r_j[k, 0] * f[k, 2]
        moment[b, 2] -= r_j[k, 0] * f[k, 1] - r_j[k, 1] * f[k, 0]
    return force, moment


def _cross_rows(a, b):
    return np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                     a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                     a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=1)


@njit(cache=True)
def _pair_pass(x, radius, du, dtheta, cell, okeys, ozeta, oft, oslide, owt,
               kn, kt, mu, nu, eps, dt, refined, projection, twirl, tab,
               wall_n, wall_p, wall_shift, wall_kn):
    npart = len(x)
    i, j = _grid_pairs(x, radius, cell)
    m = len(i)
    zeta = np.empty(m)
    n = np.empty((m, 3))
    point = np.empty((m, 3))
    r_i = np.empty((m, 3))
    r_j = np.empty((m, 3))
    du_bar = np.empty((m, 3))
    th_i = np.empty((m, 3))
    th_j = np.empty((m, 3))
    zeta0 = np.zeros(m)
    ft0 = np.zeros((m, 3))
    sl0 = np.zeros(m, np.bool_)
    wt0 = np.zeros(m)
    bad = -1
    for k in range(m):
        a, b = i[k], j[k]
        br = x[b] - x[a]
        dist = math.sqrt(br[0] * br[0] + br[1] * br[1] + br[2] * br[2])
        if dist == 0.0:
            bad = k
            continue
        zeta[k] = radius[a] + radius[b] - dist
        n[k] = br / dist
        point[k] = x[a] + (radius[a] - 0.5 * zeta[k]) * n[k]
        r_i[k] = point[k] - x[a]
        r_j[k] = point[k] - x[b]
        ta, tb = dtheta[a], dtheta[b]
        ri, rj = r_i[k], r_j[k]
        du_bar[k, 0] = du[b, 0] - du[a, 0] + (tb[1] * rj[2] - tb[2] * rj[1]) - (ta[1] * ri[2] - ta[2] * ri[1])
        du_bar[k, 1] = du[b, 1] - du[a, 1] + (tb[2] * rj[0] - tb[0] * rj[2]) - (ta[2] * ri[0] - ta[0] * ri[2])
        du_bar[k, 2] = du[b, 2] - du[a, 2] + (tb[0] * rj[1] - tb[1] * rj[0]) - (ta[0] * ri[1] - ta[1] * ri[0])
        th_i[k] = ta
        th_j[k] = tb
        if len(okeys):
            key = a * npart + b
            pos = np.searchsorted(okeys, key)
            if pos < len(okeys) and okeys[pos] == key:
                zeta0[k] = ozeta[pos]
                ft0[k] = oft[pos]
                sl0[k] = oslide[pos]
                wt0[k] = owt[pos]

    force_c = np.empty((m, 3))
    ft = np.empty((m, 3))
    slid = np.empty(m, np.bool_)
    a_o = np.empty(m)
    a_s = np.empty(m)
    fn = np.empty(m)
    wn = np.empty(m)
    dwt = np.empty(m)
    dwr = np.empty(m)
    dwi = np.empty(m)
    status = _update_rows(zeta0, ft0, sl0, du_bar, n, th_i, th_j, zeta, kn, kt, mu, nu, eps, dt,
                          refined, projection, twirl, tab,
                          force_c, ft, slid, a_o, a_s, fn, wn, dwt, dwr, dwi)
    force, moment = _accumulate(npart, i, j, force_c, r_i, r_j)

    wall_forces = np.zeros(len(wall_n))
    for w in range(len(wall_n)):
        mw = wall_n[w]
        for p in range(npart):
            gap = ((x[p, 0] - wall_p[w, 0]) * mw[0] + (x[p, 1] - wall_p[w, 1]) * mw[1]
                   + (x[p, 2] - wall_p[w, 2]) * mw[2])
            ov = radius[p] - gap
            if ov <= 0:
                continue
            fmag = wall_kn * ov
            if nu > 0:
                approach = -((du[p, 0] * mw[0] + du[p, 1] * mw[1] + du[p, 2] * mw[2]) - wall_shift[w])
                fmag = max(fmag + nu * approach / dt, 0.0)
            for c in range(3):
                force[p, c] += fmag * mw[c]
            wall_forces[w] += fmag
    return (i, j, zeta, n, point, ft, slid, force_c, wt0 + dwi, force, moment, wall_forces,
            status, bad)


def _contact_forces(a: Assembly, dt: float | None, wall_shift: np.ndarray | None = None):
    """Update every contact for the increments ``a.du``/``a.dtheta``; return force and moment sums."""
    npart = a.n_particles
    old = a.contacts
    p = a.params
    if p.nu > 0 and not dt:
        p = replace(p, nu=0.0)
    shift = np.zeros(len(a.walls.normals)) if wall_shift is None else np.asarray(wall_shift, dtype=float)
    (i, j, zeta, n, point, ft, slid, fc, wt, force, moment, wall_forces, status, bad) = _pair_pass(
        a.x, a.radius, a.du, a.dtheta, 2.0 * float(a.radius.max()), old.i * npart + old.j,
        old.zeta, old.ft, old.sliding, old.wt_irrev, p.kn, p.kt, p.mu, p.nu, p.eps,
        float(dt) if dt else 1.0, a.kernel == "refined", a.projection, a.twirl, _TABLE,
        a.walls.normals, a.walls.points, shift, a.wall_kn)
    if bad >= 0:
        raise DegenerateGeometryError(f"particles {i[bad]} and {j[bad]} have coincident centers")
    _raise_status(status)
    a.contacts = ContactSet(i, j, zeta, n, ft, slid, point, fc, wt)
    a.wall_forces = wall_forces
    return force, moment, slid


def step(a: Assembly, dt: float, strain_increment=None) -> StepInfo:
    """Advance one explicit step.

    ``strain_increment`` is an optional diagonal (3,) homogeneous strain
    increment applied affinely to particles and walls before contact forces
    are evaluated (extension positive).
    """
    if not dt > 0:
        raise ContactInputError(f"dt must be positive, got {dt}")
    du = a.v * dt
    wall_shift = None
    if strain_increment is not None:
        de = np.asarray(strain_increment, dtype=float)
        du = du + a.x * de
        old_points = a.walls.points.copy()
        a.walls.points = a.walls.points * (1 + de)
        wall_shift = np.einsum("ij,ij->i", a.walls.points - old_points, a.walls.normals)
    a.x = a.x + du
    a.du = du
    a.dtheta = a.w * dt
    force, moment, slid = _contact_forces(a, dt, wall_shift)
    a.v = a.v + force / a.mass[:, None] * dt
    a.w = a.w + moment / a.inertia[:, None] * dt

    speed = float(np.max(np.abs(a.v))) if a.n_particles else 0.0
    if not np.all(np.isfinite(a.x)) or speed * dt > 0.05 * a.radius.min():
        raise InstabilityError(
            f"integration unstable: max speed {speed:.3g} moves {speed * dt / a.radius.min():.3g} radii per step; "
            f"dt={dt:.3g}, stable estimate {a.stable_dt():.3g}")
    c = a.contacts
    busy = np.zeros(a.n_particles, bool)
    busy[c.i] = busy[c.j] = True
    fmean = float(np.mean(np.linalg.norm(c.force, axis=1))) if len(c) else 0.0
    unbalanced = float(np.max(np.linalg.norm(force[busy], axis=1))) / fmean if fmean > 0 and busy.any() else 0.0
    return StepInfo(a.kinetic_energy(), unbalanced, len(c), int(np.sum(slid)), a.wall_forces.copy())


def run(a: Assembly, dt: float, n_steps: int, strain_increment=None) -> StepInfo:
    info = None
    for _ in range(n_steps):
        info = step(a, dt, strain_increment)
    return info


# ---------------------------------------------------------------------------
# stress
# ---------------------------------------------------------------------------

def love_weber_stress(a: Assembly) -> np.ndarray:
    """``-(1/V) sum l (x) f`` over particle contacts, with ``l = x_j - x_i``.

    ``f = -kn zeta n + ft`` is the spring force on particle ``i``; the minus
    sign makes compression positive.
    """
    V = a.volume
    if not V > 0:
        raise ContactInputError(f"assembly volume must be positive, got {V}")
    c = a.contacts
    if len(c) == 0:
        return np.zeros((3, 3))
    branch = a.x[c.j] - a.x[c.i]
    f = -a.params.kn * c.zeta[:, None] * c.n + c.ft
    return -(branch.T @ f) / V


def internal_force_sum(a: Assembly) -> np.ndarray:
    """Sum of all particle-particle contact forces (zero by action and reaction)."""
    c = a.contacts
    npart = a.n_particles
    zero = np.zeros((len(c), 3))
    force, _ = _accumulate(npart, c.i, c.j, c.force, zero, zero)
    return force.sum(axis=0)


# ---------------------------------------------------------------------------
# loading programs
# ---------------------------------------------------------------------------

def mean_stress(sigma) -> float:
    return float(np.trace(sigma)) / 3.0


def overlap_strain(a: Assembly, p: float) -> float:
    """Strain scale ``p * d / kn`` at which contact overlaps carry mean stress ``p``.

    ``d`` is the mean particle diameter.  Servo rates are expressed in this
    unit so loading programs behave alike at any stiffness level.
    """
    return p * 2.0 * float(a.radius.mean()) / a.params.kn


def compress_isotropic(a: Assembly, dt: float, p_target: float, *, gain: float = 0.01,
                       max_rate: float = 2e-5, max_steps: int = 200_000, tol: float = 0.02,
                       kinetic_damping: bool = False) -> int:
    """Servo the box isotropically until ``p`` settles near ``p_target``.

    The per-step strain is ``gain * (p_target - p)`` in overlap-strain units,
    clipped to ``max_rate``; the box shrinks or grows as needed.  With
    ``kinetic_damping`` velocities are zeroed at kinetic-energy peaks (see
    ``relax``), which keeps a packing jammed while it is unloaded.  Returns
    the number of steps taken.
    """
    unit = overlap_strain(a, 1.0)
    damper = _KineticDamper() if kinetic_damping else None
    for k in range(max_steps):
        p = mean_stress(a.stress())
        if abs(p_target - p) < tol * p_target and a.kinetic_energy() < 1e-6 * p_target * a.volume:
            return k
        rate = float(np.clip(gain * (p_target - p) * unit, -max_rate, max_rate))
        info = step(a, dt, np.full(3, -rate))
        if damper:
            damper(a, info)
    return max_steps


class _KineticDamper:
    """Zero all velocities whenever the total kinetic energy passes a peak."""

    def __init__(self):
        self.last = 0.0

    def __call__(self, a: Assembly, info: StepInfo) -> None:
        if info.kinetic_energy < self.last:
            a.v[:] = 0.0
            a.w[:] = 0.0
            self.last = 0.0
        else:
            self.last = info.kinetic_energy


def shear_to(a: Assembly, dt: float, q_over_p: float, *, p_target: float | None = None,
             axial_rate: float | None = None, gain: float = 0.05, max_steps: int = 400_000) -> int:
    """Compress along x1 with lateral walls servoed to hold the mean stress.

    ``axial_rate`` is the axial strain per step; by default 0.005 overlap
    strains of ``p_target``.  Stops when the Love-Weber ratio
    ``(s11 - (s22 + s33)/2) / p`` reaches ``q_over_p``.
    """
    s = a.stress()
    p_target = p_target if p_target is not None else mean_stress(s)
    unit = overlap_strain(a, 1.0)
    if axial_rate is None:
        axial_rate = 0.005 * p_target * unit
    for k in range(max_steps):
        s = a.stress()
        p = mean_stress(s)
        q = s[0, 0] - 0.5 * (s[1, 1] + s[2, 2])
        if p > 0 and q / p >= q_over_p:
            return k
        lat = float(np.clip(gain * (p - p_target) * unit, -10 * axial_rate, 10 * axial_rate))
        step(a, dt, np.array([-axial_rate, lat, lat]))
    return max_steps


def relax(a: Assembly, dt: float, *, max_steps: int = 200_000, unbalanced_tol: float = 1e-6,
          check_every: int = 50, kinetic_damping: bool = True) -> tuple[int, float]:
    """Hold the boundary still until the largest unbalanced force drops below tolerance.

    With ``kinetic_damping`` every particle velocity is zeroed whenever the
    total kinetic energy passes a peak, which removes the motion of
    contact-free particles that contact damping cannot reach.  Returns the
    number of steps taken and the final unbalanced-force ratio.
    """
    info = None
    damper = _KineticDamper() if kinetic_damping else None
    for k in range(max_steps):
        info = step(a, dt)
        if damper:
            damper(a, info)
        if k % check_every == 0 and info.max_unbalanced < unbalanced_tol:
            return k + 1, info.max_unbalanced
    return max_steps, info.max_unbalanced if info else math.inf


def damping_coefficient(radius: float, density: float, kn: float, ratio: float) -> float:
    """Contact dashpot giving critical-damping ``ratio`` for a pair of equal spheres.

    Uses the reduced mass ``m/2`` of two spheres of the given radius.
    """
    m = density * 4.0 / 3.0 * math.pi * radius ** 3
    return ratio * 2.0 * math.sqrt(0.5 * m * kn)


def prepare_anisotropic(n_particles: int, radius: float, params: ContactParams, *, seed: int,
                        p0: float, q_over_p: float, p_compact: float | None = None,
                        radius_spread: float = 0.15, density: float = 2650.0,
                        relax_tol: float = 1e-9) -> Assembly:
    """Build a packing in static equilibrium under anisotropic stress.

    Random insertion, isotropic compression to ``p_compact`` (default
    ``p0``), isotropic servo to ``p0``, then axial compression with the
    lateral walls servoed to hold ``p0`` until ``q/p`` reaches
    ``q_over_p``, and relaxation to an unbalanced-force ratio below
    ``relax_tol``.  Compacting at a higher pressure first lets stiff, lightly
    stressed packings be built in few steps.  Deterministic for a given seed.

    Raises
    ------
    RuntimeError
        If any stage fails to converge within its step budget.
    """
    a = make_packing(n_particles, radius, params, seed=seed, radius_spread=radius_spread,
                     density=density)
    dt = a.stable_dt()
    for target in ([p_compact] if p_compact else []) + [p0]:
        if compress_isotropic(a, dt, target) >= 200_000:
            raise RuntimeError(f"isotropic servo did not settle at p = {target}")
    if shear_to(a, dt, q_over_p, p_target=p0) >= 400_000:
        raise RuntimeError(f"shear did not reach q/p = {q_over_p}")
    _, unbalanced = relax(a, dt, unbalanced_tol=relax_tol)
    if unbalanced >= relax_tol:
        raise RuntimeError(f"relaxation stalled at unbalanced ratio {unbalanced:.3g}")
    return a


# ---------------------------------------------------------------------------
# rigid rotation
# ---------------------------------------------------------------------------

def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


@dataclass
class RotationResult:
    sigma_before: np.ndarray
    sigma_rotated: np.ndarray
    sigma_restored: np.ndarray
    rotation: np.ndarray

    @property
    def relative_error(self) -> float:
        return float(np.linalg.norm(self.sigma_restored - self.sigma_before)
                     / np.linalg.norm(self.sigma_before))


def rigid_rotate_experiment(a: Assembly, axis, total_angle: float, n_increments: int, *,
                            projection: bool = True, twirl: bool = True) -> RotationResult:
    """Rotate the whole packing (particles and walls) rigidly about ``axis`` through the box center.

    Each increment applies the exact rotation to positions and the rotation
    vector ``angle * axis`` to every particle.  The translation increments
    handed to the contact model are ``angle * axis x (x - center)`` at the
    rotated positions, so each pair sees no relative movement and only the
    corrections act on the stored forces.  Contact forces are updated
    through the contact model with the chosen corrections and no damping.
    The input assembly is not modified.
    """
    b = a.copy()
    b.projection, b.twirl = projection, twirl
    b.params = replace(b.params, nu=0.0)
    b.v[:] = 0.0
    b.w[:] = 0.0
    sigma0 = love_weber_stress(b)
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    center = b.walls.points.mean(axis=0)
    total = np.eye(3)
    if n_increments > 0 and total_angle != 0.0:
        d = total_angle / n_increments
        R = rotation_matrix(axis, d)
        for _ in range(n_increments):
            b.x = (b.x - center) @ R.T + center
            # rotation generator at end-of-step positions: with end-of-step lever
            # arms this makes the relative contact movement vanish to roundoff
            b.du = _cross_rows(np.tile(d * axis, (b.n_particles, 1)), b.x - center)
            b.dtheta = np.tile(d * axis, (b.n_particles, 1))
            b.walls.normals = b.walls.normals @ R.T
            b.walls.points = (b.walls.points - center) @ R.T + center
            _contact_forces(b, None)
            total = R @ total
    sigma = love_weber_stress(b)
    return RotationResult(sigma0, sigma, total.T @ sigma @ total, total)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

_PARTICLE_COLS = ("id x_m y_m z_m radius_m vx_m/s vy_m/s vz_m/s wx_rad/s wy_rad/s wz_rad/s "
                  "mass_kg inertia_kg.m2")
_CONTACT_COLS = "i j zeta_m nx ny nz ftx_N fty_N ftz_N sliding wt_irrev_J"
_WALL_COLS = "nx ny nz px_m py_m pz_m"


def save_snapshot(a: Assembly, path) -> None:
    """Write the assembly as delimited text (header block, walls, particles, contacts)."""
    path = Path(path)
    p = a.params
    c = a.contacts
    lines = [f"# linfric snapshot v{SNAPSHOT_VERSION}",
             f"# seed={a.seed}",
             f"# kn_N/m={p.kn!r} kt_N/m={p.kt!r} mu={p.mu!r} nu_N.s/m={p.nu!r} eps={p.eps!r} "
             f"wall_kn_N/m={a.wall_kn!r}",
             f"# kernel={a.kernel} projection={int(a.projection)} twirl={int(a.twirl)}"]
    fmt = "%.17g"

    def block(title, cols, arr):
        lines.append(f"## {title} {len(arr)}")
        lines.append(cols)
        lines.extend(" ".join(fmt % v for v in row) for row in arr)

    block("walls", _WALL_COLS, np.hstack([a.walls.normals, a.walls.points]))
    ids = np.arange(a.n_particles, dtype=float)[:, None]
    block("particles", _PARTICLE_COLS, np.hstack([ids, a.x, a.radius[:, None], a.v, a.w,
                                                  a.mass[:, None], a.inertia[:, None]]))
    block("contacts", _CONTACT_COLS, np.hstack([c.i[:, None], c.j[:, None], c.zeta[:, None], c.n, c.ft,
                                                c.sliding[:, None], c.wt_irrev[:, None]]))
    path.write_text("\n".join(lines) + "\n")


def load_snapshot(path) -> Assembly:
    text = Path(path).read_text().splitlines()
    meta = {}
    for line in text:
        if line.startswith("# ") and "=" in line:
            for tok in line[2:].split():
                k, v = tok.split("=", 1)
                meta[k] = v
    blocks = {}
    k = 0
    while k < len(text):
        line = text[k]
        if line.startswith("## "):
            _, name, count = line.split()
            rows = [list(map(float, r.split())) for r in text[k + 2:k + 2 + int(count)]]
            blocks[name] = np.array(rows, dtype=float).reshape(int(count), -1)
            k += 2 + int(count)
        else:
            k += 1
    params = ContactParams(float(meta["kn_N/m"]), float(meta["kt_N/m"]), float(meta["mu"]),
                           float(meta["nu_N.s/m"]), float(meta["eps"]))
    wl, pt, ct = blocks["walls"], blocks["particles"], blocks["contacts"]
    if len(ct) == 0:
        ct = np.zeros((0, 11))
    contacts = ContactSet(ct[:, 0].astype(np.int64), ct[:, 1].astype(np.int64), ct[:, 2], ct[:, 3:6],
                          ct[:, 6:9], ct[:, 9].astype(bool), np.zeros((len(ct), 3)), np.zeros((len(ct), 3)),
                          ct[:, 10])
    a = Assembly(pt[:, 1:4], pt[:, 5:8], pt[:, 8:11], pt[:, 4], pt[:, 11], pt[:, 12],
                 Walls(wl[:, :3], wl[:, 3:6]), params, float(meta["wall_kn_N/m"]), contacts,
                 kernel=meta["kernel"], projection=meta["projection"] == "1", twirl=meta["twirl"] == "1",
                 seed=None if meta["seed"] == "None" else int(meta["seed"]))
    # contact points are derived geometry
    if len(contacts):
        xi = a.x[contacts.i]
        contacts.point = xi + (a.radius[contacts.i] - 0.5 * contacts.zeta)[:, None] * contacts.n
    return a
