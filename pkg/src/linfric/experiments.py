"""Single-contact experiments shared by the CLI, the tests and the acceptance suite.

Everything here draws its randomness from a caller-supplied
``numpy.random.Generator`` so results are reproducible from one seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracles
from .contact_model import ContactParams, ContactState, conventional_update, update_contact
from .kinematics import StepKinematics, cross3
from .slip_solver import SlipOnsetInput, slip_onset

Z = np.array([0.0, 0.0, 1.0])
X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])


def _unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _in_plane(rng, n) -> np.ndarray:
    v = rng.normal(size=3)
    v -= (v @ n) * n
    return v / np.linalg.norm(v)


def _rotate(v, axis, angle):
    return (v * math.cos(angle) + cross3(axis, v) * math.sin(angle)
            + axis * (axis @ v) * (1 - math.cos(angle)))


def signed_angle(a, b, n=Z) -> float:
    """Signed angle from ``a`` to ``b`` about ``n``, in degrees."""
    return math.degrees(math.atan2(float(cross3(a, b) @ n), float(a @ b)))


# ---------------------------------------------------------------------------
# random cases
# ---------------------------------------------------------------------------

def random_contact_case(rng, params: ContactParams, *, p_fresh=0.15, p_open=0.05, p_sliding=0.3,
                        max_tilt=0.05):
    """A random (state, kinematics, zeta_end) triple exercising every update branch."""
    n0 = _unit(rng)
    tilt_axis = _in_plane(rng, n0)
    n1 = _rotate(n0, tilt_axis, rng.uniform(0, max_tilt))
    n1 /= np.linalg.norm(n1)
    u = rng.random()
    if u < p_fresh:
        zeta0 = -rng.uniform(0, 0.5)
        zeta_end = rng.uniform(1e-3, 1.0)
        d_zeta = (zeta_end - zeta0) * rng.uniform(1.0, 2.0)
        state = ContactState(zeta=zeta0, n=n0)
    else:
        zeta0 = rng.uniform(0.2, 1.5)
        zeta_end = -rng.uniform(0, 0.1) if u > 1 - p_open else zeta0 * (1 + rng.uniform(-0.5, 0.5))
        d_zeta = zeta_end - zeta0
        limit0 = params.mu * params.kn * zeta0
        on_limit = rng.random() < p_sliding
        mag = limit0 if on_limit else limit0 * rng.random()
        state = ContactState(zeta=zeta0, ft=mag * _in_plane(rng, n0), n=n0, sliding=on_limit)
    scale = params.mu * params.kn * max(zeta_end, 0.1) / params.kt
    d_xi = scale * 10 ** rng.uniform(-3, 1) * _in_plane(rng, n1)
    du_bar = d_xi - d_zeta * n1
    spin = rng.normal(size=(2, 3)) * rng.choice([0.0, 1e-3, 0.1])
    kin = StepKinematics.from_relative(du_bar, n1, spin[0], spin[1])
    return state, kin, zeta_end


def random_onset_input(rng, kind: str = "generic") -> SlipOnsetInput:
    """A random admissible input that slips within the step.

    ``kind`` is ``"generic"``, ``"on_limit"`` (C = 0) or ``"balanced"`` (A = 0).
    """
    kn, kt, mu = 10 ** rng.uniform(-1, 1, size=3)
    mu = min(mu, 2.0)
    while True:
        fn = 10 ** rng.uniform(-1, 1)
        dz = rng.uniform(-0.8, 0.8) * fn / kn
        phi = rng.uniform(0, 2 * math.pi)
        if kind == "balanced":
            dz = -abs(dz)
            frac = rng.uniform(0.05, 0.95)
            ft = frac * mu * fn * np.array([math.cos(phi), math.sin(phi), 0.0])
            dxi = (mu * kn * abs(dz) / kt) * np.array([-math.sin(phi), math.cos(phi), 0.0])
        else:
            frac = 1.0 if kind == "on_limit" else rng.uniform(0, 1)
            ft = frac * mu * fn * np.array([math.cos(phi), math.sin(phi), 0.0])
            psi = rng.uniform(0, 2 * math.pi)
            dxi = 10 ** rng.uniform(-1, 1) * mu * fn / kt * np.array([math.cos(psi), math.sin(psi), 0.0])
        end = np.linalg.norm(ft + kt * dxi) - mu * (fn + kn * dz)
        if end > 1e-3 * mu * fn:
            inp = SlipOnsetInput(fn, ft, dz, dxi, kn, kt, mu)
            if kind != "on_limit" or inp.coefficients()[1] > 0:
                return inp


@dataclass
class OnsetCheck:
    alpha: float
    oracle: float
    residual: float


def check_onset(inp: SlipOnsetInput, n_sub: int = 1_000_000) -> OnsetCheck:
    """Onset fraction, its substep oracle and the relative limit residual."""
    a = slip_onset(inp)
    a = 1.0 if a is None else a
    f = np.linalg.norm(inp.ft_t + a * inp.kt * inp.d_xi)
    lim = inp.mu * (inp.fn_t + a * inp.kn * inp.d_zeta)
    scan = oracles.onset_scan(inp.fn_t, inp.ft_t, inp.d_zeta, inp.d_xi, inp.kn, inp.kt, inp.mu, n_sub)
    # the scan reports the first violated substep, so it sits up to one substep after the root
    return OnsetCheck(a, scan, abs(f - lim) / max(lim, 1e-300))


# ---------------------------------------------------------------------------
# perpendicular-movement sweep
# ---------------------------------------------------------------------------

def fig4_sweep(ratios, *, n_sub: int = 1_000_000, fn: float = 1.0, mu: float = 0.5,
               kt: float = 1.0, kn: float = 1.0) -> list[dict]:
    """Final force angle after a movement perpendicular to a force on the limit.

    The force starts at -90 degrees from the movement, the normal force is
    constant and the movement size is ``ratio * mu * fn / kt``.  Angles are
    measured from the movement direction, in degrees.
    """
    params = ContactParams(kn=kn, kt=kt, mu=mu)
    zeta = fn / kn
    ft0 = -mu * fn * Y
    state = ContactState(zeta=zeta, ft=ft0, n=Z, sliding=True)
    rows = []
    for r in ratios:
        d_xi = r * mu * fn / kt * X
        kin = StepKinematics.from_relative(d_xi, Z)
        _, ref = update_contact(state, params, kin, zeta)
        _, conv = conventional_update(state, params, kin, zeta)
        f_or, _ = oracles.substep_slide(ft0, fn, 0.0, d_xi, kn, kt, mu, n_sub)
        closed = -2 * math.degrees(math.atan(math.exp(-r)))
        rows.append(dict(ratio=float(r), refined=signed_angle(X, ref.ft_end),
                         conventional=signed_angle(X, conv.ft_end),
                         oracle=signed_angle(X, f_or), closed_form=closed))
    return rows


# ---------------------------------------------------------------------------
# substep convergence
# ---------------------------------------------------------------------------

def random_sliding_step(rng, params: ContactParams):
    """A random established contact and an in-plane step that slides."""
    while True:
        zeta0 = rng.uniform(0.5, 1.5)
        zeta_end = zeta0 * (1 + rng.uniform(-0.3, 0.3))
        limit0 = params.mu * params.kn * zeta0
        phi = rng.uniform(math.radians(5), math.radians(175)) * rng.choice([-1, 1])
        frac = 1.0 if rng.random() < 0.5 else rng.uniform(0.3, 1.0)
        ft0 = frac * limit0 * np.array([math.cos(phi), math.sin(phi), 0.0])
        d_xi = 10 ** rng.uniform(-0.7, 0.5) * limit0 / params.kt * X
        if np.linalg.norm(ft0 + params.kt * d_xi) > params.mu * params.kn * zeta_end * 1.01:
            return ContactState(zeta=zeta0, ft=ft0, n=Z, sliding=frac == 1.0), d_xi, zeta_end


def substepped_conventional(state, params, d_xi, zeta_end, n_sub: int) -> np.ndarray:
    """Run ``conventional_update`` over ``n_sub`` equal slices of one step."""
    s = state
    z0 = state.zeta
    for k in range(1, n_sub + 1):
        kin = StepKinematics.from_relative(d_xi / n_sub, Z)
        s, _ = conventional_update(s, params, kin, z0 + (zeta_end - z0) * k / n_sub)
    return s.ft


def substep_convergence(rng, n_cases: int = 100, levels=tuple(2 ** k for k in range(11)),
                        params: ContactParams | None = None) -> np.ndarray:
    """Direction error (degrees) of the substepped conventional kernel.

    Returns an ``(n_cases, len(levels))`` array measured against the refined
    single-step result.
    """
    params = params or ContactParams(kn=1.0, kt=1.0, mu=0.5)
    errs = np.empty((n_cases, len(levels)))
    for i in range(n_cases):
        state, d_xi, zeta_end = random_sliding_step(rng, params)
        _, ref = update_contact(state, params, StepKinematics.from_relative(d_xi, Z), zeta_end)
        for j, n in enumerate(levels):
            ft = substepped_conventional(state, params, d_xi, zeta_end, n)
            errs[i, j] = abs(signed_angle(ref.ft_end, ft))
    return errs


# ---------------------------------------------------------------------------
# energy bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class EnergyCheck:
    work: float            # path work done on the contact (substep oracle), incl. initial store
    stored: float          # elastic energy held at the end
    dissipated: float      # sum of dissipation increments
    min_increment: float   # most negative dissipation increment

    @property
    def relative_error(self) -> float:
        return abs(self.work - self.stored - self.dissipated) / (self.stored + self.dissipated)


def energy_trajectory(rng, params: ContactParams, n_steps: int = 10, n_sub: int = 2000,
                      max_ratio: float = 0.5) -> EnergyCheck:
    """One random multi-step trajectory with a fixed normal that stays in contact."""
    zetas = [rng.uniform(0.5, 1.5)]
    for _ in range(n_steps):
        zetas.append(zetas[-1] * (1 + rng.uniform(-0.15, 0.15)))
    moves = np.zeros((n_steps, 3))
    state = ContactState(zeta=zetas[0], n=Z)
    dis, worst = 0.0, math.inf
    for k in range(n_steps):
        size = rng.uniform(0, max_ratio) * params.mu * params.kn * zetas[k] / params.kt
        psi = rng.uniform(0, 2 * math.pi)
        moves[k] = size * np.array([math.cos(psi), math.sin(psi), 0.0])
        kin = StepKinematics.from_relative(moves[k] - (zetas[k + 1] - zetas[k]) * Z, Z)
        state, res = update_contact(state, params, kin, zetas[k + 1])
        dis += res.dwt_irrev
        worst = min(worst, res.dwt_irrev)
    _, w = oracles.substep_trajectory(moves, zetas[1:], np.zeros(3), zetas[0],
                                      params.kn, params.kt, params.mu, n_sub)
    w0 = 0.5 * params.kn * zetas[0] ** 2
    stored = 0.5 * params.kn * zetas[-1] ** 2 + (state.ft @ state.ft) / (2 * params.kt)
    return EnergyCheck(w0 + w, stored, dis, worst)


# ---------------------------------------------------------------------------
# fuzzing
# ---------------------------------------------------------------------------

@dataclass
class FuzzReport:
    cases: int
    limit_violations: int
    plane_violations: int
    worst_limit_ratio: float
    worst_plane_ratio: float

    @property
    def ok(self) -> bool:
        return self.limit_violations == 0 and self.plane_violations == 0


def fuzz_contacts(rng, n_cases: int, params: ContactParams | None = None, *,
                  projection: bool = True, twirl: bool = True) -> FuzzReport:
    """Random ``update_contact`` calls checked for the friction limit and the tangent plane."""
    params = params or ContactParams(kn=1.0, kt=0.8, mu=0.5)
    lim_bad = plane_bad = 0
    worst_lim = worst_plane = 0.0
    for _ in range(n_cases):
        state, kin, zeta_end = random_contact_case(rng, params)
        _, res = update_contact(state, params, kin, zeta_end, projection=projection, twirl=twirl)
        ft = res.ft_end
        mag = float(np.linalg.norm(ft))
        if mag == 0.0:
            continue
        lim_ratio = mag / (params.mu * res.fn_end)
        plane_ratio = abs(float(ft @ kin.n)) / mag
        worst_lim = max(worst_lim, lim_ratio)
        worst_plane = max(worst_plane, plane_ratio)
        lim_bad += lim_ratio > 1 + params.eps
        plane_bad += plane_ratio > params.eps
    return FuzzReport(n_cases, lim_bad, plane_bad, worst_lim, worst_plane)
