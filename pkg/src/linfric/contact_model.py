"""Per-step update of a linear-frictional contact.

``update_contact`` is the refined update: it truncates the movement that
precedes first touch, locates the instant at which an elastic tangential
force reaches the friction circle, evolves the direction of the sliding
force through the rest of the step, and then corrects the force for the
rotation of the tangent plane (projection) and for the pair's common
spin about the normal (twirl).  ``conventional_update`` is the usual
add-then-cap rule, with the same end-of-step corrections available so that
their effect can be isolated.

Sign conventions
----------------
``n`` points from ``p`` to ``q``; ``zeta > 0`` is overlap.  The total force
``-fn * n + ft`` is the force exerted *on p* by q (the tangential spring
resists q's movement relative to p).

``update_contacts`` is a vectorized version over many contacts for the
assembly engine; it follows the same arithmetic as the scalar path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .errors import ContactInputError
from .kinematics import StepKinematics, cross3, decompose_movement, relative_contact_movement, tangent_basis
from .slip_solver import (
    DEFAULT_EPS,
    CscCotTable,
    SlipOnsetInput,
    default_table,
    direction_decay,
    fresh_contact_fraction,
    slip_onset,
)

THETA_EDGE = 1e-12


@dataclass(frozen=True)
class ContactParams:
    """Stiffnesses ``kn``, ``kt``, friction ``mu``, contact damping ``nu``, tolerance ``eps``."""

    kn: float
    kt: float
    mu: float
    nu: float = 0.0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not (self.kn > 0 and self.kt > 0 and self.mu > 0 and self.eps > 0 and self.nu >= 0):
            raise ContactInputError(f"invalid contact parameters {self}")
        for v in (self.kn, self.kt, self.mu, self.nu, self.eps):
            if not math.isfinite(v):
                raise ContactInputError(f"non-finite contact parameter in {self}")


@dataclass(frozen=True)
class WorkLedger:
    wn: float = 0.0
    wt_total: float = 0.0
    wt_rev_total: float = 0.0
    wt_irrev_total: float = 0.0
    last_dwt: float = 0.0
    last_dwt_rev: float = 0.0
    last_dwt_irrev: float = 0.0

    def advance(self, wn, dwt, dwt_rev, dwt_irrev) -> "WorkLedger":
        return WorkLedger(wn, self.wt_total + dwt, self.wt_rev_total + dwt_rev,
                          self.wt_irrev_total + dwt_irrev, dwt, dwt_rev, dwt_irrev)


@dataclass(frozen=True)
class ContactState:
    """Persistent per-contact record.  ``zeta <= 0`` means not touching."""

    zeta: float = 0.0
    ft: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    sliding: bool = False
    work: WorkLedger = field(default_factory=WorkLedger)

    def fn(self, params: ContactParams) -> float:
        return params.kn * max(self.zeta, 0.0)


@dataclass(frozen=True)
class ContactUpdateResult:
    force_total: np.ndarray
    fn_end: float
    ft_end: np.ndarray
    slid: bool
    alpha_o: float | None = None
    alpha_s: float | None = None
    theta_t: float | None = None
    theta_end: float | None = None
    wn: float = 0.0
    dwt: float = 0.0
    dwt_rev: float = 0.0
    dwt_irrev: float = 0.0


# ---------------------------------------------------------------------------
# end-of-step corrections
# ---------------------------------------------------------------------------

def project_and_twirl(ft, n, dtheta_p, dtheta_q, *, projection: bool = True,
                      twirl: bool = True) -> np.ndarray:
    """Return ``ft`` projected onto the plane normal to ``n`` and spun with the pair.

    The twirl angle is the mean of the two particles' rotation increments
    about ``n``.  The spin is applied as a finite rotation about ``n``
    (Rodrigues form); to first order in the angle it is
    ``ft - phi * (ft x n)``, and unlike that linear form it leaves
    ``|ft|`` unchanged.
    """
    ft = np.asarray(ft, dtype=float)
    n = np.asarray(n, dtype=float)
    if projection:
        ft = ft - (ft @ n) * n
    if twirl:
        phi = 0.5 * float((np.asarray(dtheta_p) + np.asarray(dtheta_q)) @ n)
        if phi != 0.0:
            along = (ft @ n) * n
            perp = ft - along
            ft = along + math.cos(phi) * perp + math.sin(phi) * cross3(n, perp)
    return ft


def apply_damping(force_total, du_bar, dt: float, nu: float) -> np.ndarray:
    """Add the contact damping force ``nu * du_bar / dt``."""
    if nu == 0.0:
        return np.asarray(force_total, dtype=float)
    if not dt > 0:
        raise ContactInputError(f"dt must be positive for damping, got {dt}")
    return np.asarray(force_total, dtype=float) + nu * np.asarray(du_bar, dtype=float) / dt


def tangential_work_split(ft_start, ft_end, d_xi_slide, kt: float, slid: bool,
                          ft_onset=None, ft_slide_end=None) -> tuple[float, float, float]:
    """Total, reversible and dissipated tangential work over one step.

    Parameters
    ----------
    ft_start, ft_end : array_like
        Tangential force at the start and (final, corrected) end of step.
    d_xi_slide : array_like
        Tangential movement after slip onset.
    slid : bool
        Whether the contact slid during the step.
    ft_onset : array_like, optional
        Force at the instant sliding began; defaults to ``ft_start``.
    ft_slide_end : array_like, optional
        End-of-sliding force before the plane corrections; defaults to
        ``ft_end``.

    Notes
    -----
    Movement before slip onset is elastic and its work is the change of
    spring energy.  Sliding work is the movement dotted with the mean of the
    forces at slip onset and at the end of sliding.
    """
    ft_start = np.asarray(ft_start, dtype=float)
    ft_end = np.asarray(ft_end, dtype=float)
    dwt_rev = (ft_end @ ft_end - ft_start @ ft_start) / (2.0 * kt)
    if not slid:
        return dwt_rev, dwt_rev, 0.0
    f_on = ft_start if ft_onset is None else np.asarray(ft_onset, dtype=float)
    f_se = ft_end if ft_slide_end is None else np.asarray(ft_slide_end, dtype=float)
    dwt = (f_on @ f_on - ft_start @ ft_start) / (2.0 * kt)
    dwt += float(np.asarray(d_xi_slide, dtype=float) @ (f_on + f_se)) / 2.0
    return dwt, dwt_rev, dwt - dwt_rev


# ---------------------------------------------------------------------------
# scalar updates
# ---------------------------------------------------------------------------

def _opened(state: ContactState, n, zeta_end) -> tuple[ContactState, ContactUpdateResult]:
    new = replace(state, zeta=zeta_end, ft=np.zeros(3), n=n, sliding=False,
                  work=state.work.advance(0.0, 0.0, 0.0, 0.0))
    return new, ContactUpdateResult(np.zeros(3), 0.0, np.zeros(3), False)


def _finish(state, params, kin, du_bar, zeta_end, fn_end, ft_start, ft_slide_end, works,
            slid, dt, projection, twirl, **extra):
    ft_end = project_and_twirl(ft_slide_end, kin.n, kin.dtheta_p, kin.dtheta_q,
                               projection=projection, twirl=twirl)
    force = -fn_end * kin.n + ft_end
    if params.nu > 0:
        if dt is None:
            raise ContactInputError("dt is required when contact damping nu > 0")
        force = apply_damping(force, du_bar, dt, params.nu)
    d_xi_slide, ft_onset = works
    dwt, dwt_rev, dwt_irrev = tangential_work_split(
        ft_start, ft_end, d_xi_slide, params.kt, slid, ft_onset=ft_onset, ft_slide_end=ft_slide_end)
    wn = fn_end * fn_end / (2.0 * params.kn)
    new = ContactState(zeta=zeta_end, ft=ft_end, n=kin.n, sliding=slid,
                       work=state.work.advance(wn, dwt, dwt_rev, dwt_irrev))
    res = ContactUpdateResult(force, fn_end, ft_end, slid, wn=wn, dwt=dwt, dwt_rev=dwt_rev,
                              dwt_irrev=dwt_irrev, **extra)
    return new, res


def update_contact(state: ContactState, params: ContactParams, kin: StepKinematics,
                   zeta_end: float, *, dt: float | None = None, projection: bool = True,
                   twirl: bool = True, table: CscCotTable | None = None,
                   ) -> tuple[ContactState, ContactUpdateResult]:
    """Refined contact update over one step.

    Returns the new state and the step result; ``state`` itself is not
    modified.  ``dt`` is needed only when ``params.nu > 0``.

    The normal force is taken to vary linearly through the step between
    ``kn * zeta_start`` and ``kn * zeta_end``, so the slip-onset quadratic
    and the sliding ODE use ``zeta_end - zeta_start`` as the normal
    approach of an established contact.
    """
    if not math.isfinite(zeta_end):
        raise ContactInputError(f"non-finite zeta_end {zeta_end}")
    n = kin.n
    du_bar = relative_contact_movement(kin)
    if zeta_end <= 0:
        return _opened(state, n, zeta_end)

    kn, kt, mu, eps = params.kn, params.kt, params.mu, params.eps
    dec = decompose_movement(du_bar, n)
    d_xi = dec.d_xi
    fn_end = kn * zeta_end
    limit = mu * fn_end
    fresh = state.zeta <= 0

    if fresh:
        alpha_o = fresh_contact_fraction(zeta_end, dec.d_zeta, state.zeta)
        d_xi = (1.0 - alpha_o) * d_xi
        ft_start = np.zeros(3)
        trial = kt * d_xi
        mag = float(np.linalg.norm(trial))
        slid = mag > limit
        # force and limit both grow linearly from zero: slides all along or never
        ft = trial * (limit / mag) if slid else trial
        return _finish(state, params, kin, du_bar, zeta_end, fn_end, ft_start, ft,
                       (d_xi, ft_start), slid, dt, projection, twirl, alpha_o=alpha_o)

    ft_start = np.asarray(state.ft, dtype=float)
    fn_start = kn * state.zeta
    d_zeta = zeta_end - state.zeta
    trial = ft_start + kt * d_xi
    mag = float(np.linalg.norm(trial))
    if mag <= limit * (1.0 + eps):
        return _finish(state, params, kin, du_bar, zeta_end, fn_end, ft_start, trial,
                       (None, None), False, dt, projection, twirl, alpha_o=0.0)

    alpha_s = slip_onset(SlipOnsetInput(fn_start, ft_start, d_zeta, d_xi, kn, kt, mu, eps))
    if alpha_s is None:
        alpha_s = 1.0
    fn_s = fn_start + alpha_s * kn * d_zeta
    ft_s = ft_start + alpha_s * kt * d_xi
    rem_xi = (1.0 - alpha_s) * d_xi
    rem_len = float(np.linalg.norm(rem_xi))
    fs_len = float(np.linalg.norm(ft_s))
    theta_t = theta_end = None

    if rem_len <= eps * max(float(np.linalg.norm(d_xi)), 1e-300) or fn_s <= 0:
        # no movement left to turn the force: radial return onto the circle
        direction = ft_s / fs_len if fs_len > 0 else d_xi / np.linalg.norm(d_xi)
        ft = limit * direction
    else:
        m_dxi, m_perp = tangent_basis(rem_xi, n)
        if fs_len > 0:
            theta_t = math.atan2(float(m_perp @ ft_s), float(m_dxi @ ft_s))
        else:
            theta_t = 0.0
        theta_t = max(-math.pi + THETA_EDGE, min(math.pi - THETA_EDGE, theta_t))
        c1 = mu * fn_s / (kt * rem_len)
        c2 = (fn_end - fn_s) / fn_s
        theta_end = _final_angle(theta_t, c1, c2, table, eps)
        ft = limit * (math.sin(theta_end) * m_perp + math.cos(theta_end) * m_dxi)

    alpha_report = None if (state.sliding and alpha_s == 0.0) else alpha_s
    return _finish(state, params, kin, du_bar, zeta_end, fn_end, ft_start, ft,
                   (rem_xi, ft_s), True, dt, projection, twirl, alpha_o=0.0,
                   alpha_s=alpha_report, theta_t=theta_t, theta_end=theta_end)


def _final_angle(theta_t, c1, c2, table, eps):
    if theta_t == 0.0:
        return 0.0
    table = table or default_table()
    decay = direction_decay(c1, c2, eps)
    return math.copysign(table.inverse(table.lookup(abs(theta_t)) - decay), theta_t)


def conventional_update(state: ContactState, params: ContactParams, kin: StepKinematics,
                        zeta_end: float, *, dt: float | None = None, projection: bool = True,
                        twirl: bool = True) -> tuple[ContactState, ContactUpdateResult]:
    """Add the full increment ``kt * d_xi`` to the force, then cap its magnitude.

    No fresh-contact truncation, no slip-onset split and no direction
    evolution.  Sliding work is the movement dotted with the mean of the
    start and end forces.
    """
    if not math.isfinite(zeta_end):
        raise ContactInputError(f"non-finite zeta_end {zeta_end}")
    n = kin.n
    du_bar = relative_contact_movement(kin)
    if zeta_end <= 0:
        return _opened(state, n, zeta_end)
    d_xi = decompose_movement(du_bar, n).d_xi
    fn_end = params.kn * zeta_end
    limit = params.mu * fn_end
    fresh = state.zeta <= 0
    ft_start = np.zeros(3) if fresh else np.asarray(state.ft, dtype=float)
    trial = ft_start + params.kt * d_xi
    mag = float(np.linalg.norm(trial))
    slid = mag > limit * (1.0 + params.eps)
    ft = trial * (limit / mag) if slid else trial
    return _finish(state, params, kin, du_bar, zeta_end, fn_end, ft_start, ft,
                   (d_xi, ft_start), slid, dt, projection, twirl)


# ---------------------------------------------------------------------------
# batch update
# ---------------------------------------------------------------------------
# A compiled row-by-row transcription of ``update_contact`` and
# ``conventional_update``; tests hold it to the scalar versions.

_OK, _BAD_DISC, _NO_ROOT, _NORMAL_LOST = 0, 1, 2, 3


@dataclass(frozen=True)
class BatchUpdate:
    """Per-contact results of ``update_contacts``; rows follow the input order.

    ``alpha_o`` and ``alpha_s`` are ``nan`` where they do not apply.
    """

    force_total: np.ndarray
    fn_end: np.ndarray
    ft_end: np.ndarray
    slid: np.ndarray
    alpha_o: np.ndarray
    alpha_s: np.ndarray
    wn: np.ndarray
    dwt: np.ndarray
    dwt_rev: np.ndarray
    dwt_irrev: np.ndarray


def table_arrays(table: CscCotTable | None = None) -> tuple:
    """Flat parameters of a ``CscCotTable`` for the compiled kernels."""
    t = table or default_table()
    u0 = math.log(t.theta_min)
    h = (math.log(math.pi / 2) - u0) / (t.resolution - 1)
    L0 = float(t.inv_nodes[0])
    hinv = (float(t.inv_nodes[-1]) - L0) / (t.resolution - 1)
    return (t.theta_min, u0, h, np.asarray(t.values), np.asarray(t.slopes),
            L0, hinv, np.asarray(t.inv_values), np.asarray(t.inv_slopes))


@njit(cache=True)
def _hermite1(x, x0, h, values, slopes):
    t = (x - x0) / h
    i = int(math.floor(t))
    if i < 0:
        i = 0
    elif i > len(values) - 2:
        i = len(values) - 2
    s = t - i
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * values[i] + (s3 - 2 * s2 + s) * h * slopes[i]
            + (-2 * s3 + 3 * s2) * values[i + 1] + (s3 - s2) * h * slopes[i + 1])


@njit(cache=True)
def _lookup1(theta, tab):
    theta_min, u0, h, values, slopes = tab[0], tab[1], tab[2], tab[3], tab[4]
    upper = theta > math.pi / 2
    a = math.pi - theta if upper else theta
    if a < theta_min:
        out = math.log(max(a, 1e-300) / 2)
    else:
        out = _hermite1(math.log(a), u0, h, values, slopes)
    return -out if upper else out


@njit(cache=True)
def _inverse1(L, tab):
    L0, hinv, inv_values, inv_slopes = tab[5], tab[6], tab[7], tab[8]
    upper = L > 0
    x = -L if upper else L
    if x < L0:
        out = 2.0 * math.exp(x)
    else:
        out = math.exp(_hermite1(x, L0, hinv, inv_values, inv_slopes))
    return math.pi - out if upper else out


@njit(cache=True)
def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _norm3(a):
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


@njit(cache=True)
def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@njit(cache=True)
def _onset1(fn, ft, dz, dxi, kn, kt, mu, eps):
    A = (mu * kn * dz) ** 2 - kt * kt * _dot3(dxi, dxi)
    B = mu * mu * kn * fn * dz - kt * _dot3(ft, dxi)
    C = (mu * fn) ** 2 - _dot3(ft, ft)
    scale_c = (mu * fn) ** 2 + _dot3(ft, ft)
    scale_a = (mu * kn * dz) ** 2 + kt ** 2 * _dot3(dxi, dxi)
    scale_b = math.sqrt(scale_a * scale_c)
    if A + 2 * B + C >= -eps * (scale_a + scale_b + scale_c):
        return 1.0, _OK
    if abs(C) <= eps * scale_c:
        if B <= 0 or A == 0.0:
            return 0.0, _OK
        return min(1.0, max(0.0, -2.0 * B / A)), _OK
    if C < 0:
        return 0.0, _OK
    if abs(A) <= eps * scale_a:
        return min(1.0, max(0.0, -C / (2.0 * B))), _OK
    disc = B * B - A * C
    if disc < 0:
        if disc < -eps * (B * B + abs(A * C)):
            return 0.0, _BAD_DISC
        disc = 0.0
    q = -(B + math.copysign(math.sqrt(disc), B))
    if q == 0.0:
        return 0.0, _NO_ROOT
    tol = 1e3 * eps
    best = math.inf
    for r in (C / q, q / A):
        if -tol <= r <= 1 + tol and r < best:
            best = r
    if best == math.inf:
        return 0.0, _NO_ROOT
    return min(1.0, max(0.0, best)), _OK


@njit(cache=True)
def _update_rows(zeta0, ft0, sliding, du, n, dthp, dthq, zeta1, kn, kt, mu, nu, eps, dt,
                 refined, projection, twirl, tab,
                 force, ft_out, slid_out, alpha_o, alpha_s, fn_out, wn, dwt, dwt_rev, dwt_irrev):
    status = _OK
    for k in range(len(zeta1)):
        nk = n[k]
        alpha_o[k] = math.nan
        alpha_s[k] = math.nan
        ze = zeta1[k]
        if ze <= 0:
            for c in range(3):
                force[k, c] = 0.0
                ft_out[k, c] = 0.0
            slid_out[k] = False
            fn_out[k] = 0.0
            wn[k] = 0.0
            dwt[k] = 0.0
            dwt_rev[k] = 0.0
            dwt_irrev[k] = 0.0
            continue
        dub = du[k]
        d_zeta_mv = -_dot3(dub, nk)
        d_xi = dub + d_zeta_mv * nk
        fn_end = kn * ze
        limit = mu * fn_end
        fresh = zeta0[k] <= 0
        f_start = np.zeros(3) if fresh else ft0[k].copy()
        f_onset = f_start.copy()
        d_xi_slide = d_xi.copy()
        slid = False

        if not refined:
            trial = f_start + kt * d_xi
            mag = _norm3(trial)
            slid = mag > limit * (1.0 + eps)
            ft = trial * (limit / mag) if slid else trial
        elif fresh:
            a0 = min(1.0, max(0.0, 1.0 - ze / d_zeta_mv)) if d_zeta_mv > 0 else 0.0
            alpha_o[k] = a0
            d_xi_slide = (1.0 - a0) * d_xi
            trial = kt * d_xi_slide
            mag = _norm3(trial)
            slid = mag > limit
            ft = trial * (limit / mag) if slid else trial
        else:
            alpha_o[k] = 0.0
            trial = f_start + kt * d_xi
            mag = _norm3(trial)
            if mag <= limit * (1.0 + eps):
                ft = trial
            else:
                slid = True
                fn0 = kn * zeta0[k]
                dz = ze - zeta0[k]
                a_s, st = _onset1(fn0, f_start, dz, d_xi, kn, kt, mu, eps)
                if st != _OK:
                    status = st
                fn_s = fn0 + a_s * kn * dz
                ft_s = f_start + a_s * kt * d_xi
                rem = (1.0 - a_s) * d_xi
                rem_len = _norm3(rem)
                fs_len = _norm3(ft_s)
                dxi_len = _norm3(d_xi)
                f_onset = ft_s
                d_xi_slide = rem
                if rem_len <= eps * max(dxi_len, 1e-300) or fn_s <= 0:
                    ft = limit * (ft_s / fs_len if fs_len > 0 else d_xi / dxi_len)
                else:
                    m_dxi = rem / rem_len
                    m_perp = _cross3(nk, m_dxi)
                    th = math.atan2(_dot3(m_perp, ft_s), _dot3(m_dxi, ft_s)) if fs_len > 0 else 0.0
                    th = max(-math.pi + THETA_EDGE, min(math.pi - THETA_EDGE, th))
                    if th == 0.0:
                        th_e = 0.0
                    else:
                        c1 = mu * fn_s / (kt * rem_len)
                        c2 = (fn_end - fn_s) / fn_s
                        if not c2 > -1:
                            status = _NORMAL_LOST
                            c2 = 0.0
                        decay = 1.0 / c1 if abs(c2) <= eps else math.log1p(c2) / (c1 * c2)
                        th_e = math.copysign(_inverse1(_lookup1(abs(th), tab) - decay, tab), th)
                    ft = limit * (math.sin(th_e) * m_perp + math.cos(th_e) * m_dxi)
                alpha_s[k] = math.nan if (sliding[k] and a_s == 0.0) else a_s

        ft_se = ft
        if projection:
            ft = ft - _dot3(ft, nk) * nk
        if twirl:
            phi = 0.5 * _dot3(dthp[k] + dthq[k], nk)
            if phi != 0.0:
                along = _dot3(ft, nk) * nk
                perp = ft - along
                ft = along + math.cos(phi) * perp + math.sin(phi) * _cross3(nk, perp)
        f = -fn_end * nk + ft
        if nu > 0:
            f = f + nu * dub / dt
        for c in range(3):
            force[k, c] = f[c]
            ft_out[k, c] = ft[c]
        slid_out[k] = slid
        fn_out[k] = fn_end
        wn[k] = fn_end * fn_end / (2.0 * kn)
        e0 = _dot3(f_start, f_start)
        rev = (_dot3(ft, ft) - e0) / (2.0 * kt)
        if slid:
            tot = (_dot3(f_onset, f_onset) - e0) / (2.0 * kt) + _dot3(d_xi_slide, f_onset + ft_se) / 2.0
        else:
            tot = rev
        dwt[k] = tot
        dwt_rev[k] = rev
        dwt_irrev[k] = tot - rev
    return status


def _raise_status(status):
    from .errors import NumericalInconsistencyError

    if status == _BAD_DISC:
        raise NumericalInconsistencyError("negative slip-onset discriminant in batch update")
    if status == _NO_ROOT:
        raise NumericalInconsistencyError("no slip-onset root in [0, 1] in batch update")
    if status == _NORMAL_LOST:
        raise ContactInputError("normal force vanishes during sliding (c2 <= -1)")


def update_contacts(zeta_start, ft_start, sliding, du_bar, n, dtheta_p, dtheta_q, zeta_end,
                    params: ContactParams, *, kernel: str = "refined", dt: float | None = None,
                    projection: bool = True, twirl: bool = True,
                    table: CscCotTable | None = None) -> BatchUpdate:
    """Update many contacts at once.

    Row ``i`` of the result equals ``update_contact`` (or
    ``conventional_update`` when ``kernel="conventional"``) applied to
    contact ``i`` with ``StepKinematics`` whose relative movement is
    ``du_bar[i]``.  One difference: a fresh contact whose movement does not
    approach (``d_zeta <= 0``, possible for contacts first seen already
    overlapping) is loaded from the start of the step, ``alpha_o = 0``,
    where the scalar update raises.

    Parameters
    ----------
    zeta_start, zeta_end : (M,) arrays
    ft_start, du_bar, n, dtheta_p, dtheta_q : (M, 3) arrays
    sliding : (M,) bool array
        Start-of-step sliding flags (used only for reporting ``alpha_s``).
    """
    if kernel not in ("refined", "conventional"):
        raise ContactInputError(f"unknown kernel {kernel!r}")
    if params.nu > 0 and not (dt is not None and dt > 0):
        raise ContactInputError("dt is required when contact damping nu > 0")
    f64 = lambda a: np.ascontiguousarray(a, dtype=float)  # noqa: E731
    zeta1 = f64(zeta_end)
    m = len(zeta1)
    out = BatchUpdate(np.empty((m, 3)), np.empty(m), np.empty((m, 3)), np.empty(m, bool),
                      np.empty(m), np.empty(m), np.empty(m), np.empty(m), np.empty(m), np.empty(m))
    status = _update_rows(
        f64(zeta_start), f64(ft_start).reshape(m, 3), np.ascontiguousarray(sliding, dtype=np.bool_),
        f64(du_bar).reshape(m, 3), f64(n).reshape(m, 3), f64(dtheta_p).reshape(m, 3),
        f64(dtheta_q).reshape(m, 3), zeta1, params.kn, params.kt, params.mu, params.nu, params.eps,
        float(dt) if dt else 1.0, kernel == "refined", projection, twirl, table_arrays(table),
        out.force_total, out.ft_end, out.slid, out.alpha_o, out.alpha_s, out.fn_end, out.wn,
        out.dwt, out.dwt_rev, out.dwt_irrev)
    _raise_status(status)
    return out
