"""Brute-force reference computations for a single contact.

These are deliberately naive: they march the proportional in-step
movement through many tiny substeps and apply the plain add-then-cap
friction rule at each one, which converges to the exact frictional path
as the substep shrinks.  They share no code with the closed-form solvers
they are used to check.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def onset_scan(fn_t, ft_t, d_zeta, d_xi, kn, kt, mu, n_sub=1_000_000):
    """First substep fraction ``k / n_sub`` at which ``|ft| > mu * fn``.

    Returns ``nan`` when the limit is never exceeded within the step.
    """
    for k in range(1, n_sub + 1):
        a = k / n_sub
        fx = ft_t[0] + a * kt * d_xi[0]
        fy = ft_t[1] + a * kt * d_xi[1]
        fz = ft_t[2] + a * kt * d_xi[2]
        lim = mu * (fn_t + a * kn * d_zeta)
        if fx * fx + fy * fy + fz * fz > lim * lim:
            return a
    return math.nan


@njit(cache=True)
def substep_slide(ft_t, fn_t, d_zeta, d_xi, kn, kt, mu, n_sub):
    """March ``n_sub`` add-then-cap substeps.

    Returns the end force (3-vector) and the tangential work done on the
    contact along the path (trapezoid per substep).
    """
    f = ft_t.copy()
    work = 0.0
    dx0 = d_xi[0] / n_sub
    dx1 = d_xi[1] / n_sub
    dx2 = d_xi[2] / n_sub
    for k in range(1, n_sub + 1):
        g0 = f[0] + kt * dx0
        g1 = f[1] + kt * dx1
        g2 = f[2] + kt * dx2
        lim = mu * (fn_t + (k / n_sub) * kn * d_zeta)
        mag = math.sqrt(g0 * g0 + g1 * g1 + g2 * g2)
        if mag > lim:
            s = lim / mag
            g0 *= s
            g1 *= s
            g2 *= s
        work += 0.5 * (dx0 * (f[0] + g0) + dx1 * (f[1] + g1) + dx2 * (f[2] + g2))
        f[0] = g0
        f[1] = g1
        f[2] = g2
    return f, work


@njit(cache=True)
def integrate_direction(theta_t, c1, c2, n_steps=1_000_000):
    """RK4 integration of ``d(theta)/d(alpha) = -sin(theta) / (c1 (1 + c2 alpha))``."""
    h = 1.0 / n_steps
    th = theta_t
    for k in range(n_steps):
        a = k * h
        k1 = -math.sin(th) / (c1 * (1.0 + c2 * a))
        k2 = -math.sin(th + 0.5 * h * k1) / (c1 * (1.0 + c2 * (a + 0.5 * h)))
        k3 = -math.sin(th + 0.5 * h * k2) / (c1 * (1.0 + c2 * (a + 0.5 * h)))
        k4 = -math.sin(th + h * k3) / (c1 * (1.0 + c2 * (a + h)))
        th += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return th


def substep_trajectory(moves, zetas, ft0, zeta0, kn, kt, mu, n_sub):
    """Reference path for a multi-step single-contact trajectory with fixed normal.

    ``moves`` holds per-step tangential movements (rows), ``zetas`` the
    end-of-step overlaps.  Returns the end tangential force and the total
    work (normal plus tangential) done on the contact.
    """
    ft = np.asarray(ft0, dtype=float).copy()
    z = zeta0
    work = 0.0
    for dxi, z_end in zip(np.asarray(moves, dtype=float), zetas):
        ft, w = substep_slide(ft, kn * z, z_end - z, dxi, kn, kt, mu, n_sub)
        work += w + 0.5 * kn * (z_end * z_end - z * z)
        z = z_end
    return ft, work
