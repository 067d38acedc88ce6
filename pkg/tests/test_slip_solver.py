import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linfric import oracles
from linfric.errors import ContactInputError, InconsistentKinematicsError
from linfric.slip_solver import (
    SlipOnsetInput,
    build_csccot_table,
    default_table,
    final_slip_angle,
    fresh_contact_fraction,
    slip_onset,
)

# brute-force onset_scan (1e6 substeps) for fn=1, ft=(0.4,0,0), mu=.5, kn=kt=1,
# dz=.2, dxi=(0,.6,0): first violating substep
ONSET_EXAMPLE_ORACLE = 0.669689
# RK4 (1e6 steps) of the direction ODE from -pi/2 with c1=1, c2=0
ANGLE_EXAMPLE_ORACLE = -0.705026843555236


class TestFreshContact:
    def test_preexisting(self):
        assert fresh_contact_fraction(0.3, 0.1, zeta_start=0.2) == 0.0

    @pytest.mark.parametrize("zeta_end, d_zeta, expected", [(0.5, 1.0, 0.5), (0.2, 0.8, 0.75)])
    def test_substitution(self, zeta_end, d_zeta, expected):
        assert fresh_contact_fraction(zeta_end, d_zeta) == pytest.approx(expected)

    def test_clamped(self):
        assert fresh_contact_fraction(1.0, 0.5) == 0.0

    def test_inconsistent(self):
        with pytest.raises(InconsistentKinematicsError):
            fresh_contact_fraction(0.1, -0.2)


class TestSlipOnset:
    def test_already_at_limit_moving_outward(self):
        inp = SlipOnsetInput(1.0, [0.5, 0, 0], 0.0, [0.1, 0, 0], 1.0, 1.0, 0.5)
        assert slip_onset(inp) == 0.0

    def test_unloaded_spring(self):
        fn, mu, kt, L = 2.0, 0.5, 3.0, 0.4
        inp = SlipOnsetInput(fn, [0, 0, 0], 0.0, [L, 0, 0], 1.0, kt, mu)
        assert slip_onset(inp) == pytest.approx(mu * fn / (kt * L), rel=1e-14)

    def test_example_against_substep_oracle(self):
        inp = SlipOnsetInput(1.0, [0.4, 0, 0], 0.2, [0, 0.6, 0], 1.0, 1.0, 0.5)
        assert slip_onset(inp) == pytest.approx(ONSET_EXAMPLE_ORACLE, abs=1e-5)

    def test_no_slip_within_step(self):
        inp = SlipOnsetInput(1.0, [0.1, 0, 0], 0.0, [0.01, 0, 0], 1.0, 1.0, 0.5)
        assert slip_onset(inp) is None

    def test_unload_then_reload_on_limit(self):
        # force on the circle, movement reverses it: back on the circle at -2B/A
        fn, mu = 1.0, 0.5
        inp = SlipOnsetInput(fn, [0.5, 0, 0], 0.0, [-1.5, 0, 0], 1.0, 1.0, mu)
        a = slip_onset(inp)
        assert a == pytest.approx(1.0 / 1.5)
        assert abs(0.5 - 1.5 * a) == pytest.approx(mu * fn)

    def test_lhopital_branch(self):
        # A == 0: the limit shrinks exactly as fast as the elastic increment grows
        fn, mu, kn, kt = 1.0, 0.5, 1.0, 1.0
        dz = -0.4
        dxi = np.array([0.0, mu * kn * abs(dz) / kt, 0.0])
        ft = np.array([0.3, 0.0, 0.0])
        inp = SlipOnsetInput(fn, ft, dz, dxi, kn, kt, mu)
        A, B, C = inp.coefficients()
        assert A == 0.0 and B < 0
        a = slip_onset(inp)
        assert a == pytest.approx(-C / (2 * B))
        assert a == pytest.approx(0.8)
        assert abs(a - oracles.onset_scan(fn, ft, dz, dxi, kn, kt, mu)) < 1e-5

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.1, 10), st.floats(0, 1), st.floats(0, 2 * math.pi),
           st.floats(-0.3, 0.3), st.floats(0.01, 3), st.floats(0, 2 * math.pi),
           st.floats(0.1, 1.0))
    def test_equal_magnitude_at_onset(self, fn, frac, phi_f, dz_rel, dxi_rel, phi_x, mu):
        kn, kt = 1.0, 0.8
        ft = frac * mu * fn * np.array([math.cos(phi_f), math.sin(phi_f), 0.0])
        dz = dz_rel * fn / kn
        dxi = dxi_rel * mu * fn / kt * np.array([math.cos(phi_x), math.sin(phi_x), 0.0])
        a = slip_onset(SlipOnsetInput(fn, ft, dz, dxi, kn, kt, mu))
        end = np.linalg.norm(ft + kt * dxi) - mu * (fn + kn * dz)
        if a is None:
            assert end <= 1e-9 * fn
            return
        assert 0.0 <= a <= 1.0
        if 0.0 < a < 1.0:
            f = np.linalg.norm(ft + a * kt * dxi)
            lim = mu * (fn + a * kn * dz)
            assert f == pytest.approx(lim, rel=1e-10)


class TestTable:
    def test_center(self):
        t = default_table()
        assert t.lookup(math.pi / 2) == pytest.approx(0.0, abs=1e-15)
        assert t.inverse(0.0) == pytest.approx(math.pi / 2, abs=1e-15)

    def test_forward_accuracy(self):
        t = build_csccot_table(4096)
        rng = np.random.default_rng(7)
        th = rng.uniform(0.01, math.pi - 0.01, 10_000)
        assert np.max(np.abs(t.lookup(th) - np.log(np.tan(th / 2)))) <= 1e-6

    def test_inverse_accuracy(self):
        t = build_csccot_table(4096)
        rng = np.random.default_rng(8)
        L = rng.uniform(-14, 14, 10_000)
        assert np.max(np.abs(t.inverse(L) - 2 * np.arctan(np.exp(L)))) <= 1e-9

    def test_coarse_table_error_bound(self):
        # error falls as h**4: 64 nodes ~1e-4, 256 nodes ~1e-6
        th = np.linspace(0.01, math.pi - 0.01, 5001)
        exact = np.log(np.tan(th / 2))
        assert np.max(np.abs(build_csccot_table(64).lookup(th) - exact)) < 2e-4
        assert np.max(np.abs(build_csccot_table(256).lookup(th) - exact)) < 1e-6

    def test_monotone(self):
        t = default_table()
        assert np.all(np.diff(t.values) > 0)
        th = np.linspace(1e-7, math.pi - 1e-7, 20001)
        assert np.all(np.diff(t.lookup(th)) > 0)

    def test_below_clip(self):
        t = default_table()
        assert t.lookup(1e-8) == pytest.approx(math.log(5e-9), rel=1e-12)
        assert t.inverse(math.log(5e-9)) == pytest.approx(1e-8, rel=1e-10)

    def test_resolution_floor(self):
        with pytest.raises(ContactInputError):
            build_csccot_table(32)


class TestFinalSlipAngle:
    def test_aligned(self):
        assert final_slip_angle(0.0, 1.0, 0.0) == 0.0

    def test_perpendicular_unit_ratio(self):
        th = final_slip_angle(-math.pi / 2, 1.0, 0.0)
        assert th == pytest.approx(ANGLE_EXAMPLE_ORACLE, abs=1e-9)
        assert math.degrees(th) == pytest.approx(-40.395, abs=1e-3)

    def test_vanishing_movement(self):
        assert final_slip_angle(-math.pi / 2, 1e9, 0.0) == pytest.approx(-math.pi / 2, abs=1e-8)

    def test_invalid_c1(self):
        with pytest.raises(ContactInputError):
            final_slip_angle(0.3, 0.0, 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3.1, 3.1), st.floats(0.05, 20), st.floats(-0.49, 0.49))
    def test_against_ode_integration(self, theta, c1, c2):
        ref = oracles.integrate_direction(theta, c1, c2, 20_000)
        assert final_slip_angle(theta, c1, c2) == pytest.approx(ref, abs=1e-4)

    @settings(max_examples=200)
    @given(st.floats(1e-4, 3.14), st.floats(0.05, 20), st.floats(-0.9, 5))
    def test_sign_symmetry_and_contraction(self, theta, c1, c2):
        a = final_slip_angle(theta, c1, c2)
        b = final_slip_angle(-theta, c1, c2)
        assert a == -b
        assert 0 <= a <= theta + 1e-12

    @given(st.floats(1e-3, 3.1), st.floats(0.1, 10), st.floats(0.1, 10))
    def test_more_movement_turns_further(self, theta, c1a, c1b):
        lo, hi = sorted((c1a, c1b))
        # smaller c1 means more movement
        assert final_slip_angle(theta, lo, 0.0) <= final_slip_angle(theta, hi, 0.0) + 1e-12
