import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linfric.errors import ContactInputError
from linfric.probe_harness import (
    ProbeSettings,
    axisymmetric_part,
    elastic_stiffness,
    fit_circle_through_origin,
    probe_angles,
    rendulic_coordinates,
    rendulic_tensor,
    run_probe,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


# --- Rendulic plane ------------------------------------------------------------

def test_identity():
    np.testing.assert_allclose(rendulic_coordinates(np.eye(3)), [math.sqrt(3), 0])


def test_axial_unit():
    np.testing.assert_allclose(rendulic_coordinates(np.diag([1.0, 0, 0])), [1 / math.sqrt(3), math.sqrt(2 / 3)])


@given(finite)
def test_isotropic(a):
    np.testing.assert_allclose(rendulic_coordinates(a * np.eye(3)), [a * math.sqrt(3), 0], atol=1e-9 * abs(a))


def test_non_axisymmetric_rejected():
    with pytest.raises(ContactInputError):
        rendulic_coordinates(np.diag([1.0, 2.0, 3.0]))


@given(finite, finite, finite, finite)
def test_linear(a, b, c, d):
    A, B = np.diag([a, b, b]), np.diag([c, d, d])
    np.testing.assert_allclose(rendulic_coordinates(A + B),
                               rendulic_coordinates(A) + rendulic_coordinates(B), rtol=1e-12, atol=1e-6)


@given(finite, finite)
def test_tensor_round_trip(v, d):
    np.testing.assert_allclose(rendulic_coordinates(rendulic_tensor(v, d)), [v, d], rtol=1e-12, atol=1e-6)


@given(finite, finite, finite, finite)
def test_basis_is_orthonormal(a, b, c, d):
    # Frobenius inner product of axisymmetric tensors equals the Rendulic dot product
    A, B = np.diag([a, b, b]), np.diag([c, d, d])
    lhs = float(np.sum(A * B))
    assert lhs == pytest.approx(float(rendulic_coordinates(A) @ rendulic_coordinates(B)), rel=1e-9, abs=1e-3)


def test_axisymmetric_part():
    t = np.array([[1.0, 5, 5], [5, 2, 5], [5, 5, 4]])
    np.testing.assert_array_equal(axisymmetric_part(t), np.diag([1.0, 3.0, 3.0]))


# --- circle fit --------------------------------------------------------------------

def circle_points(diameter, tilt, angles):
    c = 0.5 * diameter * np.array([math.cos(tilt), math.sin(tilt)])
    return c + 0.5 * diameter * np.column_stack([np.cos(angles), np.sin(angles)])


def test_exact_circle():
    fit = fit_circle_through_origin(circle_points(2.0, math.radians(30), np.linspace(0.3, 5.5, 9)))
    assert fit.diameter == pytest.approx(2.0, rel=1e-14)
    assert fit.tilt == pytest.approx(math.radians(30), abs=1e-14)
    assert fit.residual < 1e-14


@settings(max_examples=50)
@given(st.floats(1e-9, 1e3), st.floats(-math.pi, math.pi), st.integers(3, 30), st.integers(0, 2**32 - 1))
def test_exact_circles_recovered(diameter, tilt, n, seed):
    angles = np.random.default_rng(seed).uniform(0, 2 * math.pi, n)
    pts = circle_points(diameter, tilt, angles)
    if np.linalg.norm(pts, axis=1).max() < 1e-3 * diameter:
        return
    try:
        fit = fit_circle_through_origin(pts)
    except ContactInputError:
        return  # every point landed on one ray through the origin
    assert fit.diameter == pytest.approx(diameter, rel=1e-8)


def test_all_points_at_origin():
    fit = fit_circle_through_origin(np.zeros((5, 2)))
    assert fit.diameter == 0.0


def test_noisy_circle():
    rng = np.random.default_rng(4)
    pts = circle_points(2.0, 0.4, np.linspace(0, 2 * math.pi, 72, endpoint=False))
    pts += 0.01 * rng.normal(size=pts.shape)
    assert fit_circle_through_origin(pts).diameter == pytest.approx(2.0, rel=0.02)


@pytest.mark.parametrize("pts", [[[1, 1], [2, 2], [3, 3]], [[1, 0], [2, 0]], [[1, 0, 0]] * 3])
def test_degenerate_input(pts):
    with pytest.raises(ContactInputError):
        fit_circle_through_origin(pts)


# --- probes -------------------------------------------------------------------

def test_settings_validated():
    with pytest.raises(ContactInputError):
        ProbeSettings(magnitude=0.0, n_steps=30)
    with pytest.raises(ContactInputError):
        ProbeSettings(magnitude=1e-6, n_steps=0)


def test_probe_angles():
    np.testing.assert_allclose(np.degrees(probe_angles(4)), [0, 90, 180, 270])


FAST = ProbeSettings(magnitude=6e-6, n_steps=30, relax_tol=1e-6)


def test_probe_is_deterministic(small_packing):
    K = elastic_stiffness(small_packing, FAST)
    a = run_probe(small_packing, 1.0, FAST, stiffness=K)
    b = run_probe(small_packing, 1.0, FAST, stiffness=K)
    np.testing.assert_array_equal(a.point, b.point)
    assert not a.flagged and a.servo_error <= FAST.servo_tol


def test_elastic_packing_leaves_no_plastic_strain(small_packing):
    a = small_packing.copy()
    a.params = replace(a.params, mu=1e12)
    K = elastic_stiffness(a, FAST)
    bound = 2 * FAST.servo_tol * np.linalg.norm(np.linalg.inv(K), 2)
    for angle in (0.5, 2.0, 4.0):
        assert run_probe(a, angle, FAST, stiffness=K).radius <= bound


def test_probe_reports_stress_direction(small_packing):
    r = run_probe(small_packing, math.pi / 4, FAST)
    assert np.linalg.norm(r.direction) == pytest.approx(1.0)
    assert r.radius >= 0
    # compressing both ways raises both stress coordinates
    assert r.direction[0] > 0
    np.testing.assert_allclose(r.strain_increment, rendulic_tensor(*(6e-6 * np.array([1, 1]) / math.sqrt(2))))


def test_elastic_stiffness_is_positive_definite(small_packing):
    K = elastic_stiffness(small_packing, FAST)
    assert np.all(np.linalg.eigvals(0.5 * (K + K.T)) > 0)
