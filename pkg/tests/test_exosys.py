import math

import numpy as np
import pytest
from scipy.linalg import expm as scipy_expm

from petcor.errors import ContractViolation
from petcor.exosys import Exosystem, expm, leader_state

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_expm_zero_time_is_identity():
    A = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 3.0], [0.0, 0.0, 2.0]])
    np.testing.assert_array_equal(expm(A, 0.0), np.eye(3))


def test_expm_rotation_quarter_turn():
    np.testing.assert_allclose(expm(ROT, math.pi / 2), [[0.0, 1.0], [-1.0, 0.0]], atol=1e-15)


def test_expm_nilpotent():
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(expm(N, 1.0), [[1.0, 1.0], [0.0, 1.0]], atol=1e-15)


def test_expm_matches_scipy_up_to_norm_ten():
    rng = np.random.default_rng(1)
    for _ in range(50):
        A = rng.normal(size=(4, 4))
        t = rng.uniform(-1, 1) * 10.0 / np.linalg.norm(A, 1)
        ref = scipy_expm(A * t)
        rel = np.linalg.norm(expm(A, t) - ref) / np.linalg.norm(ref)
        assert rel < 1e-12


def test_expm_group_property():
    rng = np.random.default_rng(2)
    for _ in range(30):
        A = rng.normal(size=(3, 3))
        A *= 2.0 / np.linalg.norm(A, 2)
        t1, t2 = rng.uniform(-2, 2, size=2)
        np.testing.assert_allclose(expm(A, t1) @ expm(A, t2), expm(A, t1 + t2), atol=1e-10, rtol=1e-10)


def test_expm_determinant_trace_identity():
    rng = np.random.default_rng(3)
    for _ in range(30):
        A = rng.normal(size=(3, 3))
        t = rng.uniform(-1.5, 1.5)
        assert np.linalg.det(expm(A, t)) == pytest.approx(math.exp(t * np.trace(A)), rel=1e-8)


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.ones(3), np.array([[np.nan, 0.0], [0.0, 1.0]])])
def test_expm_rejects_bad_input(bad):
    with pytest.raises(ContractViolation):
        expm(bad, 1.0)


def test_expm_rejects_infinite_time():
    with pytest.raises(ContractViolation):
        expm(ROT, math.inf)


def test_leader_examples():
    exo = Exosystem(ROT, [1.0, 0.0])
    v, y0 = leader_state(exo, 0.0)
    np.testing.assert_array_equal(v, [1.0, 0.0])
    v, y0 = leader_state(exo, math.pi / 2)
    np.testing.assert_allclose(v, [0.0, -1.0], atol=1e-15)
    assert y0 == pytest.approx(0.0, abs=1e-15)
    v, y0 = leader_state(exo, 2 * math.pi)
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-14)
    assert y0 == pytest.approx(1.0)


def test_leader_state_is_repeatable_and_norm_preserving():
    exo = Exosystem(ROT, [0.3, -0.8])
    a, _ = leader_state(exo, 7.3)
    b, _ = leader_state(exo, 7.3)
    assert np.array_equal(a, b)
    for t in np.linspace(0, 50, 23):
        v, _ = leader_state(exo, t)
        assert np.linalg.norm(v) == pytest.approx(np.linalg.norm(exo.v0), abs=1e-9)


def test_leader_state_rejects_negative_time():
    with pytest.raises(ContractViolation):
        leader_state(Exosystem(ROT, [1.0, 0.0]), -0.1)


def test_exosystem_output_row_is_fixed():
    exo = Exosystem(ROT, [1.0, 0.0])
    np.testing.assert_array_equal(exo.F, [1.0, 0.0])
    with pytest.raises(ContractViolation):
        Exosystem(ROT, [1.0, 0.0], F=[0.0, 1.0])


def test_exosystem_warns_for_unstable_leader():
    with pytest.warns(UserWarning, match="marginally stable"):
        Exosystem([[0.1, 0.0], [0.0, 0.0]], [1.0, 0.0])


def test_exosystem_shape_checks():
    with pytest.raises(ContractViolation):
        Exosystem(ROT, [1.0, 0.0, 0.0])
