import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import build, random_netlists
from mona import load_example
from mona.devices import UnsupportedModelError
from mona.formulations import (
    EvaluationError,
    check_consistency,
    consistent_initial_state,
    initial_state,
    reconstruct_electric,
)
from mona.netlist import load_graph
from mona.solver import IntegratorConfig, simulate
from mona.topology import build_incidence, check_conditions


def fd_jacobians(dae, t, x, xd, h=1e-4):
    n = dae.size
    Jx, Jd = np.zeros((n, n)), np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        Jx[:, k] = (dae.residual(t, x + e, xd) - dae.residual(t, x - e, xd)) / (2 * h)
        Jd[:, k] = (dae.residual(t, x, xd + e) - dae.residual(t, x, xd - e)) / (2 * h)
    return Jx, Jd


def rel_err(A, B):
    return np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)


def test_example_one_mna_matrices():
    inc = build_incidence(load_example("example1_cvloop"))
    E, A = build("example1_cvloop", "MNA").pencil()
    A_C, A_R, A_V = (m.astype(float) for m in (inc.A_C, inc.A_R, inc.A_V))
    np.testing.assert_array_equal(E[:3, :3], A_C @ A_C.T)
    np.testing.assert_array_equal(E[3], 0)
    np.testing.assert_array_equal(A[:3, :3], A_R @ A_R.T)
    np.testing.assert_array_equal(A[:3, 3:], A_V)
    np.testing.assert_array_equal(A[3:, :3], -A_V.T)


def test_example_one_mona_matrices():
    inc = build_incidence(load_example("example1_cvloop"))
    E, A = build("example1_cvloop", "MONA").pencil()
    A_C, A_R, A_V = (m.astype(float) for m in (inc.A_C, inc.A_R, inc.A_V))
    np.testing.assert_array_equal(E[:3, :3], A_R @ A_R.T)
    np.testing.assert_array_equal(E[:3, 3:6], A_C)
    np.testing.assert_array_equal(E[:3, 6:], A_V)
    np.testing.assert_array_equal(E[3:6, :3], -A_C.T)
    np.testing.assert_array_equal(E[6:, :3], -A_V.T)
    expected = np.zeros((7, 7))
    expected[3:6, 3:6] = np.eye(3)
    np.testing.assert_array_equal(A, expected)


def test_example_two_matrices():
    inc = build_incidence(load_example("example2_rectifier"))
    L = np.array([[27.46, 27.57], [27.57, 27.75]]) * 1e-6
    E, _ = build("example2_rectifier", "MNA").pencil()
    expected = np.zeros((7, 7))
    expected[4:6, 4:6] = L
    np.testing.assert_allclose(E, expected, atol=1e-18)
    E, A = build("example2_rectifier", "MONA").pencil()
    A_L, A_R = inc.A_L.astype(float), inc.A_R.astype(float)
    G0 = np.diag([10.0, 10, 10, 10, 1])
    np.testing.assert_allclose(E[:4, :4], A_R @ G0 @ A_R.T)
    np.testing.assert_allclose(A[:4, :4], A_L @ np.linalg.inv(L) @ A_L.T, rtol=1e-9)
    assert np.linalg.matrix_rank(E) == 5


def test_residual_examples():
    x = np.zeros(4)
    assert not np.any(build("example1_cvloop", "MNA").residual(0.0, x, x))
    for f in ("MNA", "MONA"):
        dae = build("example1_cvloop", f)
        r = dae.residual(0.5, np.zeros(dae.size), np.zeros(dae.size))
        assert np.count_nonzero(r) == 1 and r[-1] == pytest.approx(1.0)


def test_diode_offset_at_origin():
    for f in ("MNA", "MONA"):
        dae = build("example2_rectifier", f)
        r = dae.residual(0.0, np.zeros(dae.size), np.zeros(dae.size))
        inc = dae.inc
        offset = inc.A_R.astype(float) @ np.array([5.0, 5, 5, 5, 0])
        np.testing.assert_allclose(r[:4], offset)


def test_no_storage_blocks():
    dae = build(load_graph("R1 1 0 1\nC1 1 2 1\nR2 2 0 1\n"), "MNA")
    Jx, Jd = dae.jacobians(0.0, np.zeros(dae.size), np.zeros(dae.size))
    A_C = dae.inc.A_C.astype(float)
    np.testing.assert_array_equal(Jd, A_C @ A_C.T)


@pytest.mark.parametrize("name", ["example1_cvloop", "example2_rectifier"])
@pytest.mark.parametrize("formulation", ["MNA", "MONA"])
def test_jacobians_match_finite_differences(name, formulation):
    dae = build(name, formulation)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=dae.size) * 0.5
        xd = rng.normal(size=dae.size) * 0.5
        Jx, Jd = dae.jacobians(0.3, x, xd)
        FJx, FJd = fd_jacobians(dae, 0.3, x, xd)
        assert rel_err(Jx, FJx) < 1e-6
        assert rel_err(Jd, FJd) < 1e-6


@given(random_netlists(with_diodes=True), st.integers(0, 2**31 - 1))
def test_jacobians_random_circuits(text, seed):
    graph = load_graph(text)
    rng = np.random.default_rng(seed)
    for f in ("MNA", "MONA"):
        dae = build(graph, f)
        x, xd = rng.normal(size=dae.size), rng.normal(size=dae.size)
        Jx, Jd = dae.jacobians(0.7, x, xd)
        FJx, FJd = fd_jacobians(dae, 0.7, x, xd)
        assert np.allclose(Jx, FJx, rtol=1e-6, atol=1e-6 * (1 + np.abs(Jx).max()))
        assert np.allclose(Jd, FJd, rtol=1e-6, atol=1e-6 * (1 + np.abs(Jd).max()))


@given(random_netlists(kinds="RCLV"))
def test_mona_leading_matrix_regular_under_a2(text):
    graph = load_graph(text)
    report = check_conditions(build_incidence(graph))
    assume(report.a1_holds and report.a2_holds)
    E, _ = build(graph, "MONA").pencil()
    assert np.linalg.cond(E) < 1e12


@given(random_netlists(kinds="RCLV"))
def test_mna_leading_rank(text):
    graph = load_graph(text)
    dae = build(graph, "MNA")
    E, _ = dae.pencil()
    A_C = dae.inc.A_C.astype(float)
    expected = np.linalg.matrix_rank(A_C @ A_C.T) + dae.inc.count("L")
    assert np.linalg.matrix_rank(E) == expected
    if dae.inc.count("V"):
        assert expected < dae.size


def test_linear_jacobians_constant():
    dae = build("example1_cvloop", "MONA")
    a = dae.jacobians(0.0, np.zeros(7), np.zeros(7))
    b = dae.jacobians(1.0, np.ones(7), -np.ones(7))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_non_finite_residual_reports_row():
    dae = build("example1_cvloop", "MNA")
    x = np.zeros(4)
    x[3] = np.inf
    with pytest.raises(EvaluationError) as info:
        dae.residual(0.0, x, np.zeros(4))
    assert info.value.row is not None


def test_consistency_examples():
    c = check_consistency(build("example1_cvloop", "MNA"), 0.0, np.zeros(4))
    assert c.consistent
    c = check_consistency(build("example1_cvloop_cos", "MNA"), 0.0, np.zeros(4))
    assert not c.consistent and c.residual_norm == pytest.approx(1.0)


@given(random_netlists(kinds="RCLV"), st.integers(0, 2**31 - 1))
def test_regular_mona_always_consistent(text, seed):
    graph = load_graph(text)
    report = check_conditions(build_incidence(graph))
    assume(report.a1_holds and report.a2_holds)
    dae = build(graph, "MONA")
    x0 = np.random.default_rng(seed).uniform(-3, 3, dae.size)
    assert check_consistency(dae, 0.2, x0).consistent


def test_consistent_derivative_index_one():
    # MONA example 1: the derivative of q_V must satisfy the differentiated constraints
    dae = build("example1_cvloop", "MONA")
    c = check_consistency(dae, 0.0, np.zeros(7))
    e = c.xdot0[:3]
    np.testing.assert_allclose(e, 0, atol=1e-14)
    # q_C' = C A_C^T psi'' must hold with e1' = pi; then KCL gives q_V'
    i_V = c.xdot0[6]
    assert i_V == pytest.approx(-math.pi / 2, rel=1e-9)


def test_initial_state_overrides():
    dae = build("rlc_passive", "MNA")
    x = initial_state(dae, {"C1": 2.0, "L1": 0.5})
    np.testing.assert_allclose(x, [2.0, 0.0, 0.5])
    dae = build("rlc_passive", "MONA")
    x = initial_state(dae, {"C1": 2.0})
    np.testing.assert_allclose(x, [0, 0, 2.0, 0])
    with pytest.raises(KeyError):
        initial_state(dae, {"R1": 1.0})


def test_consistent_initial_state_keeps_storage():
    dae = build("example2_rectifier", "MNA")
    x0 = consistent_initial_state(dae, 0.0, np.zeros(dae.size))
    assert check_consistency(dae, 0.0, x0).consistent
    np.testing.assert_array_equal(x0[4:6], 0)  # inductor currents untouched
    np.testing.assert_allclose(x0[3], 5.0, atol=1e-3)
    cos = build("example1_cvloop_cos", "MNA")
    assert not check_consistency(cos, 0.0, consistent_initial_state(cos, 0.0, np.zeros(4))).consistent


def test_reconstruction_zero_and_errors():
    dae = build("rlc_passive", "MONA")
    traj = simulate(dae, IntegratorConfig("ie", 0.1, 1.0))
    rec = reconstruct_electric(traj)
    for arr in (rec.e, rec.i_L, rec.v_C, rec.i_C, rec.phi_L):
        assert not np.any(arr)
    with pytest.raises(ValueError):
        reconstruct_electric(simulate(build("rlc_passive", "MNA"), IntegratorConfig("ie", 0.1, 1.0)))


def test_reconstructed_potentials_are_derivative_samples():
    traj = simulate(build("example1_cvloop", "MONA"), IntegratorConfig("tr", 0.1, 2.0))
    rec = reconstruct_electric(traj)
    np.testing.assert_array_equal(rec.e, traj.xdot[:, :3])
    np.testing.assert_allclose(rec.e[:, 0], np.sin(np.pi * traj.t), atol=1e-12)


def test_mna_energy_needs_linear_storage():
    from mona.devices import EnergyFunctional

    class Quartic(EnergyFunctional):
        dim = 1

        def energy(self, x):
            return float(x[0] ** 4)

    dae = build("rlc_passive", "MONA")
    models = dae.models.with_storage(inductors=Quartic())
    from mona.formulations import ImplicitDAE

    mna = ImplicitDAE.__new__(ImplicitDAE)
    mna.__dict__.update(build("rlc_passive", "MNA").__dict__)
    mna.models = models
    with pytest.raises(UnsupportedModelError):
        mna.stored_energy(np.zeros(3))
