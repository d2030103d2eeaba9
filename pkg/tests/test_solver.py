import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from girderlab.materials import SteelLaw
from girderlab.model import generate_plate_model
from girderlab.solver import (
    DofMap, EigenError, Factor, SingularSystemError, assemble, buckling_analysis,
    buckling_modes, linear_solution, load_vector, residual, solve_linear,
)

E, T = 200e9, 0.01
BEAM = SteelLaw(E, 0.0, 1e12)


def spd(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.2, random_state=rng) + sp.identity(n) * n
    return sp.csr_matrix(A @ A.T)


@given(st.integers(3, 40), st.integers(0, 10**6))
def test_solve_linear_spd(n, seed):
    K = spd(n, seed)
    x = np.random.default_rng(seed).normal(size=n)
    f = K @ x
    u = solve_linear(K, f)
    assert np.linalg.norm(residual(K, u, f)) <= 1e-10 * np.linalg.norm(f)


def test_zero_load_gives_zero():
    K = spd(5, 1)
    assert not np.any(solve_linear(K, np.zeros(5)))


def test_mechanism_is_reported_with_dof():
    m = generate_plate_model(1.0, 0.5, T, 4, 2, supports="strip")
    m = m.replace(supports=m.supports[:1])
    with pytest.raises(SingularSystemError) as exc:
        Factor(assemble(m).K, DofMap(m))
    assert exc.value.args[0].startswith("singular stiffness at node")


def test_load_vector_resultant():
    m = generate_plate_model(1.0, 0.4, T, 8, 3, load="uniform", load_value=250.0)
    f = load_vector(m).reshape(-1, 6)
    assert f[:, 2].sum() == pytest.approx(-250.0, rel=1e-12)
    assert np.allclose(f[:, :2], 0.0)


def test_assembly_is_deterministic():
    m = generate_plate_model(1.0, 0.4, T, 6, 3)
    a, b = assemble(m).K, assemble(m).K
    assert np.array_equal(a.data, b.data) and np.array_equal(a.indices, b.indices)


def test_strip_under_uniform_load():
    L, b, w = 1.0, 0.1, 1000.0
    m = generate_plate_model(L, b, T, 32, 1, material=BEAM, supports="strip", load="uniform",
                             load_value=w * L)
    u = linear_solution(m).reshape(-1, 6)
    mid = np.abs(m.node_coords()[:, 0] - 0.5 * L) < 1e-9
    I = b * T**3 / 12
    assert -u[mid, 2].mean() == pytest.approx(5 * w * L**4 / (384 * E * I), rel=0.01)


def test_cantilever_tip_load():
    L, b, P = 1.0, 0.1, 100.0
    m = generate_plate_model(L, b, T, 16, 1, material=BEAM, supports="cantilever", load="tip",
                             load_value=P)
    u = linear_solution(m).reshape(-1, 6)
    tip = np.abs(m.node_coords()[:, 0] - L) < 1e-9
    I = b * T**3 / 12
    assert -u[tip, 2].mean() == pytest.approx(P * L**3 / (3 * E * I), rel=0.02)


def test_euler_column():
    L, b = 1.0, 0.1
    m = generate_plate_model(L, b, T, 32, 1, material=BEAM, supports="column", load="axial",
                             load_value=1.0)
    res = buckling_analysis(m, 2)
    I = b * T**3 / 12
    assert res.factors[0] == pytest.approx(np.pi**2 * E * I / L**2, rel=0.03)
    assert res.factors[1] == pytest.approx(4 * np.pi**2 * E * I / L**2, rel=0.05)
    assert np.all(np.diff(res.factors) > 0)
    assert np.abs(res.modes[0].reshape(-1, 6)[:, :3]).max() == pytest.approx(1.0)


def test_generalized_eigen_small():
    K = sp.diags([2.0, 3.0, 5.0, 7.0])
    Kg = sp.diags([-1.0, -1.0, -1.0, -1.0])
    res = buckling_modes(K, Kg, 2)
    assert np.allclose(res.factors, [2.0, 3.0], rtol=1e-10)


def test_zero_modes_requested():
    res = buckling_modes(sp.identity(3), -sp.identity(3), 0)
    assert res.factors.size == 0


def test_tensile_only_load_has_no_positive_factor():
    K = sp.diags([2.0, 3.0])
    Kg = sp.diags([1.0, 1.0])  # stiffening everywhere
    with pytest.raises(EigenError):
        buckling_modes(K, Kg, 1, max_iter=20)
