import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from girderlab.materials import (
    P_DEV, ConcreteLaw, ConcreteState, MaterialError, RebarState, SteelLaw, SteelState,
    concrete_update, plane_stress_elasticity, rebar_update, steel_update, uniaxial_trace,
    von_mises,
)
from girderlab.model import default_deck_concrete, default_girder_steel, default_rebar_steel

STEEL = default_girder_steel()
EY = STEEL.fy / STEEL.E
CONC = default_deck_concrete()

strain3 = st.tuples(*[st.floats(-4 * EY, 4 * EY) for _ in range(3)]).map(np.array)


def fd_tangent(update, law, state, eps, h):
    out = np.zeros((3, 3))
    for j in range(3):
        d = np.zeros(3)
        d[j] = h
        sp, _, _ = update(law, state, eps + d)
        sm, _, _ = update(law, state, eps - d)
        out[:, j] = (sp - sm) / (2 * h)
    return out


# --- steel -------------------------------------------------------------------


def test_steel_law_validation():
    with pytest.raises(MaterialError):
        SteelLaw(-1.0, 0.3, 1.0)
    with pytest.raises(MaterialError):
        SteelLaw(1.0, 0.3, 1.0, ((0.0, 1.0), (0.1, 0.5)))
    with pytest.raises(MaterialError):
        SteelLaw(1.0, 0.6, 1.0)


def test_steel_elastic_range_is_linear():
    eps = np.array([0.3, -0.2, 0.1]) * EY
    sig, tan, new = steel_update(STEEL, SteelState.initial(), eps)
    C = plane_stress_elasticity(STEEL.E, STEEL.nu)
    assert np.allclose(sig, C @ eps, rtol=1e-14)
    assert np.allclose(tan, C)
    assert new.alpha[0] == 0.0


@given(strain3)
def test_steel_stress_admissible(eps):
    sig, _, new = steel_update(STEEL, SteelState.initial(), eps)
    sy, _ = STEEL.flow_stress(new.alpha)
    assert von_mises(sig)[0] <= sy[0] * (1 + 1e-9)
    if new.alpha[0] > 0:
        assert von_mises(sig)[0] == pytest.approx(sy[0], rel=1e-9)


@given(strain3)
def test_steel_dissipation_nonnegative(eps):
    sig, _, new = steel_update(STEEL, SteelState.initial(), eps)
    assert sig @ new.plastic_strain[0] >= -1e-9 * STEEL.fy * EY


@given(strain3, strain3)
def test_steel_consistent_tangent_matches_fd(e0, de):
    _, _, s0 = steel_update(STEEL, SteelState.initial(), e0)
    eps = e0 + de
    C = plane_stress_elasticity(STEEL.E, STEEL.nu)
    sy0, _ = STEEL.flow_stress(s0.alpha)
    # the derivative jumps on the yield surface itself
    assume(abs(von_mises(C @ (eps - s0.plastic_strain[0]))[0] / sy0[0] - 1) > 1e-6)
    _, tan, new = steel_update(STEEL, s0, eps)
    fd = fd_tangent(steel_update, STEEL, s0, eps, 1e-9 * EY)
    scale = np.abs(plane_stress_elasticity(STEEL.E, STEEL.nu)).max()
    # skip points sitting on a hardening kink where the derivative jumps
    alpha = new.alpha[0]
    kinks = np.array([p[0] for p in STEEL.hardening])
    if np.min(np.abs(alpha - kinks[1:])) > 1e-6:
        assert np.abs(fd - tan).max() <= 1e-4 * scale


def test_steel_tangent_symmetric_plastic():
    _, tan, _ = steel_update(STEEL, SteelState.initial(), np.array([3, -1, 2]) * EY)
    assert np.abs(tan - tan.T).max() <= 1e-12 * np.abs(tan).max()


def test_steel_uniaxial_trace_hardening():
    e = np.linspace(0, 20 * EY, 41)
    s = uniaxial_trace(STEEL, e)
    assert s[1] == pytest.approx(STEEL.E * e[1], rel=1e-9)
    assert s[-1] > STEEL.fy
    assert np.all(np.diff(s) >= -1e-6 * STEEL.fy)


def test_steel_vectorized_matches_single(rng):
    eps = rng.uniform(-3, 3, (20, 3)) * EY
    sv, tv, _ = steel_update(STEEL, SteelState.initial(20), eps)
    for i in range(20):
        s1, t1, _ = steel_update(STEEL, SteelState.initial(), eps[i])
        assert np.allclose(s1, sv[i], rtol=1e-13, atol=1e-6)
        assert np.allclose(t1, tv[i], rtol=1e-12, atol=1e-3)


def test_return_map_converges_to_rate_solution():
    """Backward Euler approaches the continuous flow rule at first order."""
    law = SteelLaw.bilinear(200e9, 0.3, 345e6, 2e9)
    C = plane_stress_elasticity(law.E, law.nu)
    path = np.cumsum(np.random.default_rng(3).uniform(-2, 2, (40, 3, 3)) * EY, axis=1)
    path = np.concatenate([np.zeros((40, 1, 3)), path], axis=1)

    def rate(sig, al, de):
        n = sig @ P_DEV.T
        s = np.sqrt(2 / 3 * np.einsum("ni,ni->n", sig, n))
        sy, H = law.flow_stress(al)
        g = np.maximum(np.einsum("ni,ni->n", n, de @ C.T), 0) / (
            np.einsum("ni,ni->n", n, n @ C.T) + 2 / 3 * sy * H * s)
        return de @ C.T - g[:, None] * (n @ C.T), g * s

    sig, al = np.zeros((40, 3)), np.zeros(40)
    per = 2000
    for k in range(3):
        de = (path[:, k + 1] - path[:, k]) / per
        for _ in range(per):
            ds = de @ C.T
            sy, _ = law.flow_stress(al)
            f0 = 0.5 * np.einsum("ni,ij,nj->n", sig, P_DEV, sig) - sy**2 / 3
            loading = (f0 > -1e-12 * law.fy**2) & (np.einsum("ni,ni->n", sig @ P_DEV.T, ds) > 0)
            st_ = sig + ds
            f1 = 0.5 * np.einsum("ni,ij,nj->n", st_, P_DEV, st_) - sy**2 / 3
            t0 = np.where(loading, 0.0, 1.0)
            cross = ~loading & (f1 > 0)
            a = 0.5 * np.einsum("ni,ij,nj->n", ds, P_DEV, ds)
            b = np.einsum("ni,ij,nj->n", sig, P_DEV, ds)
            r = (-b + np.sqrt(np.maximum(b * b - 4 * a * f0, 0))) / (2 * a + 1e-300)
            t0 = np.where(cross, np.clip(r, 0, 1), t0)
            sig = sig + t0[:, None] * ds
            d = de * (1 - t0)[:, None]
            k1 = rate(sig, al, d)
            k2 = rate(sig + k1[0] / 2, al + k1[1] / 2, d)
            k3 = rate(sig + k2[0] / 2, al + k2[1] / 2, d)
            k4 = rate(sig + k3[0], al + k3[1], d)
            sig = sig + (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6
            al = al + (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6

    errs = []
    for K in (20, 200):
        state = SteelState.initial(40)
        for k in range(3):
            for j in range(1, K + 1):
                s_impl, _, state = steel_update(law, state, path[:, k] + (path[:, k + 1] - path[:, k]) * j / K)
        errs.append(np.abs(s_impl - sig).max() / law.fy)
    assert errs[1] < errs[0] / 5
    assert errs[1] < 5e-3


# --- rebar -------------------------------------------------------------------


@given(st.floats(-0.05, 0.05))
def test_rebar_bounded_by_flow_stress(e):
    law = default_rebar_steel()
    s, t, new = rebar_update(law, RebarState.initial(), e)
    sy, _ = law.flow_stress(new.alpha)
    assert abs(s[0]) <= sy[0] * (1 + 1e-12)
    assert 0 <= t[0] <= law.E


def test_rebar_unloading_elastic():
    law = default_rebar_steel()
    ey = law.fy / law.E
    _, _, s1 = rebar_update(law, RebarState.initial(), 3 * ey)
    sig, tan, _ = rebar_update(law, s1, 2.5 * ey)
    assert tan[0] == law.E
    assert sig[0] == pytest.approx(s1.stress[0] - 0.5 * ey * law.E, rel=1e-12)


# --- concrete ----------------------------------------------------------------


def test_concrete_law_validation():
    with pytest.raises(MaterialError):
        ConcreteLaw(30e9, 0.2, 30e6, 40e6)
    with pytest.raises(MaterialError):
        ConcreteLaw(30e9, 0.2, 30e6, 3e6, softening_modulus=1e9)


def closed_form_tension(law, e):
    ecr, etu = law.crack_strain, law.ultimate_crack_strain
    return np.where(e <= ecr, law.E * e,
                    np.where(e < etu, law.ft + law.softening_slope * (e - ecr), 0.0))


def test_concrete_uniaxial_trace_matches_softening_branch():
    law = ConcreteLaw(30e9, 0.0, 30e6, 3e6)
    e = np.linspace(0, 1.2 * law.ultimate_crack_strain, 57)
    s = uniaxial_trace(law, e, lateral_free=False)
    assert np.array_equal(s, closed_form_tension(law, e))


def test_concrete_unload_reload_secant():
    law = ConcreteLaw(30e9, 0.0, 30e6, 3e6)
    em = 3 * law.crack_strain
    e = np.array([0.5, 1.0, 2.0, 3.0, 1.5, 0.0, 1.5, 3.0, 4.0]) * law.crack_strain
    s = uniaxial_trace(law, e, lateral_free=False)
    env_m = closed_form_tension(law, em)
    assert s[4] == pytest.approx(env_m * 0.5, rel=1e-12)
    assert s[6] == pytest.approx(env_m * 0.5, rel=1e-12)
    assert s[8] == pytest.approx(closed_form_tension(law, e[8]), rel=1e-12)


def test_concrete_compression_cap():
    law = CONC
    e = -np.linspace(0, 2 * law.fc / law.E, 11)
    s = uniaxial_trace(law, e)
    assert s.min() == pytest.approx(-law.fc, rel=1e-9)
    # restrained laterally the state is biaxial and the cap rises
    s2 = uniaxial_trace(law, e, lateral_free=False)
    assert s2.min() < -law.fc


@given(st.floats(0.0, np.pi))
def test_crack_is_irreversible(theta):
    law = CONC
    c, s_ = np.cos(theta), np.sin(theta)
    e = 3 * law.crack_strain
    eps = np.array([e * c * c, e * s_ * s_, 2 * e * c * s_])
    _, _, st1 = concrete_update(law, ConcreteState.initial(), eps)
    assert st1.cracked[0, 0]
    _, _, st2 = concrete_update(law, st1, np.zeros(3))
    assert st2.cracked[0, 0]
    assert st2.crack_angle[0] == st1.crack_angle[0]


def test_crushing_is_absorbing():
    law = CONC
    _, _, s1 = concrete_update(law, ConcreteState.initial(), np.array([-2 * law.crush_strain, 0, 0]))
    assert s1.crushed[0]
    sig, tan, s2 = concrete_update(law, s1, np.zeros(3))
    assert s2.crushed[0]
    assert np.abs(tan).max() < 1e-5 * law.E


@pytest.mark.parametrize("eps", [
    [1e-5, -4e-5, 2e-5],          # uncracked, below cap
    [-1.2e-3, -1.0e-3, 1e-4],     # biaxial compression on the cap
    [-1.5e-3, 2e-5, 3e-5],        # uniaxial cap
])
def test_concrete_tangent_matches_fd(eps):
    eps = np.array(eps)
    sig, tan, _ = concrete_update(CONC, ConcreteState.initial(), eps)
    fd = fd_tangent(concrete_update, CONC, ConcreteState.initial(), eps, 1e-10)
    assert np.abs(fd - tan).max() <= 1e-4 * np.abs(tan).max()


def test_cracked_tangent_matches_fd():
    law = CONC
    _, _, s1 = concrete_update(law, ConcreteState.initial(), np.array([4 * law.crack_strain, 0, 0]))
    eps = np.array([5 * law.crack_strain, -2e-5, 1e-5])
    sig, tan, _ = concrete_update(law, s1, eps)
    fd = fd_tangent(concrete_update, law, s1, eps, 1e-10)
    assert np.abs(fd - tan).max() <= 1e-4 * np.abs(tan).max()


def test_non_finite_strain_rejected():
    with pytest.raises(MaterialError):
        steel_update(STEEL, SteelState.initial(), np.array([np.nan, 0, 0]))
