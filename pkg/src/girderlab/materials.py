"""Constitutive updates at shell integration points.

Voigt order everywhere is ``(xx, yy, xy)`` with engineering shear strain.
All update functions are vectorized: strain arrays have shape ``(n, 3)``
(or ``(3,)`` for a single point) and states hold one row per point.
Updates are pure: the committed state is never modified, a new state is
returned alongside the stress and the consistent tangent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SQRT2 = np.sqrt(2.0)
# Plane-stress deviatoric projector in Voigt form, xi = s^T P s = (2/3) s_eq^2
P_DEV = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, 0.0], [0.0, 0.0, 6.0]]) / 3.0
# Common eigenbasis of P_DEV and the isotropic plane-stress elasticity
Q_EIG = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, SQRT2]]) / SQRT2
RESIDUAL_STIFFNESS = 1e-6


class MaterialError(ValueError):
    pass


def plane_stress_elasticity(E, nu):
    c = E / (1.0 - nu * nu)
    return c * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])


@dataclass(frozen=True)
class SteelLaw:
    """Von Mises plasticity with multilinear isotropic hardening.

    ``hardening`` is a sequence of ``(equivalent plastic strain, flow stress)``
    points starting at ``(0, fy)``; the flow stress stays flat beyond the
    last point.
    """

    E: float
    nu: float
    fy: float
    hardening: tuple = ()

    def __post_init__(self):
        if not self.hardening:
            object.__setattr__(self, "hardening", ((0.0, float(self.fy)),))
        pts = tuple((float(a), float(b)) for a, b in self.hardening)
        object.__setattr__(self, "hardening", pts)
        errors = self.check()
        if errors:
            raise MaterialError("; ".join(errors))

    def check(self):
        errs = []
        if not self.E > 0:
            errs.append("E must be > 0")
        if not 0 <= self.nu < 0.5:
            errs.append("nu must be in [0, 0.5)")
        if not self.fy > 0:
            errs.append("fy must be > 0")
        eps = [p[0] for p in self.hardening]
        sig = [p[1] for p in self.hardening]
        if eps[0] != 0.0 or abs(sig[0] - self.fy) > 1e-12 * self.fy:
            errs.append("hardening must start at (0, fy)")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            errs.append("hardening plastic strains must increase")
        if any(b < a for a, b in zip(sig, sig[1:])):
            errs.append("hardening stress must be nondecreasing")
        return errs

    @classmethod
    def bilinear(cls, E, nu, fy, H, eps_max=1.0):
        return cls(E, nu, fy, ((0.0, fy), (eps_max, fy + H * eps_max)))

    @property
    def G(self):
        return self.E / (2.0 * (1.0 + self.nu))

    def flow_stress(self, alpha):
        """Flow stress and hardening slope at equivalent plastic strain."""
        eps = np.array([p[0] for p in self.hardening])
        sig = np.array([p[1] for p in self.hardening])
        alpha = np.asarray(alpha, dtype=float)
        sy = np.interp(alpha, eps, sig)
        if len(eps) == 1:
            return sy, np.zeros_like(alpha)
        slopes = np.append(np.diff(sig) / np.diff(eps), 0.0)
        seg = np.searchsorted(eps, alpha, side="right") - 1
        return sy, slopes[np.clip(seg, 0, len(slopes) - 1)]

    def with_stiffness(self, factor):
        return replace(self, E=self.E * factor)


@dataclass(frozen=True)
class ConcreteLaw:
    """Plane-stress smeared fixed-crack concrete with a biaxial compression cap.

    ``softening_modulus`` is the (negative) post-cracking slope of the
    tension envelope; ``None`` means linear softening to zero stress at ten
    times the cracking strain and ``0`` means a brittle drop.
    """

    E: float
    nu: float
    fc: float
    ft: float
    softening_modulus: float | None = None
    shear_retention: float = 0.2
    crush_strain: float = 0.0035

    def __post_init__(self):
        errors = self.check()
        if errors:
            raise MaterialError("; ".join(errors))

    def check(self):
        errs = []
        if not self.E > 0:
            errs.append("E must be > 0")
        if not 0 <= self.nu < 0.5:
            errs.append("nu must be in [0, 0.5)")
        if not 0 < self.ft < self.fc:
            errs.append("need 0 < ft < fc")
        if not 0 < self.shear_retention <= 1:
            errs.append("shear_retention must be in (0, 1]")
        if not self.crush_strain > self.fc / self.E:
            errs.append("crush_strain must exceed fc/E")
        if self.softening_modulus is not None and self.softening_modulus > 0:
            errs.append("softening_modulus must be <= 0")
        return errs

    @property
    def G(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def crack_strain(self):
        return self.ft / self.E

    @property
    def softening_slope(self):
        if self.softening_modulus is None:
            return -self.ft / (9.0 * self.crack_strain)
        return self.softening_modulus

    @property
    def ultimate_crack_strain(self):
        """Crack-normal strain at which the tension envelope reaches zero."""
        if self.softening_slope == 0.0:
            return self.crack_strain
        return self.crack_strain - self.ft / self.softening_slope

    def with_stiffness(self, factor):
        return replace(self, E=self.E * factor)


# ---------------------------------------------------------------------------
# state containers


@dataclass(frozen=True)
class SteelState:
    plastic_strain: np.ndarray  # (n, 3)
    alpha: np.ndarray  # (n,) equivalent plastic strain
    stress: np.ndarray  # (n, 3)

    @classmethod
    def initial(cls, n=1):
        return cls(np.zeros((n, 3)), np.zeros(n), np.zeros((n, 3)))

    def take(self, idx):
        return SteelState(self.plastic_strain[idx], self.alpha[idx], self.stress[idx])

    @property
    def yielded(self):
        return self.alpha > 0.0


@dataclass(frozen=True)
class RebarState:
    plastic_strain: np.ndarray  # (n,)
    alpha: np.ndarray  # (n,)
    stress: np.ndarray  # (n,)

    @classmethod
    def initial(cls, n=1):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def take(self, idx):
        return RebarState(self.plastic_strain[idx], self.alpha[idx], self.stress[idx])

    @property
    def yielded(self):
        return self.alpha > 0.0


@dataclass(frozen=True)
class ConcreteState:
    crack_angle: np.ndarray  # (n,) angle of the first crack normal, radians
    cracked: np.ndarray  # (n, 2) bool, crack normal at angle and angle + 90 deg
    max_crack_strain: np.ndarray  # (n, 2)
    crushed: np.ndarray  # (n,) bool
    stress: np.ndarray = field(default=None)  # (n, 3)

    @classmethod
    def initial(cls, n=1):
        return cls(np.zeros(n), np.zeros((n, 2), bool), np.zeros((n, 2)),
                   np.zeros(n, bool), np.zeros((n, 3)))

    def take(self, idx):
        return ConcreteState(self.crack_angle[idx], self.cracked[idx],
                             self.max_crack_strain[idx], self.crushed[idx], self.stress[idx])

    @property
    def any_crack(self):
        return self.cracked.any(axis=1)


def _as_points(strain):
    strain = np.asarray(strain, dtype=float)
    single = strain.ndim == 1
    strain = np.atleast_2d(strain)
    if not np.all(np.isfinite(strain)):
        raise MaterialError("non-finite strain")
    return strain, single


def _squeeze(single, *arrays):
    if not single:
        return arrays
    return tuple(a[0] for a in arrays)


# ---------------------------------------------------------------------------
# steel


def steel_update(law: SteelLaw, state: SteelState, strain):
    """Plane-stress J2 return mapping (closest point projection).

    Returns ``(stress, tangent, new_state)``. The plastic multiplier is found
    by a scalar Newton iteration on the consistency condition expressed in
    the common eigenbasis of the elasticity and deviatoric operators.
    """
    strain, single = _as_points(strain)
    n = strain.shape[0]
    E, nu, G = law.E, law.nu, law.G
    C = plane_stress_elasticity(E, nu)
    sig_tr = (strain - state.plastic_strain) @ C.T
    a = sig_tr @ Q_EIG  # components in the eigenbasis
    a1sq = a[:, 0] ** 2 / 3.0
    a23sq = a[:, 1] ** 2 + 2.0 * a[:, 2] ** 2
    xi_tr = a1sq + a23sq
    sy_n, _ = law.flow_stress(state.alpha)
    f_tr = 0.5 * xi_tr - sy_n**2 / 3.0
    plastic = f_tr > 1e-12 * law.fy**2

    stress = sig_tr.copy()
    tangent = np.broadcast_to(C, (n, 3, 3)).copy()
    eps_p = state.plastic_strain.copy()
    alpha = state.alpha.copy()

    if np.any(plastic):
        idx = np.nonzero(plastic)[0]
        c1 = E / (3.0 * (1.0 - nu))
        c2 = 2.0 * G
        A1, A23, al_n = a1sq[idx], a23sq[idx], state.alpha[idx]
        dg = np.zeros(len(idx))
        active = np.ones(len(idx), bool)
        for _ in range(60):
            d1 = 1.0 + c1 * dg
            d2 = 1.0 + c2 * dg
            xi = A1 / d1**2 + A23 / d2**2
            dxi = -2.0 * c1 * A1 / d1**3 - 2.0 * c2 * A23 / d2**3
            s = np.sqrt(2.0 / 3.0 * xi)
            al = al_n + dg * s
            sy, H = law.flow_stress(al)
            f = 0.5 * xi - sy**2 / 3.0
            df = 0.5 * dxi - 2.0 / 3.0 * sy * H * (s + dg * dxi / (3.0 * s))
            step = np.where(active, f / df, 0.0)
            dg = dg - step
            active = np.abs(f) > 1e-15 * law.fy**2
            if not active.any():
                break
        d1 = 1.0 + c1 * dg
        d2 = 1.0 + c2 * dg
        ahat = a[idx] / np.stack([d1, d2, d2], axis=1)
        sig = ahat @ Q_EIG.T
        xi = A1 / d1**2 + A23 / d2**2
        s = np.sqrt(2.0 / 3.0 * xi)
        al = al_n + dg * s
        sy, H = law.flow_stress(al)
        nvec = sig @ P_DEV.T
        # Xi = (C^-1 + dg P)^-1 in the eigenbasis
        cdiag = np.stack([3.0 * c1 / d1, c2 / d2, G / d2], axis=1)
        Xi = np.einsum("ij,nj,kj->nik", Q_EIG, cdiag, Q_EIG)
        N = np.einsum("nij,nj->ni", Xi, nvec)
        acoef = 1.0 - 4.0 / 9.0 * sy * H * dg / s
        bcoef = 2.0 / 3.0 * sy * H * s
        denom = acoef * np.einsum("ni,ni->n", nvec, N) + bcoef
        tangent[idx] = Xi - (acoef / denom)[:, None, None] * np.einsum("ni,nj->nij", N, N)
        stress[idx] = sig
        eps_p[idx] = state.plastic_strain[idx] + dg[:, None] * nvec
        alpha[idx] = al

    new = SteelState(eps_p, alpha, stress)
    if single:
        return stress[0], tangent[0], new
    return stress, tangent, new


def von_mises(stress):
    s = np.atleast_2d(stress)
    return np.sqrt(s[:, 0] ** 2 + s[:, 1] ** 2 - s[:, 0] * s[:, 1] + 3.0 * s[:, 2] ** 2)


def rebar_update(law: SteelLaw, state: RebarState, strain):
    """Uniaxial elastoplastic update for smeared reinforcement bars."""
    strain = np.atleast_1d(np.asarray(strain, dtype=float))
    if not np.all(np.isfinite(strain)):
        raise MaterialError("non-finite strain")
    E = law.E
    sig_tr = E * (strain - state.plastic_strain)
    sy_n, _ = law.flow_stress(state.alpha)
    f_tr = np.abs(sig_tr) - sy_n
    plastic = f_tr > 1e-12 * law.fy
    stress = sig_tr.copy()
    tangent = np.full_like(strain, E)
    eps_p = state.plastic_strain.copy()
    alpha = state.alpha.copy()
    if np.any(plastic):
        idx = np.nonzero(plastic)[0]
        st = sig_tr[idx]
        al_n = state.alpha[idx]
        dg = np.zeros(len(idx))
        for _ in range(60):
            sy, H = law.flow_stress(al_n + dg)
            f = np.abs(st) - E * dg - sy
            dg = dg + f / (E + H)
            if np.all(np.abs(f) <= 1e-14 * law.fy):
                break
        sy, H = law.flow_stress(al_n + dg)
        sign = np.sign(st)
        stress[idx] = sign * sy
        tangent[idx] = E * H / (E + H)
        eps_p[idx] = state.plastic_strain[idx] + sign * dg
        alpha[idx] = al_n + dg
    return stress, tangent, RebarState(eps_p, alpha, stress)


# ---------------------------------------------------------------------------
# concrete


def _rotation_ops(theta):
    """Voigt strain transformation into a frame whose first axis is at ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    cc, ss, cs = c * c, s * s, c * s
    T = np.empty(theta.shape + (3, 3))
    T[..., 0, :] = np.stack([cc, ss, cs], -1)
    T[..., 1, :] = np.stack([ss, cc, -cs], -1)
    T[..., 2, :] = np.stack([-2 * cs, 2 * cs, cc - ss], -1)
    return T


def principal_angle(v, shear_factor):
    """Angle of the major principal axis of a Voigt tensor.

    ``shear_factor`` is 1 for stresses and 0.5 for engineering strains.
    """
    return 0.5 * np.arctan2(2.0 * shear_factor * v[..., 2], v[..., 0] - v[..., 1])


def principal_values(v, shear_factor):
    m = 0.5 * (v[..., 0] + v[..., 1])
    r = np.hypot(0.5 * (v[..., 0] - v[..., 1]), shear_factor * v[..., 2])
    return m + r, m - r


def kupfer_factor(alpha):
    """Biaxial compressive strength ratio for principal stress ratio alpha in [0, 1]."""
    return (1.0 + 3.65 * alpha) / (1.0 + alpha) ** 2


def _kupfer_slope(alpha):
    return (1.65 - 3.65 * alpha) / (1.0 + alpha) ** 3


def _tension_envelope(law: ConcreteLaw, e):
    """Stress and slope of the crack-normal tension envelope at strain e >= 0."""
    ecr, etu, Es = law.crack_strain, law.ultimate_crack_strain, law.softening_slope
    sig = np.where(e <= ecr, law.E * e, np.where(e < etu, law.ft + Es * (e - ecr), 0.0))
    slope = np.where(e <= ecr, law.E, np.where(e < etu, Es, 0.0))
    return sig, slope


def _uniaxial_compression(law, e):
    """Normal stress/tangent for a closed crack or an uncracked direction in compression."""
    capped = law.E * e < -law.fc
    return np.where(capped, -law.fc, law.E * e), np.where(capped, 0.0, law.E)


def concrete_update(law: ConcreteLaw, state: ConcreteState, strain):
    """Smeared fixed-crack update with crushing.

    Uncracked points are isotropic elastic with compressive principal
    stresses capped at the biaxially scaled strength. Once the major trial
    principal stress exceeds ``ft`` a crack normal is fixed along it; the
    point then behaves orthotropically in the crack frame with decoupled
    normal directions and shear stiffness ``beta * G``. A second crack may
    open orthogonal to the first. Crushing (minimum principal strain below
    ``-crush_strain``) is absorbing and leaves a residual stiffness only.
    """
    strain, single = _as_points(strain)
    n = strain.shape[0]
    E, nu, G = law.E, law.nu, law.G
    Ce = plane_stress_elasticity(E, nu)

    crushed = state.crushed.copy()
    cracked = state.cracked.copy()
    angle = state.crack_angle.copy()
    emax = state.max_crack_strain.copy()

    _, e_min = principal_values(strain, 0.5)
    crushed |= e_min < -law.crush_strain

    stress = np.zeros((n, 3))
    tangent = np.broadcast_to(RESIDUAL_STIFFNESS * Ce, (n, 3, 3)).copy()

    uncracked = ~crushed & ~cracked.any(axis=1)
    if uncracked.any():
        idx = np.nonzero(uncracked)[0]
        sig_tr = strain[idx] @ Ce.T
        s1, s2 = principal_values(sig_tr, 1.0)
        opens = s1 > law.ft
        if opens.any():
            j = idx[opens]
            angle[j] = principal_angle(sig_tr[opens], 1.0)
            cracked[j, 0] = True
            emax[j, 0] = law.crack_strain
        keep = ~opens
        if keep.any():
            sig, tan = _capped_elastic(law, Ce, sig_tr[keep], s1[keep], s2[keep])
            stress[idx[keep]] = sig
            tangent[idx[keep]] = tan

    in_crack = ~crushed & cracked.any(axis=1)
    if in_crack.any():
        idx = np.nonzero(in_crack)[0]
        T = _rotation_ops(angle[idx])
        el = np.einsum("nij,nj->ni", T, strain[idx])
        sl = np.zeros((len(idx), 3))
        dl = np.zeros((len(idx), 3))
        for k in range(2):
            e = el[:, k]
            is_cr = cracked[idx, k]
            # an uncracked direction may crack now (decoupled uniaxial check)
            new = ~is_cr & (E * e > law.ft)
            if new.any():
                cracked[idx[new], k] = True
                emax[idx[new], k] = law.crack_strain
                is_cr = is_cr | new
            sc, tc = _uniaxial_compression(law, e)
            em = emax[idx, k]
            env, env_slope = _tension_envelope(law, np.maximum(e, 0.0))
            env_m, _ = _tension_envelope(law, em)
            loading = e >= em
            st = np.where(loading, env, env_m * e / np.where(em > 0, em, 1.0))
            tt = np.where(loading, env_slope, env_m / np.where(em > 0, em, 1.0))
            # opened cracks: tension envelope; closed or intact: compression law
            use_t = is_cr & (e >= 0.0)
            use_intact_t = ~is_cr & (e >= 0.0)
            sl[:, k] = np.where(use_t, st, np.where(use_intact_t, E * e, sc))
            dl[:, k] = np.where(use_t, tt, np.where(use_intact_t, E, tc))
            grow = use_t & loading
            emax[idx[grow], k] = e[grow]
        sl[:, 2] = law.shear_retention * G * el[:, 2]
        dl[:, 2] = law.shear_retention * G
        stress[idx] = np.einsum("nji,nj->ni", T, sl)
        tangent[idx] = np.einsum("nki,nk,nkj->nij", T, dl, T)

    new = ConcreteState(angle, cracked, emax, crushed, stress)
    if single:
        return stress[0], tangent[0], new
    return stress, tangent, new


def _capped_elastic(law, Ce, sig_tr, s1, s2):
    """Isotropic elastic stress with principal compressive values capped.

    The cap is an isotropic function of the trial stress, so its derivative
    combines the principal-value derivatives with the rotation term
    ``(c1 - c2) / (s1 - s2)`` on the shear component.
    """
    m = len(s1)
    both = (s2 < 0.0) & (s1 < 0.0)
    ratio = np.where(both, np.clip(s1 / np.where(s2 < 0, s2, -1.0), 0.0, 1.0), 0.0)
    fcap = law.fc * kupfer_factor(ratio)
    capped1 = s1 < -fcap
    capped2 = s2 < -fcap
    if not (capped1.any() or capped2.any()):
        return sig_tr, np.broadcast_to(Ce, (m, 3, 3)).copy()
    c1 = np.where(capped1, -fcap, s1)
    c2 = np.where(capped2, -fcap, s2)
    # derivative of -fcap with respect to (s1, s2) through the ratio
    dk = np.where(both & (ratio > 0) & (ratio < 1), law.fc * _kupfer_slope(ratio), 0.0)
    s2safe = np.where(s2 < 0, s2, -1.0)
    dcap_ds1 = -dk / s2safe
    dcap_ds2 = dk * s1 / s2safe**2
    D = np.zeros((m, 3, 3))
    D[:, 0, 0] = np.where(capped1, dcap_ds1, 1.0)
    D[:, 0, 1] = np.where(capped1, dcap_ds2, 0.0)
    D[:, 1, 0] = np.where(capped2, dcap_ds1, 0.0)
    D[:, 1, 1] = np.where(capped2, dcap_ds2, 1.0)
    gap = s1 - s2
    D[:, 2, 2] = np.where(gap > 1e-12 * law.fc, (c1 - c2) / np.where(gap > 0, gap, 1.0),
                          D[:, 0, 0])
    theta = principal_angle(sig_tr, 1.0)
    T = _rotation_ops(theta)  # strain-type transform; stress uses T^-T
    # stress components in the principal frame: sigma' = T^-T sigma = R sigma
    R = _stress_rotation(theta)
    sig_p = np.stack([c1, c2, np.zeros(m)], axis=1)
    sig = np.einsum("nji,nj->ni", T, sig_p)
    tan = np.swapaxes(T, 1, 2) @ D @ R @ Ce
    return sig, tan


def _stress_rotation(theta):
    """Voigt stress transformation into the frame at ``theta`` (equals T^-T)."""
    c, s = np.cos(theta), np.sin(theta)
    cc, ss, cs = c * c, s * s, c * s
    R = np.empty(theta.shape + (3, 3))
    R[..., 0, :] = np.stack([cc, ss, 2 * cs], -1)
    R[..., 1, :] = np.stack([ss, cc, -2 * cs], -1)
    R[..., 2, :] = np.stack([-cs, cs, cc - ss], -1)
    return R


# ---------------------------------------------------------------------------
# test harness


def uniaxial_trace(law, strains, lateral_free=True):
    """Stress along a uniaxial strain schedule.

    With ``lateral_free`` the transverse strain is solved so that the
    transverse stress vanishes (uniaxial stress); otherwise the transverse
    strain is held at zero. Each schedule entry is one committed increment.
    """
    strains = np.asarray(strains, dtype=float)
    if isinstance(law, SteelLaw):
        update, state = steel_update, SteelState.initial(1)
    elif isinstance(law, ConcreteLaw):
        update, state = concrete_update, ConcreteState.initial(1)
    else:
        raise TypeError(f"unsupported law {type(law).__name__}")
    out = np.empty_like(strains)
    ey = 0.0
    for i, ex in enumerate(strains):
        eps = np.array([ex, ey, 0.0])
        for _ in range(50):
            sig, tan, trial = update(law, state, eps)
            if not lateral_free or abs(sig[1]) <= 1e-12 * max(abs(sig[0]), law.E * 1e-12):
                break
            k = tan[1, 1]
            if abs(k) < 1e-9 * law.E:
                k = law.E
            eps = eps - np.array([0.0, sig[1] / k, 0.0])
        ey = eps[1]
        state = trial
        out[i] = sig[0]
    return out
