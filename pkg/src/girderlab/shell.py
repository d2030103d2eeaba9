"""Four-node layered flat shell with corotational kinematics.

Local formulation (element frame, small strains):

* membrane: bilinear u, v with the in-plane shear strain sampled at the
  element center (removes parasitic shear in in-plane bending)
* bending: Mindlin plate, rotations beta = (ry, -rx)
* transverse shear: MITC4 assumed strains tied at edge midpoints
* drilling: small penalty tying rz to the membrane rotation at the center

Large rotations are handled by a corotational map ``g(u)`` from global
element dofs to local deformational dofs, written in JAX so that its
Jacobian and the geometric part ``d2(f_loc . g)/du2`` are exact.
Local dof order per node is (u, v, w, rx, ry, rz).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

os.environ.setdefault("XLA_FLAGS", "--xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads=1")
import jax  # noqa: E402
import jax.numpy as jnp  # noqa: E402

jax.config.update("jax_enable_x64", True)

from .materials import (  # noqa: E402
    ConcreteLaw,
    ConcreteState,
    RebarState,
    SteelLaw,
    SteelState,
    concrete_update,
    rebar_update,
    steel_update,
)

GP = 1.0 / np.sqrt(3.0)
GAUSS_2X2 = np.array([[-GP, -GP], [GP, -GP], [GP, GP], [-GP, GP]])
NODE_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
SHEAR_FACTOR = 5.0 / 6.0
DRILL_FACTOR = 1e-4
CHUNK = 128

STEEL, CONCRETE, REBAR = 0, 1, 2


class ElementError(ValueError):
    pass


def shape(xi, eta):
    N = 0.25 * (1 + NODE_XI[:, 0] * xi) * (1 + NODE_XI[:, 1] * eta)
    dN = 0.25 * np.stack([NODE_XI[:, 0] * (1 + NODE_XI[:, 1] * eta),
                          NODE_XI[:, 1] * (1 + NODE_XI[:, 0] * xi)])
    return N, dN


# ---------------------------------------------------------------------------
# through-thickness integration


@dataclass(frozen=True)
class SectionPoints:
    """Integration points of one layer stack, measured from the reference plane."""

    z: np.ndarray
    weight: np.ndarray
    kind: np.ndarray
    material: tuple
    direction: np.ndarray  # (K, 2) rebar direction, zeros otherwise
    shear_rigidity: float
    bending_rigidity: float


def section_points(stack, materials):
    z, w, kind, mat, dirs = [], [], [], [], []
    host = next((layer.material_id for layer in stack.layers if layer.kind == "solid-concrete"), None)
    zb = stack.reference_offset
    gs = 0.0
    for layer in stack.layers:
        h = layer.thickness
        zm = zb + 0.5 * h
        law = materials[layer.material_id]
        if layer.kind == "smeared-rebar":
            rho = layer.rebar_ratio
            z.append(zm); w.append(rho * h); kind.append(REBAR); mat.append(layer.material_id)
            dirs.append(layer.rebar_direction)
            gs += law.G * rho * h
            if host is not None:
                z.append(zm); w.append((1 - rho) * h); kind.append(CONCRETE); mat.append(host)
                dirs.append((0.0, 0.0))
                gs += materials[host].G * (1 - rho) * h
        else:
            k = STEEL if layer.kind == "solid-steel" else CONCRETE
            for s in (-GP, GP):
                z.append(zm + 0.5 * h * s); w.append(0.5 * h); kind.append(k)
                mat.append(layer.material_id); dirs.append((0.0, 0.0))
            gs += law.G * h
        zb += h
    z = np.array(z)
    w = np.array(w)
    D = 0.0
    for zi, wi, ki, mi in zip(z, w, kind, mat):
        law = materials[mi]
        D += wi * zi**2 * (law.E if ki == REBAR else law.E / (1 - law.nu**2))
    # rigidity about the stack centroid of stiffness keeps the drilling
    # penalty scale-free for eccentric stacks
    return SectionPoints(z, w, np.array(kind), tuple(mat), np.array(dirs, float),
                         SHEAR_FACTOR * gs, D)


# ---------------------------------------------------------------------------
# local linear operators


def _local_operators(xy):
    """B operators of one flat element with local node coordinates ``xy`` (4, 2)."""
    Nc, dNc = shape(0.0, 0.0)
    Jc = dNc @ xy
    dxc = np.linalg.solve(Jc, dNc)
    Bm = np.zeros((4, 3, 24))
    Bb = np.zeros((4, 3, 24))
    Bs = np.zeros((4, 2, 24))
    detw = np.zeros(4)
    # MITC4 tying points: A (0,-1), B (1,0), C (0,1), D (-1,0)
    tie = {}
    for name, (r, s) in {"A": (0, -1), "B": (1, 0), "C": (0, 1), "D": (-1, 0)}.items():
        N, dN = shape(r, s)
        J = dN @ xy
        row = np.zeros((2, 24))  # covariant shear (gamma_r, gamma_s)
        for a in range(4):
            # gamma_r = w,r + x,r * ry - y,r * rx
            row[0, 6 * a + 2] = dN[0, a]
            row[0, 6 * a + 4] = J[0, 0] * N[a]
            row[0, 6 * a + 3] = -J[0, 1] * N[a]
            row[1, 6 * a + 2] = dN[1, a]
            row[1, 6 * a + 4] = J[1, 0] * N[a]
            row[1, 6 * a + 3] = -J[1, 1] * N[a]
        tie[name] = row
    for g, (r, s) in enumerate(GAUSS_2X2):
        N, dN = shape(r, s)
        J = dN @ xy
        det = np.linalg.det(J)
        if not det > 0:
            raise ElementError("degenerate or inverted element")
        dx = np.linalg.solve(J, dN)
        detw[g] = det
        for a in range(4):
            c = 6 * a
            Bm[g, 0, c] = dx[0, a]
            Bm[g, 1, c + 1] = dx[1, a]
            Bm[g, 2, c] = dxc[1, a]
            Bm[g, 2, c + 1] = dxc[0, a]
            Bb[g, 0, c + 4] = dx[0, a]
            Bb[g, 1, c + 3] = -dx[1, a]
            Bb[g, 2, c + 4] = dx[1, a]
            Bb[g, 2, c + 3] = -dx[0, a]
        gr = 0.5 * (1 - s) * tie["A"][0] + 0.5 * (1 + s) * tie["C"][0]
        gs = 0.5 * (1 + r) * tie["B"][1] + 0.5 * (1 - r) * tie["D"][1]
        Bs[g] = np.linalg.solve(J, np.stack([gr, gs]))
    drill = np.zeros((4, 24))
    for a in range(4):
        drill[a, 6 * a + 5] = 1.0
        for b in range(4):
            drill[a, 6 * b] += 0.5 * dxc[1, b]
            drill[a, 6 * b + 1] -= 0.5 * dxc[0, b]
    return Bm, Bb, Bs, detw, drill


# ---------------------------------------------------------------------------
# corotational map (JAX)


def _normalize(v):
    return v / jnp.sqrt(jnp.dot(v, v))


def element_frame(x):
    """Rows e1, e2, e3 of the element frame of quad ``x`` (4, 3)."""
    e3 = _normalize(jnp.cross(x[2] - x[0], x[3] - x[1]))
    t = x[1] + x[2] - x[0] - x[3]
    e1 = _normalize(t - jnp.dot(t, e3) * e3)
    e2 = jnp.cross(e3, e1)
    return jnp.stack([e1, e2, e3])


def frames(X):
    """Numpy twin of :func:`element_frame` for a batch (n, 4, 3)."""
    X = np.asarray(X, float).reshape(-1, 4, 3)
    e3 = np.cross(X[:, 2] - X[:, 0], X[:, 3] - X[:, 1])
    norm = np.linalg.norm(e3, axis=1, keepdims=True)
    size = np.linalg.norm(X[:, 2] - X[:, 0], axis=1) * np.linalg.norm(X[:, 3] - X[:, 1], axis=1)
    bad = np.nonzero(~(norm[:, 0] > 1e-12 * size))[0]
    if bad.size:
        raise ElementError(f"element {int(bad[0])}: collapsed diagonals (no element plane)")
    e3 /= norm
    t = X[:, 1] + X[:, 2] - X[:, 0] - X[:, 3]
    e1 = t - np.sum(t * e3, axis=1, keepdims=True) * e3
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    return np.stack([e1, np.cross(e3, e1), e3], axis=1)


def _skew(v):
    return jnp.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_matrix(theta):
    """Rodrigues formula, smooth through zero rotation."""
    p2 = jnp.dot(theta, theta)
    small = p2 < 1e-8
    safe = jnp.where(small, 1.0, p2)
    p = jnp.sqrt(safe)
    a = jnp.where(small, 1.0 - p2 / 6.0 + p2**2 / 120.0, jnp.sin(p) / p)
    b = jnp.where(small, 0.5 - p2 / 24.0 + p2**2 / 720.0, (1.0 - jnp.cos(p)) / safe)
    K = _skew(theta)
    return jnp.eye(3) + a * K + b * (K @ K)


def local_dofs(X, Xloc, E0, ue):
    """Corotational map from global element dofs (24) to local dofs (24)."""
    d = ue.reshape(4, 6)
    x = X + d[:, :3]
    E = element_frame(x)
    xc = jnp.mean(x, axis=0)
    ubar = (x - xc) @ E.T - Xloc
    out = []
    for a in range(4):
        Rl = E @ rotation_matrix(d[a, 3:]) @ E0.T
        w = 0.5 * jnp.array([Rl[2, 1] - Rl[1, 2], Rl[0, 2] - Rl[2, 0], Rl[1, 0] - Rl[0, 1]])
        out.append(jnp.concatenate([ubar[a], w]))
    return jnp.concatenate(out)


def _map_and_jacobian(X, Xloc, E0, ue):
    g = local_dofs(X, Xloc, E0, ue)
    J = jax.jacfwd(local_dofs, argnums=3)(X, Xloc, E0, ue)
    return g, J


def _geometric_term(X, Xloc, E0, ue, f):
    return jax.hessian(lambda u: jnp.dot(f, local_dofs(X, Xloc, E0, u)))(ue)


_map_batch = jax.jit(jax.vmap(_map_and_jacobian))
_geom_batch = jax.jit(jax.vmap(_geometric_term))


def _chunked(fn, arrays):
    n = arrays[0].shape[0]
    outs = []
    for lo in range(0, n, CHUNK):
        part = [a[lo:lo + CHUNK] for a in arrays]
        m = part[0].shape[0]
        if m < CHUNK:
            part = [np.concatenate([p, np.repeat(p[:1], CHUNK - m, axis=0)]) for p in part]
        res = fn(*part)
        if isinstance(res, tuple):
            outs.append(tuple(np.asarray(r)[:m] for r in res))
        else:
            outs.append((np.asarray(res)[:m],))
    return tuple(np.concatenate([o[k] for o in outs]) for k in range(len(outs[0])))


# ---------------------------------------------------------------------------
# material point bookkeeping


def initial_state(law, n):
    if isinstance(law, SteelLaw):
        return SteelState.initial(n)
    return ConcreteState.initial(n)


@dataclass
class PointGroup:
    key: tuple  # (material_id, kind)
    index: np.ndarray  # flat indices into (n_elem * 4 * K)


class ElementSet:
    """All shells of a model compiled into batched arrays."""

    def __init__(self, model):
        self.model = model
        conn = model.connectivity()
        self.conn = conn
        self.n = len(conn)
        X = model.node_coords()[conn]  # (n, 4, 3)
        self.X = X
        E0 = frames(X)
        self.E0 = E0
        xc = X.mean(axis=1, keepdims=True)
        self.Xloc = np.einsum("nij,naj->nai", E0, X - xc)
        self.Bm = np.zeros((self.n, 4, 3, 24))
        self.Bb = np.zeros((self.n, 4, 3, 24))
        self.Bs = np.zeros((self.n, 4, 2, 24))
        self.detw = np.zeros((self.n, 4))
        self.drill = np.zeros((self.n, 4, 24))
        for e in range(self.n):
            try:
                ops = _local_operators(self.Xloc[e, :, :2])
            except ElementError as exc:
                raise ElementError(f"element {model.elements[e].id}: {exc}") from None
            self.Bm[e], self.Bb[e], self.Bs[e], self.detw[e], self.drill[e] = ops
        self.area = self.detw.sum(axis=1)
        self._Bmb = np.concatenate([self.Bm, self.Bb], axis=2)

        sections = {sid: section_points(st, model.materials) for sid, st in model.layer_stacks.items()}
        self.sections = sections
        K = max((len(sections[e.layer_stack_id].z) for e in model.elements), default=1)
        self.K = K
        self.z = np.zeros((self.n, K))
        self.w = np.zeros((self.n, K))
        self.kind = np.full((self.n, K), -1)
        self.dirs = np.zeros((self.n, K, 2))
        self.Ds = np.zeros(self.n)
        self.alpha = np.zeros(self.n)
        keys = {}
        for e, el in enumerate(model.elements):
            sec = sections[el.layer_stack_id]
            k = len(sec.z)
            self.z[e, :k] = sec.z
            self.w[e, :k] = sec.weight
            self.kind[e, :k] = sec.kind
            self.dirs[e, :k] = sec.direction
            self.Ds[e] = sec.shear_rigidity
            self.alpha[e] = DRILL_FACTOR * sec.bending_rigidity
            for j in range(k):
                key = (sec.material[j], int(sec.kind[j]))
                keys.setdefault(key, []).append((e, j))
        self.groups = []
        for key in sorted(keys, key=lambda k: (k[1], k[0])):
            ej = np.array(keys[key])
            flat = ((ej[:, 0:1] * 4 + np.arange(4)[None, :]) * K + ej[:, 1:2]).ravel()
            self.groups.append(PointGroup(key, np.sort(flat)))
        self.dof_index = (conn[:, :, None] * 6 + np.arange(6)[None, None, :]).reshape(self.n, 24)

    # -- states -------------------------------------------------------------
    def initial_states(self):
        out = {}
        for g in self.groups:
            law = self.model.materials[g.key[0]]
            if g.key[1] == REBAR:
                out[g.key] = RebarState.initial(len(g.index))
            else:
                out[g.key] = initial_state(law, len(g.index))
        return out

    # -- kinematics ---------------------------------------------------------
    def element_dofs(self, u):
        return np.asarray(u)[self.dof_index]

    def local_map(self, ue):
        if self.n == 0:
            return np.zeros((0, 24)), np.zeros((0, 24, 24))
        return _chunked(_map_batch, [self.X, self.Xloc, self.E0, ue])

    def geometric_term(self, ue, f_loc):
        return _chunked(_geom_batch, [self.X, self.Xloc, self.E0, ue, f_loc])[0]

    # -- section response ---------------------------------------------------
    def strains(self, g):
        em = np.einsum("ngij,nj->ngi", self.Bm, g)
        kap = np.einsum("ngij,nj->ngi", self.Bb, g)
        gam = np.einsum("ngij,nj->ngi", self.Bs, g)
        return em, kap, gam

    def point_strains(self, em, kap):
        return em[:, :, None, :] + self.z[:, None, :, None] * kap[:, :, None, :]

    def material_response(self, eps, states, tangent=True):
        """Stress and tangent at every point; ``eps`` is (n, 4, K, 3)."""
        flat = eps.reshape(-1, 3)
        sig = np.zeros_like(flat)
        C = np.zeros((flat.shape[0], 3, 3))
        new = {}
        for g in self.groups:
            mid, kind = g.key
            law = self.model.materials[mid]
            e = flat[g.index]
            if kind == REBAR:
                e_idx = g.index // (4 * self.K)
                k_idx = g.index % self.K
                d = self.dirs[e_idx, k_idx]
                t = np.stack([d[:, 0] ** 2, d[:, 1] ** 2, d[:, 0] * d[:, 1]], axis=1)
                s1, c1, st = rebar_update(law, states[g.key], np.einsum("pi,pi->p", t, e))
                sig[g.index] = s1[:, None] * t
                C[g.index] = c1[:, None, None] * np.einsum("pi,pj->pij", t, t)
            elif kind == STEEL:
                s, c, st = steel_update(law, states[g.key], e)
                sig[g.index] = s
                C[g.index] = c
            else:
                s, c, st = concrete_update(law, states[g.key], e)
                sig[g.index] = s
                C[g.index] = c
            new[g.key] = st
        shp = eps.shape
        return sig.reshape(shp), C.reshape(shp + (3,)), new

    def resultants(self, sig, C=None):
        w = self.w[:, None, :, None]
        zw = (self.w * self.z)[:, None, :, None]
        N = np.sum(w * sig, axis=2)
        M = np.sum(zw * sig, axis=2)
        if C is None:
            return N, M
        w4 = w[..., None]
        zw4 = zw[..., None]
        A = np.sum(w4 * C, axis=2)
        B = np.sum(zw4 * C, axis=2)
        D = np.sum(zw4 * self.z[:, None, :, None, None] * C, axis=2)
        return N, M, A, B, D

    def local_force(self, g, N, M, gam):
        Q = self.Ds[:, None, None] * gam
        wt = self.detw[:, :, None]
        f = np.einsum("ngij,ngi->nj", self.Bm, N * wt)
        f += np.einsum("ngij,ngi->nj", self.Bb, M * wt)
        f += np.einsum("ngij,ngi->nj", self.Bs, Q * wt)
        r = np.einsum("naj,nj->na", self.drill, g)
        f += self.alpha[:, None] * np.einsum("naj,na->nj", self.drill, r)
        return f, Q

    def local_tangent(self, A, B, D):
        wt = self.detw[:, :, None, None]
        ABD = np.concatenate([np.concatenate([A, B], axis=3),
                              np.concatenate([B, D], axis=3)], axis=2) * wt
        Bmb = self._Bmb
        K = np.sum(np.swapaxes(Bmb, 2, 3) @ (ABD @ Bmb), axis=1)
        Bs = self.Bs
        K += np.sum(np.swapaxes(Bs, 2, 3) @ Bs * (self.Ds[:, None, None, None] * wt), axis=1)
        K += self.alpha[:, None, None] * (np.swapaxes(self.drill, 1, 2) @ self.drill)
        return K

    # -- element evaluation -------------------------------------------------
    def evaluate(self, u, states, tangent=True, geometric=True):
        """Global element forces (n, 24) and tangents (n, 24, 24).

        Returns ``(f, K, trial_states, info)`` where ``info`` carries local
        quantities used by event detection (resultants, shear forces).
        """
        ue = self.element_dofs(u)
        if not np.all(np.isfinite(ue)):
            raise ElementError("non-finite displacements")
        g, J = self.local_map(ue)
        em, kap, gam = self.strains(g)
        eps = self.point_strains(em, kap)
        sig, C, trial = self.material_response(eps, states)
        if tangent:
            N, M, A, B, D = self.resultants(sig, C)
        else:
            N, M = self.resultants(sig)
        f_loc, Q = self.local_force(g, N, M, gam)
        f = np.einsum("nij,ni->nj", J, f_loc)
        K = None
        if tangent:
            K_loc = self.local_tangent(A, B, D)
            K = np.swapaxes(J, 1, 2) @ K_loc @ J
            if geometric:
                K = K + self.geometric_term(ue, f_loc)
        info = {"N": N, "M": M, "Q": Q, "g": g}
        return f, K, trial, info

    def strain_energy(self, u):
        """Elastic strain energy (valid while every point stays elastic)."""
        ue = self.element_dofs(u)
        g, _ = self.local_map(ue)
        K_loc = self.local_tangent(*self._elastic_abd())
        return 0.5 * np.einsum("ni,nij,nj->n", g, K_loc, g)

    def _elastic_abd(self):
        eps = np.zeros((self.n, 4, self.K, 3))
        _, C, _ = self.material_response(eps, self.initial_states())
        _, _, A, B, D = self.resultants(np.zeros_like(eps), C)
        return A, B, D

    def initial_stress_matrices(self, N):
        """Classical geometric (initial stress) matrices from membrane resultants.

        ``N`` is (n, 4, 3) in element frames. Returned matrices act on
        global element dofs through the initial frame rotation.
        """
        Kg = np.zeros((self.n, 24, 24))
        for g, (r, s) in enumerate(GAUSS_2X2):
            _, dN = shape(r, s)
            J = np.einsum("ia,nab->nib", dN, self.Xloc[:, :, :2])
            dx = np.linalg.solve(J, np.broadcast_to(dN, (self.n, 2, 4)))
            S = np.stack([np.stack([N[:, g, 0], N[:, g, 2]], -1),
                          np.stack([N[:, g, 2], N[:, g, 1]], -1)], -2)
            k4 = np.einsum("nia,nij,njb->nab", dx, S, dx) * self.detw[:, g, None, None]
            for c in range(3):
                Kg[:, c::6, c::6] += k4
        T = self._frame_blocks()
        return np.swapaxes(T, 1, 2) @ Kg @ T

    def _frame_blocks(self):
        T = np.zeros((self.n, 24, 24))
        for b in range(8):
            T[:, 3 * b:3 * b + 3, 3 * b:3 * b + 3] = self.E0
        return T

    def membrane_resultants(self, u, states=None):
        """Resultants (n, 4, 3) from a linear (small displacement) solution."""
        states = states or self.initial_states()
        ue = self.element_dofs(u)
        g = np.einsum("nij,nj->ni", self._frame_blocks(), ue)
        em, kap, _ = self.strains(g)
        sig, _, _ = self.material_response(self.point_strains(em, kap), states)
        return self.resultants(sig)[0]


# ---------------------------------------------------------------------------
# single-element convenience API


def _single(model, index):
    from dataclasses import replace

    el = model.elements[index]
    used = sorted(el.node_ids)
    remap = {n: i for i, n in enumerate(used)}
    nodes = tuple(replace(model.nodes[n], id=remap[n]) for n in used)
    elem = replace(el, node_ids=tuple(remap[n] for n in el.node_ids))
    sub = model.replace(nodes=nodes, elements=(elem,), supports=())
    return ElementSet(sub), used


def _element_vector(model, index, displacements):
    u = np.asarray(displacements, float)
    if u.shape == (24,):
        return u
    el = model.elements[index]
    return u.reshape(-1, 6)[list(el.node_ids)].ravel()


def internal_force(model, index, displacements, states=None):
    """Global 24-vector of element ``index`` and its trial states.

    ``displacements`` is either the global vector (6 per node) or the
    element's own 24 dofs in node order.
    """
    es, used = _single(model, index)
    ue = _element_vector(model, index, displacements)
    u = _scatter_single(es, model, index, used, ue)
    states = states or es.initial_states()
    f, _, trial, _ = es.evaluate(u, states, tangent=False)
    return f[0], trial


def tangent_stiffness(model, index, displacements, states=None):
    es, used = _single(model, index)
    u = _scatter_single(es, model, index, used, _element_vector(model, index, displacements))
    states = states or es.initial_states()
    _, K, _, _ = es.evaluate(u, states)
    return K[0]


def geometric_stiffness(model, index, displacements, states=None):
    es, used = _single(model, index)
    u = _scatter_single(es, model, index, used, _element_vector(model, index, displacements))
    N = es.membrane_resultants(u, states)
    return es.initial_stress_matrices(N)[0]


def _scatter_single(es, model, index, used, ue):
    el = model.elements[index]
    u = np.zeros(len(used) * 6)
    pos = {n: i for i, n in enumerate(used)}
    for a, n in enumerate(el.node_ids):
        u[6 * pos[n]:6 * pos[n] + 6] = ue[6 * a:6 * a + 6]
    return u
