"""Dof numbering, deterministic sparse assembly, factorization and buckling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import DOF_NAMES, tag_matches
from .shell import ElementSet, shape


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    def __init__(self, message, dof=None):
        super().__init__(message)
        self.dof = dof


class EigenError(SolverError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


# ---------------------------------------------------------------------------
# dof numbering


class DofMap:
    """Six dofs per node; supported dofs are eliminated from the equations.

    ``extra_fixed`` adds (node, dof name) pairs treated as constraints, used
    by the driver for the displacement-control dof.
    """

    def __init__(self, model, extra_fixed=()):
        self.n_nodes = model.n_nodes
        self.n_total = 6 * self.n_nodes
        fixed = np.zeros(self.n_total, bool)
        prescribed = np.zeros(self.n_total)
        for s in model.supports:
            for name in s.fixed_dofs:
                k = 6 * s.node_id + DOF_NAMES.index(name)
                fixed[k] = True
                prescribed[k] = s.prescribed_value
        for node, name in extra_fixed:
            fixed[6 * node + DOF_NAMES.index(name)] = True
        self.fixed = fixed
        self.prescribed = prescribed
        self.free = np.nonzero(~fixed)[0]
        self.constrained = np.nonzero(fixed)[0]
        self.equation = np.full(self.n_total, -1)
        self.equation[self.free] = np.arange(len(self.free))

    @property
    def n_free(self):
        return len(self.free)

    def index(self, node, dof):
        return 6 * node + DOF_NAMES.index(dof)

    def label(self, global_dof):
        node, d = divmod(int(global_dof), 6)
        return (node, DOF_NAMES[d])

    def expand(self, u_free, constrained_values=None):
        u = np.zeros(self.n_total)
        u[self.fixed] = self.prescribed[self.fixed] if constrained_values is None else constrained_values
        u[self.free] = u_free
        return u


# ---------------------------------------------------------------------------
# assembly


@dataclass
class SystemMatrices:
    K: sp.csr_matrix
    f: np.ndarray
    K_g: sp.csr_matrix | None = None


class Assembler:
    """Scatter pattern from element matrices into a CSR matrix over free dofs.

    The reduction uses ``np.bincount`` over a fixed entry order, so repeated
    assemblies are bitwise identical.
    """

    def __init__(self, elements: ElementSet, dofmap: DofMap):
        self.dofmap = dofmap
        eq = dofmap.equation[elements.dof_index]  # (n, 24)
        rows = np.repeat(eq[:, :, None], 24, axis=2)
        cols = np.repeat(eq[:, None, :], 24, axis=1)
        keep = (rows >= 0) & (cols >= 0)
        self.keep = keep.ravel()
        nf = dofmap.n_free
        keys = (rows.astype(np.int64) * nf + cols)[keep]
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.n_nz = len(uniq)
        r = uniq // nf
        c = uniq % nf
        self.indptr = np.searchsorted(r, np.arange(nf + 1))
        self.indices = c
        self.shape = (nf, nf)
        self.elem_eq = eq

    def matrix(self, element_matrices):
        vals = np.bincount(self.inverse, weights=element_matrices.reshape(-1)[self.keep],
                           minlength=self.n_nz)
        return sp.csr_matrix((vals, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def scatter_vector(elements: ElementSet, element_vectors):
    """Global vector (6 per node) from element vectors, in fixed order."""
    n_total = 6 * elements.model.n_nodes
    return np.bincount(elements.dof_index.ravel(), weights=element_vectors.ravel(),
                       minlength=n_total)


def assemble(model, displacements=None, states=None, elements=None, dofmap=None):
    """Tangent and internal force of ``model`` at ``displacements``.

    Returns :class:`SystemMatrices` with ``K`` over free dofs and ``f`` the
    full internal force vector (6 per node).
    """
    elements = elements or ElementSet(model)
    dofmap = dofmap or DofMap(model)
    u = np.zeros(6 * model.n_nodes) if displacements is None else np.asarray(displacements, float)
    states = states or elements.initial_states()
    fe, Ke, _, _ = elements.evaluate(u, states)
    asm = Assembler(elements, dofmap)
    return SystemMatrices(asm.matrix(Ke), scatter_vector(elements, fe))


def load_vector(model, elements: ElementSet | None = None):
    """Consistent nodal forces (6 per node) of the model's load case."""
    f = np.zeros(6 * model.n_nodes)
    for p in model.load_case.point_loads:
        f[6 * p.node_id:6 * p.node_id + 3] += p.force
    if model.load_case.patch_loads:
        xyz = model.node_coords()
        conn = model.connectivity()
        for p in model.load_case.patch_loads:
            f += _patch_forces(model, xyz, conn, p)
    return f


def _patch_forces(model, xyz, conn, patch):
    f = np.zeros(6 * model.n_nodes)
    cx, cy = patch.center[0], patch.center[1]
    ex, ey = patch.extent
    lo = np.array([cx - 0.5 * ex, cy - 0.5 * ey])
    hi = np.array([cx + 0.5 * ex, cy + 0.5 * ey])
    pressure = patch.resultant / (ex * ey)
    d = np.asarray(patch.direction, float)
    gp = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    for e, el in enumerate(model.elements):
        if not any(tag_matches(t, patch.region) for t in el.region_tags):
            continue
        pts = xyz[conn[e]][:, :2]
        blo = np.maximum(lo, pts.min(axis=0))
        bhi = np.minimum(hi, pts.max(axis=0))
        if np.any(bhi - blo <= 1e-12 * max(ex, ey)):
            continue
        area = np.prod(bhi - blo)
        for a in gp:
            for b in gp:
                q = 0.5 * (blo + bhi) + 0.5 * (bhi - blo) * np.array([a, b])
                xi = _inverse_bilinear(pts, q)
                if xi is None:
                    continue
                N, _ = shape(*xi)
                for k, node in enumerate(conn[e]):
                    f[6 * node:6 * node + 3] += N[k] * pressure * 0.25 * area * d
    return f


def _inverse_bilinear(pts, q, tol=1e-12):
    xi = np.zeros(2)
    for _ in range(20):
        N, dN = shape(*xi)
        r = N @ pts - q
        J = dN @ pts
        try:
            step = np.linalg.solve(J.T, r)
        except np.linalg.LinAlgError:
            return None
        xi -= step
        if np.abs(step).max() < tol:
            break
    if np.any(np.abs(xi) > 1 + 1e-9):
        return None
    return xi


# ---------------------------------------------------------------------------
# factorization


class Factor:
    """Sparse LU in symmetric mode (no off-diagonal pivoting), i.e. LDL^T."""

    def __init__(self, K, dofmap: DofMap | None = None, check=True):
        K = sp.csc_matrix(K)
        self.K = K
        self.dofmap = dofmap
        if K.shape[0] == 0:
            self.lu = None
            return
        diag = np.abs(K.diagonal())
        scale = diag.max() if diag.size else 1.0
        try:
            self.lu = splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError:
            self._diagnose_exact(K, scale)
        pivots = self.lu.U.diagonal()
        self.pivots = pivots
        if check:
            # U's k-th column is original column inv[k]; a mechanism shows up
            # as a pivot that has lost nearly all of its own diagonal too
            inv = np.argsort(self.lu.perm_c)
            own = diag[inv]
            bad = np.nonzero((np.abs(pivots) <= 1e-11 * scale) & (np.abs(pivots) <= 1e-8 * own))[0]
            if bad.size:
                self._raise(int(inv[bad[0]]), "near-zero pivot (mechanism or unconstrained dof)")

    @property
    def n_negative(self):
        return 0 if self.lu is None else int(np.sum(self.pivots < 0))

    def _label(self, eq):
        if self.dofmap is None:
            return f"equation {eq}"
        node, name = self.dofmap.label(self.dofmap.free[eq])
        return f"node {node} dof {name}"

    def _raise(self, eq, why):
        dof = None if self.dofmap is None else self.dofmap.label(self.dofmap.free[eq])
        raise SingularSystemError(f"singular stiffness at {self._label(eq)}: {why}", dof)

    def _diagnose_exact(self, K, scale):
        reg = K + sp.identity(K.shape[0], format="csc") * (1e-13 * scale)
        lu = splu(reg, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
        piv = np.abs(lu.U.diagonal())
        self._raise(int(np.argsort(lu.perm_c)[int(np.argmin(piv))]), "exactly singular factorization")

    def solve(self, f):
        if self.lu is None:
            return np.zeros_like(f)
        return self.lu.solve(np.asarray(f, float))


def residual(K, u, f):
    """``f - K u`` accumulated in extended precision.

    The float64 product has a rounding floor near ``eps * |K| |u|`` which for
    shells with soft drilling dofs sits above 1e-10 of ``|f|``; refinement and
    the acceptance check need the residual below that floor.
    """
    KL = sp.csr_matrix(K).astype(np.longdouble)
    r = np.asarray(f, np.longdouble) - KL @ np.asarray(u, np.longdouble)
    return r


def solve_linear(K, f, dofmap=None, tol=1e-10):
    """Solve ``K u = f`` with iterative refinement and a relative residual check."""
    f = np.asarray(f, float)
    if not np.any(f):
        return np.zeros_like(f)
    fac = Factor(K, dofmap)
    u = np.asarray(fac.solve(f), np.longdouble)
    fn = float(np.linalg.norm(f))
    res = np.inf
    for _ in range(6):
        r = residual(K, u, f)
        res = float(np.linalg.norm(r)) / fn
        if res <= 0.1 * tol:
            break
        u = u + fac.solve(np.asarray(r, float))
    u = np.asarray(u, float)
    res = float(np.linalg.norm(residual(K, u, f))) / fn
    if res > tol:
        raise SolverError(f"linear solve residual {res:.3e} exceeds {tol:.1e}")
    return u


# ---------------------------------------------------------------------------
# linear analysis helpers


def linear_solution(model, elements=None, dofmap=None, load=None):
    """Small-displacement solution under the model's reference load."""
    elements = elements or ElementSet(model)
    dofmap = dofmap or DofMap(model)
    sysm = assemble(model, None, None, elements, dofmap)
    f = load_vector(model) if load is None else load
    rhs = f[dofmap.free]
    pres = dofmap.prescribed[dofmap.fixed]
    if np.any(pres):
        # nonzero prescribed values: move their coupling to the right side
        _, Ke, _, _ = elements.evaluate(np.zeros(dofmap.n_total), elements.initial_states())
        u_p = dofmap.expand(np.zeros(dofmap.n_free))
        f_p = scatter_vector(elements, np.einsum("nij,nj->ni", Ke, u_p[elements.dof_index]))
        rhs = rhs - f_p[dofmap.free]
    u_free = solve_linear(sysm.K, rhs, dofmap)
    return dofmap.expand(u_free)


# ---------------------------------------------------------------------------
# buckling


@dataclass(frozen=True)
class BucklingResult:
    factors: np.ndarray  # load multipliers, ascending
    modes: np.ndarray  # (n_modes, n_total) normalized to max |translation| = 1
    residuals: np.ndarray


def buckling_modes(K, K_g, n, dofmap=None, max_iter=500, tol=1e-8, block=None):
    """Lowest positive ``lam`` with ``(K + lam K_g) phi = 0``.

    Subspace inverse iteration: the block is pushed through ``K^-1 (-K_g)``
    and re-orthonormalized in the K inner product each sweep (Gram-Schmidt
    via a Rayleigh-Ritz projection), so converged modes deflate the rest.
    """
    nf = K.shape[0]
    if n <= 0:
        return BucklingResult(np.zeros(0), np.zeros((0, nf)), np.zeros(0))
    K = sp.csc_matrix(K)
    K_g = sp.csc_matrix(K_g)
    fac = Factor(K, dofmap)
    if fac.n_negative:
        raise EigenError("stiffness is not positive definite")
    p = min(nf, block or max(2 * n + 8, n + 12))
    # deterministic start vectors built from the diagonal of -K_g / K
    dk = K.diagonal()
    dg = -K_g.diagonal()
    X = np.zeros((nf, p))
    ratio = dg / np.where(dk > 0, dk, 1.0)
    order = np.argsort(-np.abs(ratio), kind="stable")
    for j in range(p):
        X[order[j % nf], j] = 1.0
        X[:, j] += np.cos((j + 1) * np.arange(nf) * 0.7071) * 1e-3
    res = np.full(n, np.inf)
    lam = np.zeros(n)
    prev = None
    for it in range(max_iter):
        Y = fac.solve(-(K_g @ X))
        Kr = Y.T @ (K @ Y)
        Gr = Y.T @ (-(K_g @ Y))
        Kr = 0.5 * (Kr + Kr.T)
        Gr = 0.5 * (Gr + Gr.T)
        # K-orthonormal Ritz basis
        w, V = np.linalg.eigh(Kr)
        keep = w > 1e-14 * w.max()
        T = V[:, keep] / np.sqrt(w[keep])
        mu, S = np.linalg.eigh(T.T @ Gr @ T)
        X = Y @ (T @ S)
        idx = np.argsort(-mu, kind="stable")
        mu = mu[idx]
        X = X[:, idx]
        if X.shape[1] < p:
            X = np.hstack([X, np.zeros((nf, p - X.shape[1]))])
        pos = mu[mu > 0][:n]
        if len(pos) == n:
            lam = 1.0 / pos
            phi = X[:, :n]
            R = K @ phi + (K_g @ phi) * lam
            res = np.linalg.norm(R, axis=0) / np.linalg.norm(K @ phi, axis=0)
            if np.all(res <= tol):
                break
            if prev is not None and np.allclose(prev, lam, rtol=1e-15, atol=0):
                break
            prev = lam.copy()
    if len(mu[mu > 0]) < n or not np.all(res <= tol):
        raise EigenError(f"buckling iteration did not converge (residual {np.max(res):.3e})",
                         float(np.max(res)))
    modes = X[:, :n].T.copy()
    out = []
    for m in modes:
        full = m if dofmap is None else dofmap.expand(m, 0.0)
        if dofmap is not None:
            trans = full.reshape(-1, 6)[:, :3]
        else:
            trans = full.reshape(-1, 6)[:, :3] if full.size % 6 == 0 else full[:, None]
        k = np.unravel_index(np.argmax(np.abs(trans)), trans.shape)
        full = full / trans[k]
        out.append(full)
    return BucklingResult(lam, np.array(out), res)


def buckling_analysis(model, n, elements=None, dofmap=None):
    """Linearized buckling under the model's reference load case."""
    elements = elements or ElementSet(model)
    dofmap = dofmap or DofMap(model)
    u = linear_solution(model, elements, dofmap)
    N = elements.membrane_resultants(u)
    asm = Assembler(elements, dofmap)
    _, Ke, _, _ = elements.evaluate(np.zeros(dofmap.n_total), elements.initial_states())
    K = asm.matrix(Ke)
    Kg = asm.matrix(elements.initial_stress_matrices(N))
    return buckling_modes(K, Kg, n, dofmap)
