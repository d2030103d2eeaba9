"""Displacement-controlled Newton continuation with behavioral event tagging."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .materials import ConcreteLaw, plane_stress_elasticity, von_mises
from .model import DOF_NAMES, tag_matches
from .shell import CONCRETE, REBAR, STEEL, ElementSet
from .solver import Assembler, DofMap, Factor, SolverError, load_vector, scatter_vector

EVENT_KINDS = ("first_crack", "first_yield", "plastic_hinge", "peak_load",
               "punching_shear_onset", "termination")
ONSET_TOL = 1e-7
BRACKET_TOL = 1e-4
STALL_ITERATIONS = 6


class AnalysisSetupError(RuntimeError):
    """Raised when the very first step cannot converge (a modeling error)."""


@dataclass(frozen=True)
class ControlSpec:
    control_node: int | None = None
    dof: str | None = None
    step: float = 1e-3
    max_steps: int = 100
    residual_tol: float = 1e-6
    increment_tol: float = 1e-8
    max_iterations: int = 25
    min_step_factor: float = 1.0 / 64.0
    drop_ratio: float = 0.8
    hinge_threshold: float = 0.9
    hinge_parts: tuple = ("web", "bottom_flange")
    locate_events: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if not (self.residual_tol > 0 and self.increment_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_steps < 1 or self.max_iterations < 1:
            raise ValueError("max_steps and max_iterations must be >= 1")
        if not 0 < self.min_step_factor <= 1:
            raise ValueError("min_step_factor must be in (0, 1]")
        if self.dof is not None and self.dof not in DOF_NAMES[:3]:
            raise ValueError("control dof must be a translation")

    def resolve(self, model):
        node = self.control_node if self.control_node is not None else model.metadata.get("control_node")
        dof = self.dof or model.metadata.get("control_dof", "uz")
        if node is None:
            raise ValueError("no control node given and none in model metadata")
        return int(node), dof


@dataclass(frozen=True)
class BehavioralEvent:
    kind: str
    step: int
    load: float
    delta: float
    location: str = ""


@dataclass(frozen=True)
class StepRecord:
    step: int
    load: float
    delta: float
    converged: bool = True
    load_factor: float = 0.0
    reaction: float = 0.0
    iterations: int = 0


@dataclass
class ResponseHistory:
    steps: list
    events: list
    termination: str = ""
    control: tuple = ()
    reference_load: float = 0.0
    snapshot_policy: str = "final"
    final_states: dict | None = field(default=None, repr=False)
    final_displacements: np.ndarray | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict)

    @property
    def loads(self):
        return np.array([s.load for s in self.steps])

    @property
    def deltas(self):
        return np.array([s.delta for s in self.steps])

    def event(self, kind):
        for e in self.events:
            if e.kind == kind:
                return e
        return None

    def to_csv(self):
        return history_csv(self)

    def events_csv(self):
        return events_csv(self)


def fmt(x):
    """17 significant digits, platform independent."""
    return format(float(x), ".17g")


def history_csv(history):
    tags = {}
    for e in history.events:
        tags.setdefault(e.step, []).append(e.kind)
    out = io.StringIO()
    out.write("step,P_newtons,delta_meters,event\n")
    for s in history.steps:
        out.write(f"{s.step},{fmt(s.load)},{fmt(s.delta)},{';'.join(tags.get(s.step, []))}\n")
    return out.getvalue()


def events_csv(history):
    out = io.StringIO()
    out.write("kind,step,P_newtons,delta_meters,location\n")
    for e in history.events:
        out.write(f"{e.kind},{e.step},{fmt(e.load)},{fmt(e.delta)},{e.location}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# event detection


@dataclass
class StepState:
    """Everything event detection needs about one converged step."""

    step: int
    load: float
    delta: float
    load_factor: float
    states: dict
    eps: np.ndarray | None = None
    shear: np.ndarray | None = None


class EventDetector:
    def __init__(self, model, elements: ElementSet, hinge_threshold=0.9,
                 hinge_parts=("web", "bottom_flange")):
        self.model = model
        self.es = elements
        self.hinge_threshold = hinge_threshold
        # the composite top flange sits near the plastic neutral axis and
        # never plastifies, so by default a station is web + bottom flange
        self.hinge_parts = tuple(hinge_parts)
        # girder plates define first yield; models without plate steel
        # (reinforced slabs) fall back to their reinforcement
        kinds = {g.key[1] for g in elements.groups}
        self.yield_kind = STEEL if STEEL in kinds else REBAR
        self._stations = self._hinge_stations()
        self._perimeters = self._punching_perimeters()

    # -- hinge stations ---------------------------------------------------
    def _hinge_stations(self):
        """Map (girder, x) -> list of flat steel point indices."""
        es = self.es
        K = es.K
        cx = es.X[:, :, 0].mean(axis=1)
        groups = {}
        for e, el in enumerate(self.model.elements):
            girder = None
            for t in el.region_tags:
                head, _, part = t.partition(".")
                if head.startswith("girder") and part.split(".")[0] in self.hinge_parts:
                    girder = head
            if girder is None:
                continue
            key = (girder, round(float(cx[e]), 6))
            groups.setdefault(key, []).append(e)
        stations = {}
        steel_groups = [g for g in es.groups if g.key[1] == STEEL]
        for key, elems in sorted(groups.items()):
            elems = np.array(elems)
            idx = []
            for g in steel_groups:
                e_of = g.index // (4 * K)
                sel = np.isin(e_of, elems)
                if sel.any():
                    idx.append((g.key, np.nonzero(sel)[0]))
            if idx:
                stations[key] = idx
        return stations

    def hinge_fractions(self, states):
        out = {}
        for key, parts in self._stations.items():
            n = 0
            y = 0
            for gkey, local in parts:
                alpha = states[gkey].alpha[local]
                n += len(local)
                y += int(np.count_nonzero(alpha > 0.0))
            out[key] = y / n
        return out

    # -- punching ---------------------------------------------------------
    def _punching_perimeters(self):
        model = self.model
        deck = [i for i, e in enumerate(model.elements) if any(tag_matches(t, "deck") for t in e.region_tags)]
        if not deck or not model.load_case.patch_loads:
            return []
        d = float(model.metadata.get("effective_depth", 0.0))
        stack = model.layer_stacks[model.elements[deck[0]].layer_stack_id]
        concrete = [model.materials[layer.material_id] for layer in stack.layers
                    if isinstance(model.materials.get(layer.material_id), ConcreteLaw)]
        if not concrete or d <= 0:
            return []
        fc_mpa = concrete[0].fc / 1e6
        X = self.es.X[deck][:, :, :2]
        lo, hi = X.min(axis=1), X.max(axis=1)
        out = []
        for k, p in enumerate(model.load_case.patch_loads):
            if p.region != "deck":
                continue
            ex, ey = p.extent[0] + d, p.extent[1] + d
            cx, cy = p.center[0], p.center[1]
            b0 = 2.0 * (ex + ey)
            capacity = 0.33 * np.sqrt(fc_mpa) * 1e6 * b0 * d
            pts, normals, ds = [], [], []
            m = 8
            for side, (nx, ny) in enumerate(((0, -1), (1, 0), (0, 1), (-1, 0))):
                for j in range(m):
                    t = (j + 0.5) / m - 0.5
                    if nx == 0:
                        pts.append((cx + t * ex, cy + 0.5 * ny * ey)); ds.append(ex / m)
                    else:
                        pts.append((cx + 0.5 * nx * ex, cy + t * ey)); ds.append(ey / m)
                    normals.append((nx, ny))
            pts = np.array(pts)
            owner = []
            for q in pts:
                inside = np.nonzero(np.all((lo <= q + 1e-12) & (q <= hi + 1e-12), axis=1))[0]
                owner.append(deck[inside[0]] if len(inside) else -1)
            out.append(dict(index=k, capacity=capacity, owner=np.array(owner),
                            normals=np.array(normals, float), ds=np.array(ds)))
        return out

    def punching_ratio(self, shear):
        """Largest demand/capacity over the patch perimeters (0 when unavailable)."""
        best, where = 0.0, ""
        if shear is None:
            return best, where
        for per in self._perimeters:
            ok = per["owner"] >= 0
            if not ok.any():
                continue
            Q = shear[per["owner"][ok]].mean(axis=1)  # local frame (x, y for deck)
            E0 = self.es.E0[per["owner"][ok]]
            Qg = np.einsum("na,nab->nb", Q, E0[:, :2, :2])
            V = abs(np.sum(np.einsum("nb,nb->n", Qg, per["normals"][ok]) * per["ds"][ok]))
            r = V / per["capacity"]
            if r > best:
                best, where = r, f"patch {per['index']}"
        return best, where

    # -- onset measures ---------------------------------------------------
    def measures(self, eps, states):
        """(steel yield ratio, concrete crack ratio) with argmax element ids."""
        es = self.es
        flat = eps.reshape(-1, 3)
        ys, yloc = 0.0, -1
        cs, cloc = 0.0, -1
        for g in es.groups:
            mid, kind = g.key
            law = self.model.materials[mid]
            st = states[g.key]
            if kind == REBAR and self.yield_kind == REBAR:
                e_idx = g.index // (4 * es.K)
                d = es.dirs[e_idx, g.index % es.K]
                t = np.stack([d[:, 0] ** 2, d[:, 1] ** 2, d[:, 0] * d[:, 1]], axis=1)
                sig = law.E * (np.einsum("pi,pi->p", t, flat[g.index]) - st.plastic_strain)
                sy, _ = law.flow_stress(st.alpha)
                r = np.abs(sig) / sy
                r = np.where(st.alpha > 0, np.maximum(r, 1.0), r)
                j = int(np.argmax(r))
                if r[j] > ys:
                    ys, yloc = float(r[j]), int(e_idx[j])
            elif kind == STEEL:
                C = plane_stress_elasticity(law.E, law.nu)
                sig = (flat[g.index] - st.plastic_strain) @ C.T
                sy, _ = law.flow_stress(st.alpha)
                r = von_mises(sig) / sy
                r = np.where(st.alpha > 0, np.maximum(r, 1.0), r)
                j = int(np.argmax(r))
                if r[j] > ys:
                    ys, yloc = float(r[j]), int(g.index[j] // (4 * es.K))
            elif kind == CONCRETE:
                C = plane_stress_elasticity(law.E, law.nu)
                sig = flat[g.index] @ C.T
                c = 0.5 * (sig[:, 0] + sig[:, 1])
                rad = np.sqrt(0.25 * (sig[:, 0] - sig[:, 1]) ** 2 + sig[:, 2] ** 2)
                r = (c + rad) / law.ft
                r = np.where(st.cracked.any(axis=1), np.maximum(r, 1.0) + 1.0, r)
                r = np.where(st.crushed, 2.0, r)
                j = int(np.argmax(r))
                if r[j] > cs:
                    cs, cloc = float(r[j]), int(g.index[j] // (4 * es.K))
        return ys, yloc, cs, cloc

    def element_label(self, e):
        return f"element {self.model.elements[e].id}" if e >= 0 else ""


def detect_events(step_state: StepState, detector: EventDetector, seen=frozenset(),
                  committed=None):
    """Events that first occur at ``step_state``.

    ``seen`` holds kinds already recorded; ``committed`` are the states at
    the start of the step (used for onset measures on trial strains).
    """
    events = []
    s = step_state
    mk = lambda kind, loc="": BehavioralEvent(kind, s.step, float(s.load), float(s.delta), loc)
    if s.eps is not None and ("first_crack" not in seen or "first_yield" not in seen):
        ys, yloc, cs, cloc = detector.measures(s.eps, committed if committed is not None else s.states)
        if "first_crack" not in seen and cs >= 1.0 - ONSET_TOL:
            events.append(mk("first_crack", detector.element_label(cloc)))
        if "first_yield" not in seen and ys >= 1.0 - ONSET_TOL:
            events.append(mk("first_yield", detector.element_label(yloc)))
    if "plastic_hinge" not in seen:
        fr = detector.hinge_fractions(s.states)
        hit = [(v, k) for k, v in fr.items() if v >= detector.hinge_threshold]
        if hit:
            v, k = max(hit)
            events.append(mk("plastic_hinge", f"{k[0]} x={k[1]:.6g}"))
    if "punching_shear_onset" not in seen and s.shear is not None:
        r, where = detector.punching_ratio(s.shear)
        if r >= 1.0:
            events.append(mk("punching_shear_onset", where))
    return events


# ---------------------------------------------------------------------------
# analysis


class _Problem:
    def __init__(self, model, control: ControlSpec):
        self.model = model
        self.control = control
        self.node, self.dof = control.resolve(model)
        self.es = ElementSet(model)
        self.dm = DofMap(model)
        if self.dm.fixed[self.dm.index(self.node, self.dof)]:
            raise ValueError("control dof is constrained")
        self.asm = Assembler(self.es, self.dm)
        self.f_ref = load_vector(model)
        self.fr = self.f_ref[self.dm.free]
        total = model.load_case.total_force
        self.p_ref = float(np.linalg.norm(total)) * float(model.metadata.get("symmetry_factor", 1.0))
        self.load_dir = total / np.linalg.norm(total)
        self.c = int(self.dm.equation[self.dm.index(self.node, self.dof)])

    def evaluate(self, u, states, tangent=True):
        fe, Ke, trial, info = self.es.evaluate(u, states, tangent=tangent)
        f = scatter_vector(self.es, fe)
        K = self.asm.matrix(Ke) if tangent else None
        return f, K, trial, info

    def reaction(self, f_int):
        """Total support reaction along the load direction, scaled like P."""
        r = f_int.reshape(-1, 6)[:, :3].copy()
        fixed = self.dm.fixed.reshape(-1, 6)[:, :3]
        tot = np.sum(np.where(fixed, r, 0.0), axis=0)
        return -float(tot @ self.load_dir) * float(self.model.metadata.get("symmetry_factor", 1.0))


def run_analysis(model, scenario=None, control: ControlSpec | None = None, keep_states=False):
    """Trace the load-deflection path of ``model`` under displacement control.

    The model's load case is scaled by a load factor while the control dof
    advances by ``control.step`` per step (Batoz-Dhatt constraint: two
    back-substitutions per iteration, one factorization). ``scenario`` is
    applied first when given.
    """
    if scenario is not None:
        from .damage import apply_scenario

        model = apply_scenario(model, scenario)
    control = control or ControlSpec()
    pb = _Problem(model, control)
    det = EventDetector(model, pb.es, control.hinge_threshold, control.hinge_parts)
    dm = pb.dm
    u = dm.expand(np.zeros(dm.n_free))
    states = pb.es.initial_states()
    lam = 0.0

    f0, K0, _, _ = pb.evaluate(u, states)
    try:
        a0 = Factor(K0, dm).solve(pb.fr)
    except SolverError as exc:
        raise AnalysisSetupError(f"initial stiffness: {exc}") from exc
    sign = 1.0 if a0[pb.c] >= 0 else -1.0

    steps = [StepRecord(0, 0.0, 0.0, True, 0.0, 0.0, 0)]
    events = []
    seen = set()
    peak = 0.0
    factor = 1.0
    termination = ""
    n_committed = 0

    while n_committed < control.max_steps:
        h = control.step * factor
        ok, res = _newton_step(pb, u, lam, states, sign * h)
        if not ok:
            factor *= 0.5
            if factor < control.min_step_factor - 1e-15:
                if n_committed == 0:
                    raise AnalysisSetupError(
                        "no convergence on the first step (check supports, loads and materials)")
                termination = "nonconvergence"
                break
            continue
        u_new, lam_new, trial, info, f_int, iters = res
        delta = sign * u_new[dm.index(pb.node, pb.dof)]
        load = lam_new * pb.p_ref
        st = StepState(n_committed + 1, load, delta, lam_new, trial, info["eps"], info["Q"])

        if control.locate_events:
            located = _locate_onset(pb, det, u, lam, states, sign * h, seen, info)
            if located is not None:
                u_new, lam_new, trial, info, f_int, iters = located
                delta = sign * u_new[dm.index(pb.node, pb.dof)]
                load = lam_new * pb.p_ref
                st = StepState(n_committed + 1, load, delta, lam_new, trial, info["eps"], info["Q"])

        new_events = detect_events(st, det, seen, committed=states)
        u, lam, states = u_new, lam_new, trial
        n_committed += 1
        steps.append(StepRecord(n_committed, float(load), float(delta), True, float(lam_new),
                                 pb.reaction(f_int), iters))
        for e in new_events:
            events.append(e)
            seen.add(e.kind)
        peak = max(peak, load)
        if load < control.drop_ratio * peak:
            termination = "load_drop"
            break
        factor = min(1.0, factor * 2.0)
    else:
        termination = "max_steps"

    loads = np.array([s.load for s in steps])
    k_peak = int(np.argmax(loads))
    if k_peak < len(steps) - 1 and loads[-1] < loads[k_peak]:
        s = steps[k_peak]
        events.append(BehavioralEvent("peak_load", s.step, s.load, s.delta, ""))
    last = steps[-1]
    events.append(BehavioralEvent("termination", last.step, last.load, last.delta, termination))
    order = {k: i for i, k in enumerate(EVENT_KINDS)}
    events.sort(key=lambda e: (e.step, order[e.kind]))
    hist = ResponseHistory(steps, events, termination, (pb.node, pb.dof), pb.p_ref)
    hist.final_displacements = u
    if keep_states:
        hist.final_states = states
    hist.info = {"reference_load": pb.p_ref, "sign": sign, "step": control.step,
                 "hinge_threshold": control.hinge_threshold, "hinge_parts": control.hinge_parts,
                 "drop_ratio": control.drop_ratio}
    return hist


def _onset_measure(det, eps, states, seen):
    ys, _, cs, _ = det.measures(eps, states)
    m = [v for v, k in ((ys, "first_yield"), (cs, "first_crack")) if k not in seen]
    return max(m) if m else 0.0


def _locate_onset(pb, det, u, lam, states, dctrl, seen, info):
    """Shorten the step so it ends where the first crack or yield begins.

    Illinois (modified regula falsi) on the step fraction, bracketed by the
    committed state and the full trial step. Returns the located step
    result, or None when no onset falls inside this step.
    """
    if "first_crack" in seen and "first_yield" in seen:
        return None
    m1 = _onset_measure(det, info["eps"], states, seen)
    if m1 <= 1.0 + ONSET_TOL:
        return None
    m0 = _onset_measure(det, _last_eps(pb, u, states), states, seen)
    if m0 >= 1.0:
        return None
    lo, flo, hi, fhi = 0.0, m0 - 1.0, 1.0, m1 - 1.0
    hi_res = None
    side = 0
    for k in range(40):
        if hi - lo <= BRACKET_TOL * hi:
            # the response jumps at onset (cracking drops Poisson coupling),
            # so report the first state past the jump
            if hi_res is None:
                ok, hi_res = _newton_step(pb, u, lam, states, dctrl * hi)
                if not ok:
                    return None
            return hi_res
        if k < 8:
            x = hi - fhi * (hi - lo) / (fhi - flo)
        else:
            x = 0.5 * (lo + hi)
        ok, res = _newton_step(pb, u, lam, states, dctrl * x)
        if not ok:
            return None
        fx = _onset_measure(det, res[3]["eps"], states, seen) - 1.0
        if abs(fx) <= ONSET_TOL:
            return res
        if fx > 0:
            hi, fhi, hi_res = x, fx, res
            if side == -1:
                flo *= 0.5
            side = -1
        else:
            lo, flo = x, fx
            if side == 1:
                fhi *= 0.5
            side = 1
    return hi_res


def _last_eps(pb, u, states):
    ue = pb.es.element_dofs(u)
    g, _ = pb.es.local_map(ue)
    em, kap, _ = pb.es.strains(g)
    return pb.es.point_strains(em, kap)


def _newton_step(pb, u0, lam0, states, dctrl):
    """One displacement-controlled step; returns (ok, results)."""
    c = pb.c
    dm = pb.dm
    ctl = pb.control
    f_int, K, _, _ = pb.evaluate(u0, states)
    try:
        fac = Factor(K, dm, check=False)
        a = fac.solve(pb.fr)
    except (SolverError, RuntimeError):
        return False, None
    if not np.isfinite(a[c]) or a[c] == 0:
        return False, None
    # predictor from the start-of-step tangent, corrected for any residual
    r0 = lam0 * pb.fr - f_int[dm.free]
    b = fac.solve(r0)
    dlam = (dctrl - b[c]) / a[c]
    du = b + dlam * a
    u = u0.copy()
    u[dm.free] += du
    lam = lam0 + dlam
    inc_norm = np.inf
    best, best_it = np.inf, 0
    for it in range(1, ctl.max_iterations + 1):
        try:
            f_int, K, trial, info = pb.evaluate(u, states)
        except (ValueError, FloatingPointError):
            return False, None
        r = lam * pb.fr - f_int[dm.free]
        rn = np.linalg.norm(r) / max(np.linalg.norm(lam * pb.fr), 1e-300)
        if not np.isfinite(rn):
            return False, None
        if rn < best:
            best, best_it = rn, it
        elif it - best_it >= STALL_ITERATIONS:
            # no progress for several iterations: cut the step now
            return False, None
        if rn <= ctl.residual_tol and inc_norm <= ctl.increment_tol:
            info = dict(info)
            info["eps"] = pb.es.point_strains(*pb.es.strains(info["g"])[:2])
            return True, (u, lam, trial, info, f_int, it)
        try:
            fac = Factor(K, dm, check=False)
            a = fac.solve(pb.fr)
            b = fac.solve(r)
        except (SolverError, RuntimeError):
            return False, None
        if not np.isfinite(a[c]) or a[c] == 0:
            return False, None
        dl = -b[c] / a[c]
        du = b + dl * a
        if not np.all(np.isfinite(du)):
            return False, None
        u[dm.free] += du
        lam += dl
        un = np.linalg.norm(u[dm.free])
        inc_norm = np.linalg.norm(du) / max(un, 1e-300)
    return False, None
