"""The bundled benchmark suite, one group of checks per framework phase."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import io as gio
from . import metrics
from .damage import apply_scenario
from .driver import BehavioralEvent, ControlSpec, ResponseHistory, StepRecord, run_analysis

PHASES = ("phase1", "phase2", "phase3", "phase4")


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def load_bundled(name):
    """(model, ControlSpec) for a bundled model file."""
    data = gio.load_json(gio.data_path(f"{name}.json"))
    return gio.model_from_dict(data), ControlSpec(**gio.control_from_dict(data.get("control")))


def synthetic_history(U, delta_y, delta_u, n=4):
    """Monotone history peaking at ``U`` with first yield at ``delta_y``."""
    d = np.linspace(0.0, delta_u, n + 1)
    d = np.unique(np.concatenate([d, [delta_y]]))
    p = U * np.minimum(d / delta_u, 1.0)
    steps = [StepRecord(i, float(pi), float(di)) for i, (pi, di) in enumerate(zip(p, d))]
    k = int(np.nonzero(d == delta_y)[0][0])
    events = [BehavioralEvent("first_yield", k, float(p[k]), float(delta_y)),
              BehavioralEvent("termination", n, float(p[-1]), float(d[-1]), "max_steps")]
    return ResponseHistory(steps, events, "max_steps")


def table1_checks(golden=None):
    path = golden or gio.data_path("table1_golden.json")
    g = json.loads(open(path, encoding="utf-8").read())
    D = gio.quantity(g["design_capacity"])
    conv = g["convention"]
    tol = g["tolerance_points"]
    rows = g["rows"]
    hist = {r["scenario"]: synthetic_history(gio.quantity(r["ultimate_capacity"]),
                                             gio.quantity(r["delta_y"]), gio.quantity(r["delta_u"]))
            for r in rows}
    intact = hist[rows[0]["scenario"]]
    out = []
    for r in rows:
        name = r["scenario"]
        rep = metrics.build_report(intact, None if name == rows[0]["scenario"] else hist[name], D,
                                   conv, scenario=name)
        want = gio.quantity(r["reserve_capacity"])
        out.append(CheckResult(f"phase4.table1.{name}.reserve", rep.reserve_capacity == want,
                               f"{rep.reserve_capacity / 1e3:g} kN vs {want / 1e3:g} kN"))
        for key, t in (("redundancy_reduction", tol["redundancy_reduction"]),
                       ("ductility_reduction", tol["ductility_reduction"])):
            if key in r:
                got = getattr(rep, key)
                ok = got is not None and abs(got - r[key]) <= t
                out.append(CheckResult(f"phase4.table1.{name}.{key}", ok,
                                       f"{got:.3f}% vs {r[key]}% (tol {t})"))
    return out


def _order_ok(h, kinds):
    steps = [h.event(k) for k in kinds]
    if any(e is None for e in steps):
        return False
    return all(a.step <= b.step for a, b in zip(steps, steps[1:]))


def slab_checks():
    model, ctl = load_bundled("mcneice_slab")
    h = run_analysis(model, control=ctl)
    crack = h.event("first_crack")
    ok = _order_ok(h, ("first_crack", "first_yield"))
    out = [CheckResult("phase1.slab.event_order", ok,
                       f"first crack at {crack.load / 1e3:.2f} kN" if crack else "no crack")]
    P, d = h.loads, h.deltas
    k0 = P[1] / d[1]
    ks = P[-1] / d[-1]
    out.append(CheckResult("phase1.slab.softening", bool(crack and ks < k0),
                           f"secant/initial stiffness {ks / k0:.3f}"))
    return out


def girder_checks():
    model, ctl = load_bundled("lagerqvist_girder")
    sc = gio.read_scenario(gio.data_path("lagerqvist_seed.json"), model)
    seeded = apply_scenario(model, sc)
    h = run_analysis(seeded, control=ctl)
    off = seeded.node_coords() - model.node_coords()
    seed = off[:, 1]
    u = h.final_displacements.reshape(-1, 6)[:, 1]
    corr = abs(float(seed @ u) / (np.linalg.norm(seed) * np.linalg.norm(u) + 1e-300))
    return [CheckResult("phase1.girder.collapse_mode", corr >= 0.9,
                        f"lateral web shape correlation {corr:.3f}, U = {metrics.ultimate_capacity(h) / 1e3:.1f} kN")]


def bridge_checks():
    model, ctl = load_bundled("nebraska_bridge")
    h = run_analysis(model, control=ctl)
    U = metrics.ultimate_capacity(h)
    return [CheckResult("phase2.bridge.stage_order",
                        _order_ok(h, ("first_crack", "first_yield", "plastic_hinge", "termination")),
                        ", ".join(f"{e.kind}@{e.step}" for e in h.events)),
            CheckResult("phase2.bridge.exceeds_design", U > model.design_capacity,
                        f"U/D = {U / model.design_capacity:.2f}")]


def beam_end_checks():
    model, ctl = load_bundled("mtu_beam_end")
    sc = gio.read_scenario(gio.data_path("mtu_corrosion.json"), model)
    U0 = metrics.ultimate_capacity(run_analysis(model, control=ctl))
    U1 = metrics.ultimate_capacity(run_analysis(model, sc, control=ctl))
    return [CheckResult("phase3.beam_end.capacity_drop", U1 < U0,
                        f"intact {U0 / 1e3:.1f} kN, corroded {U1 / 1e3:.1f} kN "
                        f"({100 * (U0 - U1) / U0:.1f}% lower)")]


GROUPS = {"phase1": (slab_checks, girder_checks), "phase2": (bridge_checks,),
          "phase3": (beam_end_checks,), "phase4": (table1_checks,)}


def run_benchmarks(phases=None, golden=None):
    phases = phases or PHASES
    out = []
    for ph in phases:
        if ph not in GROUPS:
            out.append(CheckResult(ph, False, "unknown phase"))
            continue
        for fn in GROUPS[ph]:
            try:
                out.extend(fn(golden) if fn is table1_checks else fn())
            except Exception as exc:  # a crashed check is a failed check
                out.append(CheckResult(f"{ph}.{fn.__name__}", False, f"{type(exc).__name__}: {exc}"))
    return out
