"""System performance measures from pushover histories."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

CONVENTIONS = ("intact_denominator", "damaged_denominator")
DEFAULT_CONVENTION = "damaged_denominator"
FAILURE_CRITERION = "control displacement at the termination event"


class MetricsError(ValueError):
    pass


def _steps(history):
    steps = [s for s in history.steps if s.converged]
    if not steps:
        raise MetricsError("history has no committed steps")
    return steps


def ultimate_capacity(history):
    """Peak load over the committed steps."""
    return max(s.load for s in _steps(history))


def reserve_capacity(U, D):
    if not (U > 0 and D > 0):
        raise MetricsError("capacities must be positive")
    return U - D


def failure_displacement(history):
    ev = history.event("termination")
    if ev is not None:
        return ev.delta
    return _steps(history)[-1].delta


def ductility(history):
    """Failure displacement over first-yield displacement."""
    ev = history.event("first_yield")
    if ev is None:
        raise MetricsError("history has no first_yield event")
    if ev.delta == 0:
        raise MetricsError("first_yield at zero displacement")
    return failure_displacement(history) / ev.delta


def normalize_convention(convention):
    c = {"intact": "intact_denominator", "damaged": "damaged_denominator"}.get(convention, convention)
    if c not in CONVENTIONS:
        raise MetricsError(f"unknown convention {convention!r}")
    return c


def reduction(intact_value, damaged_value, convention=DEFAULT_CONVENTION):
    """Percent reduction of a damaged value relative to the intact one."""
    if not (intact_value > 0 and damaged_value > 0):
        raise MetricsError("reduction needs positive values")
    c = normalize_convention(convention)
    den = intact_value if c == "intact_denominator" else damaged_value
    return 100.0 * (intact_value - damaged_value) / den


def stage_boundaries(history):
    """Load/displacement at the end of stages A (elastic) through D (failure)."""
    ends = {"A": "first_crack", "B": "first_yield", "C": "peak_load", "D": "termination"}
    out = {}
    for stage, kind in ends.items():
        ev = history.event(kind)
        if ev is not None:
            out[stage] = {"event": kind, "load": ev.load, "delta": ev.delta}
    return out


@dataclass
class PerformanceReport:
    scenario: str
    design_capacity: float
    ultimate_capacity: float
    reserve_capacity: float
    ductility: float | None
    delta_u: float
    delta_y: float | None
    termination: str
    redundancy_reduction: float | None = None
    ductility_reduction: float | None = None
    reduction_convention: str = DEFAULT_CONVENTION
    failure_criterion: str = FAILURE_CRITERION
    stages: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_text(self):
        return json.dumps({"performance_report": self.to_dict()}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_text(cls, text):
        return cls.from_dict(json.loads(text)["performance_report"])


def build_report(intact, damaged=None, design_capacity=None, convention=DEFAULT_CONVENTION,
                 scenario=None):
    """Report for ``damaged`` (or for ``intact`` when no damaged history is given)."""
    if design_capacity is None or not design_capacity > 0:
        raise MetricsError("design capacity must be positive")
    convention = normalize_convention(convention)
    target = intact if damaged is None else damaged
    U = ultimate_capacity(target)
    yield_ev = target.event("first_yield")
    mu = ductility(target) if yield_ev is not None else None
    rep = PerformanceReport(
        scenario=scenario or ("intact" if damaged is None else "damaged"),
        design_capacity=float(design_capacity),
        ultimate_capacity=float(U),
        reserve_capacity=float(reserve_capacity(U, design_capacity)),
        ductility=None if mu is None else float(mu),
        delta_u=float(failure_displacement(target)),
        delta_y=None if yield_ev is None else float(yield_ev.delta),
        termination=target.termination,
        reduction_convention=convention,
        stages=stage_boundaries(target),
    )
    if damaged is not None:
        R_i = reserve_capacity(ultimate_capacity(intact), design_capacity)
        if R_i > 0 and rep.reserve_capacity > 0:
            rep.redundancy_reduction = float(reduction(R_i, rep.reserve_capacity, convention))
        if intact.event("first_yield") is not None and mu is not None:
            rep.ductility_reduction = float(reduction(ductility(intact), mu, convention))
    return rep


COLUMNS = ("Scenario", "Ultimate capacity (kN)", "Design capacity (kN)", "Reserve capacity (kN)",
           "Reduction in redundancy (%)", "Ductility", "Reduction in ductility (%)")


def _cell(x, digits):
    return "-" if x is None else f"{x:.{digits}f}"


def comparison_table(reports):
    """Aligned plain-text table, one row per report, Table-1 column order."""
    rows = [COLUMNS]
    for r in reports:
        rows.append((r.scenario, _cell(r.ultimate_capacity / 1e3, 0), _cell(r.design_capacity / 1e3, 0),
                     _cell(r.reserve_capacity / 1e3, 0), _cell(r.redundancy_reduction, 1),
                     _cell(r.ductility, 2), _cell(r.ductility_reduction, 1)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(COLUMNS))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
