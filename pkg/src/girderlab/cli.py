"""Command-line front end: validate | analyze | buckle | benchmarks."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


from . import io as gio
from . import metrics
from .driver import AnalysisSetupError, ControlSpec, fmt, run_analysis
from .model import validate_model
from .solver import EigenError, SolverError, buckling_analysis

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _err(msg):
    print(msg, file=sys.stderr)


def _threads():
    try:
        return max(1, int(os.environ.get("GIRDERLAB_THREADS", "1")))
    except ValueError:
        return 1


def _load(path):
    """(model, control overrides) from a model file."""
    data = gio.load_json(path)
    model = gio.model_from_dict(data, path)
    return model, gio.control_from_dict(data.get("control"))


def _control(model, file_ctl, args):
    kw = dict(file_ctl)
    if getattr(args, "step", None) is not None:
        kw["step"] = args.step
    if getattr(args, "max_steps", None) is not None:
        kw["max_steps"] = args.max_steps
    if getattr(args, "control_node", None) is not None:
        kw["control_node"] = args.control_node
    return ControlSpec(**kw)


# ---------------------------------------------------------------------------


def cmd_validate(args):
    model, _ = _load(args.model)
    diags = validate_model(model)
    for d in diags:
        _err(f"{args.model}: {d}")
    if diags:
        return EXIT_FAIL
    print(f"{args.model}: valid ({model.n_nodes} nodes, {len(model.elements)} elements)")
    return EXIT_OK


def report_text(rep, history):
    lines = [f"scenario: {rep.scenario}",
             f"termination: {rep.termination}",
             f"failure criterion: {rep.failure_criterion}",
             f"reduction convention: {rep.reduction_convention}", "",
             "events:"]
    for e in history.events:
        lines.append(f"  {e.kind:<22} step {e.step:>4}  P = {e.load / 1e3:10.1f} kN"
                     f"  delta = {e.delta * 1e3:8.2f} mm  {e.location}")
    lines += ["", metrics.comparison_table([rep]).rstrip()]
    return "\n".join(lines) + "\n"


def _analyze_one(model, scenario, control):
    return run_analysis(model, scenario, control)


def cmd_analyze(args):
    model, file_ctl = _load(args.model)
    diags = validate_model(model)
    if diags:
        for d in diags:
            _err(f"{args.model}: {d}")
        return EXIT_FAIL
    scenarios = [gio.read_scenario(p, model) for p in (args.scenario or [])]
    names = ["intact"] + [s.name for s in scenarios]
    if len(set(names)) != len(names):
        _err("scenario names must be unique and differ from 'intact'")
        return EXIT_INPUT
    control = _control(model, file_ctl, args)
    jobs = [None] + scenarios
    try:
        with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as pool:
            histories = list(pool.map(lambda s: _analyze_one(model, s, control), jobs))
    except (AnalysisSetupError, SolverError, ValueError) as exc:
        _err(f"analysis setup failed: {exc}")
        return EXIT_FAIL

    out = Path(args.out)
    conv = metrics.normalize_convention(args.convention)
    intact = histories[0]
    reports = []
    for name, sc, h in zip(names, jobs, histories):
        rep = metrics.build_report(intact, None if sc is None else h, model.design_capacity,
                                   conv, scenario=name)
        reports.append(rep)
        d = out / name
        gio.write_atomic(d / "curve.csv", h.to_csv())
        gio.write_atomic(d / "events.csv", h.events_csv())
        gio.write_atomic(d / "report.txt", report_text(rep, h))
        structured = {"performance_report": rep.to_dict(),
                      "assumptions": list(sc.assumptions) if sc is not None else [],
                      "control": {"node": h.control[0], "dof": h.control[1], "step": control.step,
                                  "max_steps": control.max_steps}}
        gio.write_atomic(d / "report.json", gio.dumps(structured))
        print(f"{name}: U = {fmt(rep.ultimate_capacity)} N, termination {h.termination}")
    gio.write_atomic(out / "comparison.txt", metrics.comparison_table(reports))
    print(metrics.comparison_table(reports), end="")
    return EXIT_OK


def cmd_buckle(args):
    model, _ = _load(args.model)
    diags = validate_model(model)
    if diags:
        for d in diags:
            _err(f"{args.model}: {d}")
        return EXIT_FAIL
    out = Path(args.out)
    rows = ["mode,lambda,residual\n"]
    shapes = ["mode,node,ux,uy,uz\n"]
    if args.modes > 0:
        try:
            res = buckling_analysis(model, args.modes)
        except (EigenError, SolverError) as exc:
            _err(f"buckling analysis failed: {exc}")
            return EXIT_FAIL
        for k, (lam, r) in enumerate(zip(res.factors, res.residuals), start=1):
            rows.append(f"{k},{fmt(lam)},{fmt(r)}\n")
            phi = res.modes[k - 1].reshape(-1, 6)
            for n in range(model.n_nodes):
                shapes.append(f"{k},{n},{fmt(phi[n, 0])},{fmt(phi[n, 1])},{fmt(phi[n, 2])}\n")
            print(f"mode {k}: lambda = {lam:.6g}")
    gio.write_atomic(out / "modes.csv", "".join(rows))
    gio.write_atomic(out / "mode_shapes.csv", "".join(shapes))
    return EXIT_OK


def cmd_benchmarks(args):
    from .benchmarks import run_benchmarks

    phases = args.only.split(",") if args.only else None
    results = run_benchmarks(phases, golden=args.golden)
    width = max((len(r.name) for r in results), default=10)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.ok else 'FAIL'}  {r.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="girderlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("--model", required=True)
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("analyze", help="pushover analysis of intact and damaged models")
    a.add_argument("--model", required=True)
    a.add_argument("--scenario", action="append", help="damage scenario file (repeatable)")
    a.add_argument("--out", required=True)
    a.add_argument("--convention", choices=("intact", "damaged"), default="damaged")
    a.add_argument("--step", type=float, help="control displacement step (m)")
    a.add_argument("--max-steps", type=int)
    a.add_argument("--control-node", type=int)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("buckle", help="linearized buckling modes")
    b.add_argument("--model", required=True)
    b.add_argument("--modes", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_buckle)

    k = sub.add_parser("benchmarks", help="run the bundled benchmark suite")
    k.add_argument("--only", help="comma-separated phases: phase1,phase2,phase3,phase4")
    k.add_argument("--golden", help="alternative capacity-table golden file")
    k.set_defaults(func=cmd_benchmarks)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "modes", 0) < 0:
        _err("--modes must be >= 0")
        return EXIT_INPUT
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _err(f"file not found: {exc.filename}")
        return EXIT_INPUT
    except gio.InputError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
