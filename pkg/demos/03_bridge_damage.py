"""Pushover of the three-girder bridge, intact and with one damage scenario.

Usage: python3 demos/03_bridge_damage.py [corrosion|impact|fire]

Each run takes about two minutes on one core. The printed event list gives
the stages of the intact response (cracking, first yield, hinge, end), and
the table compares reserve capacity and ductility against the design load.
"""

import sys

from girderlab import metrics
from girderlab.benchmarks import load_bundled
from girderlab.damage import standard_scenarios
from girderlab.driver import run_analysis

which = sys.argv[1] if len(sys.argv) > 1 else "corrosion"
model, ctl = load_bundled("nebraska_bridge")
scenario = {s.name: s for s in standard_scenarios(model)}[which]
print("assumptions:", *scenario.assumptions, sep="\n  ")

intact = run_analysis(model, control=ctl)
for e in intact.events:
    print(f"  {e.kind:<14} P = {e.load / 1e3:8.1f} kN   delta = {e.delta * 1e3:7.1f} mm  {e.location}")
damaged = run_analysis(model, scenario, control=ctl)

reports = [metrics.build_report(intact, None, model.design_capacity, scenario="intact"),
           metrics.build_report(intact, damaged, model.design_capacity, scenario=which)]
print(metrics.comparison_table(reports))
print("termination:", intact.termination, "/", damaged.termination)
