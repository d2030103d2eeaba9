import dataclasses

import numpy as np
import pytest

from girderlab.driver import AnalysisSetupError, ControlSpec, EVENT_KINDS, run_analysis
from girderlab.materials import ConcreteLaw
from girderlab.model import generate_plate_model, generate_slab_model
from girderlab.solver import linear_solution


def strip(material=None, thickness=0.01):
    m = generate_plate_model(1.0, 0.1, thickness, 8, 1, supports="strip", load="uniform",
                             load_value=1.0)
    X = m.node_coords()
    node = int(np.argmin(np.linalg.norm(X - [0.5, 0.0, 0.0], axis=1)))
    if material is not None:
        # ten layers (two points each) so the outer point sits near the face
        st = m.layer_stacks["plate"]
        layer = dataclasses.replace(st.layers[0], kind="solid-concrete", thickness=thickness / 10)
        m = m.replace(materials={"steel": material},
                      layer_stacks={"plate": dataclasses.replace(st, layers=(layer,) * 10)})
    return m, node


def test_control_spec_validation():
    for bad in (dict(step=0), dict(max_steps=0), dict(min_step_factor=2.0), dict(dof="rx"),
                dict(residual_tol=0)):
        with pytest.raises(ValueError):
            ControlSpec(**bad)
    with pytest.raises(ValueError):
        ControlSpec().resolve(generate_plate_model(1.0, 0.1, 0.01, 2, 1))


def test_elastic_path_matches_linear_solution():
    m, node = strip()
    u = linear_solution(m).reshape(-1, 6)
    k_lin = 1.0 / -u[node, 2]
    h = run_analysis(m, control=ControlSpec(control_node=node, dof="uz", step=1e-5, max_steps=3))
    assert h.termination == "max_steps"
    assert len(h.steps) == 4
    assert h.deltas[1:] == pytest.approx([1e-5, 2e-5, 3e-5], rel=1e-9)
    assert h.loads[1:] / h.deltas[1:] == pytest.approx(np.full(3, k_lin), rel=1e-4)
    assert h.event("termination").step == 3
    assert all(s.iterations >= 1 for s in h.steps[1:])


def test_runs_are_deterministic():
    m, node = strip()
    ctl = ControlSpec(control_node=node, dof="uz", step=2e-3, max_steps=3)
    a, b = run_analysis(m, control=ctl), run_analysis(m, control=ctl)
    assert a.to_csv() == b.to_csv() and a.events_csv() == b.events_csv()


@pytest.fixture(scope="module")
def cracking_strip():
    m, node = strip(ConcreteLaw(30e9, 0.0, 30e6, 3e6), thickness=0.1)
    return run_analysis(m, control=ControlSpec(control_node=node, dof="uz", step=4e-5,
                                               max_steps=20))


def test_softening_ends_in_load_drop(cracking_strip):
    h = cracking_strip
    assert h.termination == "load_drop"
    kinds = [e.kind for e in h.events]
    assert kinds[-1] == "termination"
    assert kinds.index("first_crack") <= kinds.index("peak_load")
    peak = max(h.loads)
    assert h.loads[-1] < 0.8 * peak
    assert h.event("peak_load").load == peak


def test_first_crack_matches_elastic_cracking_moment(cracking_strip):
    # simply supported strip under uniform load w: midspan M = wL^2/8, cracking at ft t^2/6 per width
    b, t, L, ft = 0.1, 0.1, 1.0, 3e6
    P_cr = 8 * ft * b * t**2 / 6 / L
    assert cracking_strip.event("first_crack").load == pytest.approx(P_cr, rel=0.2)


def test_events_sorted_and_known(cracking_strip):
    order = {k: i for i, k in enumerate(EVENT_KINDS)}
    keys = [(e.step, order[e.kind]) for e in cracking_strip.events]
    assert keys == sorted(keys)


def test_mechanism_raises_setup_error():
    m, node = strip()
    m = m.replace(supports=m.supports[:1])
    with pytest.raises(AnalysisSetupError):
        run_analysis(m, control=ControlSpec(control_node=node, dof="uz", step=1e-5, max_steps=2))


def test_slab_cracks_before_rebar_yields():
    m = generate_slab_model(mesh_n=4)
    h = run_analysis(m, control=ControlSpec(step=1e-3, max_steps=12))
    crack, yld = h.event("first_crack"), h.event("first_yield")
    assert crack is not None
    if yld is not None:
        assert crack.step <= yld.step and crack.load < yld.load


def test_csv_format():
    m, node = strip()
    h = run_analysis(m, control=ControlSpec(control_node=node, dof="uz", step=1e-5, max_steps=1))
    lines = h.to_csv().splitlines()
    assert lines[0] == "step,P_newtons,delta_meters,event"
    assert lines[-1].endswith("termination")
    assert h.events_csv().splitlines()[0] == "kind,step,P_newtons,delta_meters,location"
