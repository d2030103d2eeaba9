import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from girderlab import io as gio
from girderlab.damage import apply_scenario, standard_scenarios
from girderlab.model import generate_bridge_model, generate_plate_girder_model


@pytest.fixture(scope="module")
def bridge():
    return generate_bridge_model()


@given(st.floats(-1e6, 1e6, allow_nan=False), st.sampled_from(sorted(gio.UNITS)))
def test_quantity_units(x, unit):
    text = f"{x!r} {unit}".strip()
    assert gio.quantity(text) == pytest.approx(x * gio.UNITS[unit], rel=1e-15, abs=1e-300)


@pytest.mark.parametrize("bad", ["12 furlongs", "abc", "", True, None, [1]])
def test_quantity_rejects(bad):
    with pytest.raises(gio.InputError):
        gio.quantity(bad)


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{\n  "a": 1,\n  "b": \n}\n')
    with pytest.raises(gio.InputError) as exc:
        gio.load_json(p)
    assert exc.value.line == 4 and exc.value.column == 1
    assert f"{p}:4:1" in str(exc.value)


def test_model_round_trip_explicit():
    m = generate_plate_girder_model(n_length=4, web_divisions=2)
    back = gio.model_from_dict(json.loads(gio.dumps(gio.model_to_dict(m))))
    assert np.array_equal(back.node_coords(), m.node_coords())
    assert back.elements == m.elements
    assert dict(back.materials) == dict(m.materials)
    assert dict(back.layer_stacks) == dict(m.layer_stacks)
    assert back.load_case == m.load_case and back.supports == m.supports


def test_generator_with_units():
    d = {"generator": {"name": "plate", "params": {
        "length": "1000 mm", "width": "0.5 m", "thickness": "10 mm", "nx": 4, "ny": 2,
        "material": {"law": "steel", "E": "200 GPa", "nu": 0.3, "fy": "345 MPa"}}},
        "design_capacity": "12 kN"}
    m = gio.model_from_dict(d)
    assert m.design_capacity == 12e3
    assert m.materials["steel"].fy == 345e6
    assert m.node_coords()[:, 0].max() == pytest.approx(1.0)


@pytest.mark.parametrize("d,msg", [
    ({"generator": {"name": "tower"}}, "unknown generator"),
    ({"materials": {}}, "missing field 'layer_stacks'"),
    ({"generator": {"name": "plate", "params": {"length": 1, "width": 1, "thickness": 0.01,
                                                 "nx": 2, "ny": 2, "material": {"law": "wood"}}}},
     "unknown material law"),
    ({"generator": {"name": "plate", "params": {"length": 1, "width": 1, "thickness": 0.01,
                                                 "nx": 2, "ny": 2, "material": {
                                                     "law": "steel", "E": -1, "nu": 0.3, "fy": 1}}}},
     "E must be > 0"),
])
def test_model_errors(d, msg):
    with pytest.raises(gio.InputError, match=msg):
        gio.model_from_dict(d)


def test_control_fields():
    assert gio.control_from_dict({"step": "5 mm", "max_steps": 3}) == {"step": 0.005, "max_steps": 3}
    with pytest.raises(gio.InputError):
        gio.control_from_dict({"speed": 1})


def test_scenario_round_trip(bridge):
    for sc in standard_scenarios(bridge):
        back = gio.scenario_from_dict(json.loads(gio.dumps(gio.scenario_to_dict(sc))), bridge)
        assert back == sc


@pytest.mark.parametrize("name", ["corrosion", "impact", "fire"])
def test_bundled_scenario_files_match_presets(bridge, name):
    sc_file = gio.read_scenario(gio.data_path(f"nebraska_{name}.json"), bridge)
    preset = gio.PRESETS[name](bridge)
    a = apply_scenario(bridge, sc_file)
    b = apply_scenario(bridge, preset)
    assert np.allclose(a.node_coords(), b.node_coords(), rtol=0, atol=1e-9)
    stack = lambda m: [m.layer_stacks[e.layer_stack_id] for e in m.elements]
    mats = lambda m: [[m.materials[l.material_id] for l in s.layers] for s in stack(m)]
    assert [s.layers for s in stack(a)] == [s.layers for s in stack(b)] or mats(a) == mats(b)
    assert [s.thickness for s in stack(a)] == pytest.approx([s.thickness for s in stack(b)])


def test_preset_needs_model():
    with pytest.raises(gio.InputError):
        gio.scenario_from_dict({"scenario": {"preset": "fire"}})
    with pytest.raises(gio.InputError):
        gio.scenario_from_dict({"scenario": {"preset": "flood"}}, object())


def test_bad_operator_reported():
    d = {"scenario": {"name": "x", "operators": [{"kind": "melt", "region": {"tags": ["deck"]}}]}}
    with pytest.raises(gio.InputError, match=r"operators\[0\]"):
        gio.scenario_from_dict(d)


def test_write_atomic(tmp_path):
    p = tmp_path / "a" / "b.txt"
    gio.write_atomic(p, "one\n")
    gio.write_atomic(p, "two\n")
    assert p.read_text() == "two\n"
    assert [q.name for q in p.parent.iterdir()] == ["b.txt"]


@pytest.mark.parametrize("name", ["mcneice_slab", "lagerqvist_girder", "mtu_beam_end",
                                  "nebraska_bridge"])
def test_bundled_models_load(name):
    d = gio.load_json(gio.data_path(f"{name}.json"))
    m = gio.model_from_dict(d)
    assert m.n_nodes > 0
    gio.control_from_dict(d.get("control"))
