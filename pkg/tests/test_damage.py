import numpy as np
import pytest
from hypothesis import given, strategies as st

from girderlab.damage import (
    BucklingMode, DamageError, DamageOperator, DamageScenario, HalfSine, Region,
    apply_geometric_imperfection, apply_scenario, apply_section_loss, apply_stiffness_reduction,
    corrosion_scenario, element_areas, fire_scenario, impact_scenario, standard_scenarios,
)
from girderlab.model import generate_bridge_model, generate_plate_girder_model, validate_model


@pytest.fixture(scope="module")
def bridge():
    return generate_bridge_model()


def steel_volume(model):
    a = element_areas(model)
    return sum(a[i] * sum(l.thickness for l in model.layer_stacks[e.layer_stack_id].layers
                          if l.kind == "solid-steel")
               for i, e in enumerate(model.elements))


@given(st.floats(0.01, 0.95))
def test_section_loss_removes_logged_volume(f):
    m = generate_plate_girder_model(n_length=4, web_divisions=2)
    region = Region(("girder0.web",))
    d = apply_section_loss(m, region, fraction=f)
    log = d.metadata["damage_log"][-1]
    assert steel_volume(m) - steel_volume(d) == pytest.approx(log["removed_volume"], rel=1e-9)
    # the intact model is untouched
    assert [e.layer_stack_id for e in m.elements] == [e.layer_stack_id
                                                      for e in generate_plate_girder_model(
                                                          n_length=4, web_divisions=2).elements]


def test_section_loss_by_depth():
    m = generate_plate_girder_model(n_length=4, web_divisions=2)
    d = apply_section_loss(m, Region(("girder0.web",)), depth_per_side=0.001)
    i = m.elements_tagged("girder0.web")[0]
    t0 = m.layer_stacks[m.elements[i].layer_stack_id].thickness
    t1 = d.layer_stacks[d.elements[i].layer_stack_id].thickness
    assert t0 - t1 == pytest.approx(0.002)


@pytest.mark.parametrize("kw", [dict(fraction=1.0), dict(fraction=0.0), dict(),
                                dict(fraction=0.2, depth_per_side=0.001),
                                dict(depth_per_side=0.01)])
def test_section_loss_rejects_bad_input(kw):
    m = generate_plate_girder_model(n_length=4, web_divisions=2)
    with pytest.raises(DamageError):
        apply_section_loss(m, Region(("girder0.web",)), **kw)


def test_empty_region_rejected(bridge):
    with pytest.raises(DamageError):
        Region(("nothing",)).select(bridge)
    with pytest.raises(DamageError):
        Region(("deck",), (((100, 0, 0), (101, 1, 1)),)).select(bridge)


def test_stiffness_reduction_zero_is_identity(bridge):
    assert apply_stiffness_reduction(bridge, Region(("girder0",)), 0.0) is bridge


@given(st.floats(0.01, 0.9))
def test_stiffness_reduction_scales_modulus_only(f):
    m = generate_plate_girder_model(n_length=4, web_divisions=2)
    d = apply_stiffness_reduction(m, Region(("girder0.web",)), f)
    i = m.elements_tagged("girder0.web")[0]
    mid0 = m.layer_stacks[m.elements[i].layer_stack_id].layers[0].material_id
    mid1 = d.layer_stacks[d.elements[i].layer_stack_id].layers[0].material_id
    a, b = m.materials[mid0], d.materials[mid1]
    assert b.E == pytest.approx((1 - f) * a.E)
    assert (b.fy, b.hardening) == (a.fy, a.hardening)


def test_imperfections_compose_additively(bridge):
    shape = HalfSine(Region(("girder0.bottom_flange",)), (0.0, -1.0, 0.0))
    a = apply_geometric_imperfection(bridge, shape, 0.01)
    b = apply_geometric_imperfection(a, shape, 0.02)
    off = np.array([n.imperfection_offset for n in b.nodes])
    assert np.abs(off).max() == pytest.approx(0.03, rel=1e-12)
    assert validate_model(b) == []


def test_half_sine_taper_holds_top(bridge):
    sc = impact_scenario(bridge)
    d = apply_scenario(bridge, sc)
    off = d.node_coords() - bridge.node_coords()
    top = np.isclose(bridge.node_coords()[:, 2], bridge.metadata["girder_depth"])
    assert np.abs(off[top]).max() == 0.0
    assert np.abs(off).max() == pytest.approx(bridge.metadata["span"] / 500, rel=1e-12)
    assert validate_model(d) == []


def test_buckling_mode_seed():
    m = generate_plate_girder_model(n_length=6, web_divisions=4)
    d = apply_geometric_imperfection(m, BucklingMode(1), 0.0005)
    off = d.node_coords() - m.node_coords()
    assert np.abs(off).max() == pytest.approx(0.0005, rel=1e-12)


def test_bad_imperfection_rejected(bridge):
    with pytest.raises(DamageError):
        apply_geometric_imperfection(bridge, HalfSine(Region(("deck",))), 0.0)
    with pytest.raises(DamageError):
        apply_geometric_imperfection(bridge, "wiggle", 0.01)
    with pytest.raises(DamageError):
        DamageOperator("melt")


def test_standard_scenarios_are_valid_and_pure(bridge):
    before = [e.layer_stack_id for e in bridge.elements]
    for sc in standard_scenarios(bridge):
        d = apply_scenario(bridge, sc)
        assert validate_model(d) == []
        assert d.metadata["scenario"] == sc.name
        assert d.metadata["assumptions"]
    assert [e.layer_stack_id for e in bridge.elements] == before


def test_corrosion_and_fire_extents(bridge):
    span = bridge.metadata["span"]
    xyz = bridge.node_coords()
    d = apply_scenario(bridge, corrosion_scenario(bridge))
    changed = [i for i, (a, b) in enumerate(zip(bridge.elements, d.elements))
               if a.layer_stack_id != b.layer_stack_id]
    cx = np.array([xyz[list(bridge.elements[i].node_ids), 0].mean() for i in changed])
    assert changed and np.all((cx <= 0.05 * span + 1e-9) | (cx >= 0.95 * span - 1e-9))
    d = apply_scenario(bridge, fire_scenario(bridge))
    changed = [i for i, (a, b) in enumerate(zip(bridge.elements, d.elements))
               if a.layer_stack_id != b.layer_stack_id]
    cx = np.array([xyz[list(bridge.elements[i].node_ids), 0].mean() for i in changed])
    assert changed and np.all((cx >= 0.4 * span - 1e-9) & (cx <= 0.6 * span + 1e-9))
    assert all("deck" not in bridge.elements[i].region_tags for i in changed)


def test_scenario_order_is_respected(bridge):
    op1 = DamageOperator("section_loss", Region(("girder1.web",)), fraction=0.5)
    sc = DamageScenario("twice", (op1, op1))
    d = apply_scenario(bridge, sc)
    i = bridge.elements_tagged("girder1.web")[0]
    t0 = bridge.layer_stacks[bridge.elements[i].layer_stack_id].thickness
    assert d.layer_stacks[d.elements[i].layer_stack_id].thickness == pytest.approx(0.25 * t0)
