import dataclasses

import numpy as np
import pytest

from girderlab.model import (
    LayerStack, PatchLoad, LoadCase, Support, generate_bridge_model, generate_plate_girder_model,
    generate_plate_model, generate_slab_model, rigid_body_rank, validate_model,
)


@pytest.fixture(scope="module")
def bridge():
    return generate_bridge_model()


def messages(model):
    return [str(d) for d in validate_model(model)]


@pytest.mark.parametrize("factory", [
    generate_bridge_model, generate_slab_model, generate_plate_girder_model,
    lambda: generate_plate_model(1.0, 0.5, 0.01, 4, 2),
])
def test_generators_validate(factory):
    assert messages(factory()) == []


def test_bridge_layout(bridge):
    meta = bridge.metadata
    assert meta["span"] == pytest.approx(21.34)
    assert bridge.design_capacity == pytest.approx(1806e3)
    assert rigid_body_rank(bridge) == 6
    tags = {t for e in bridge.elements for t in e.region_tags}
    for g in range(3):
        assert f"girder{g}.web" in tags
    assert "deck" in tags


def test_duplicate_node_id_reported():
    m = generate_plate_model(1.0, 0.5, 0.01, 2, 1)
    nodes = list(m.nodes)
    nodes[1] = dataclasses.replace(nodes[1], id=0)
    assert any("duplicate node id" in s for s in messages(m.replace(nodes=tuple(nodes))))


def test_unknown_stack_and_empty_tags_reported():
    m = generate_plate_model(1.0, 0.5, 0.01, 2, 1)
    els = list(m.elements)
    els[0] = dataclasses.replace(els[0], layer_stack_id="nope", region_tags=frozenset())
    msgs = messages(m.replace(elements=tuple(els)))
    assert any("unknown layer stack" in s for s in msgs)
    assert any("region tags" in s for s in msgs)


def test_bowtie_element_reported():
    m = generate_plate_model(1.0, 1.0, 0.01, 1, 1)
    e = m.elements[0]
    a, b, c, d = e.node_ids
    m = m.replace(elements=(dataclasses.replace(e, node_ids=(a, c, b, d)),))
    assert any("non-convex" in s or "degenerate" in s for s in messages(m))


def test_warped_element_reported():
    m = generate_plate_model(1.0, 1.0, 0.01, 1, 1)
    nodes = list(m.nodes)
    nodes[2] = dataclasses.replace(nodes[2], position=(1.0, 1.0, 0.5))
    assert any("warp" in s for s in messages(m.replace(nodes=tuple(nodes))))


def test_large_imperfection_reported():
    m = generate_plate_model(1.0, 1.0, 0.01, 2, 2)
    nodes = list(m.nodes)
    nodes[4] = dataclasses.replace(nodes[4], imperfection_offset=(0.0, 0.0, 0.2))
    assert any("imperfection" in s for s in messages(m.replace(nodes=tuple(nodes))))


def test_insufficient_supports_reported():
    m = generate_plate_model(1.0, 0.5, 0.01, 2, 1)
    m = m.replace(supports=(Support(0, ("uz",)),))
    assert any("rigid-body" in s for s in messages(m))


def test_zero_load_and_capacity_reported():
    m = generate_plate_model(1.0, 0.5, 0.01, 2, 1)
    m = m.replace(load_case=LoadCase(), design_capacity=0.0)
    msgs = messages(m)
    assert any("nonzero" in s for s in msgs)
    assert any("design capacity" in s for s in msgs)


def test_bad_patch_direction_reported():
    m = generate_plate_model(1.0, 0.5, 0.01, 2, 1)
    lc = LoadCase(patch_loads=(PatchLoad((0.5, 0.25, 0.0), (0.2, 0.1), 10.0, (0.0, 0.0, -2.0), "plate"),))
    assert any("unit 3-vector" in s for s in messages(m.replace(load_case=lc)))


def test_scaled_steel_keeps_midplane():
    st = LayerStack.centered("w", "steel", 0.010)
    thin = st.scaled_steel("w2", 0.6)
    assert thin.thickness == pytest.approx(0.006)
    assert thin.reference_offset + 0.5 * thin.thickness == pytest.approx(0.0, abs=1e-15)


def test_models_are_immutable(bridge):
    with pytest.raises(dataclasses.FrozenInstanceError):
        bridge.design_capacity = 1.0
    with pytest.raises(TypeError):
        bridge.metadata["span"] = 1.0
    assert np.isfinite(bridge.node_coords()).all()
