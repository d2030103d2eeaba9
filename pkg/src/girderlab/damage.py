"""Damage operators: pure maps from an intact model to a damaged one."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import LayerStack, tag_matches

KINDS = ("section_loss", "stiffness_reduction", "geometric_imperfection")


class DamageError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    """Element selector: any matching tag and (optionally) centroid in any box.

    ``boxes`` holds ((xmin, ymin, zmin), (xmax, ymax, zmax)) pairs in meters.
    An empty ``tags`` tuple selects by boxes alone.
    """

    tags: tuple = ()
    boxes: tuple = ()

    def select(self, model):
        xyz = model.node_coords(with_imperfections=False)
        out = []
        for i, el in enumerate(model.elements):
            if self.tags and not any(tag_matches(t, s) for t in el.region_tags for s in self.tags):
                continue
            if self.boxes:
                c = xyz[list(el.node_ids)].mean(axis=0)
                if not any(np.all(c >= np.asarray(lo) - 1e-9) and np.all(c <= np.asarray(hi) + 1e-9)
                           for lo, hi in self.boxes):
                    continue
            out.append(i)
        if not out:
            raise DamageError(f"region {self} selects no elements")
        return out


@dataclass(frozen=True)
class HalfSine:
    """Half-sine profile along x over the selected nodes.

    ``taper_top`` scales the offset linearly from 1 at the lowest selected
    node to 0 at ``taper_top`` (z), so a girder bottom flange can deflect
    laterally while the deck-restrained top flange stays put.
    """

    region: Region
    direction: tuple = (0.0, 1.0, 0.0)
    taper_top: float | None = None


@dataclass(frozen=True)
class BucklingMode:
    index: int = 1


@dataclass(frozen=True)
class DamageOperator:
    kind: str
    region: Region | None = None
    fraction: float | None = None
    depth_per_side: float | None = None
    shape: object = None
    amplitude: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DamageError(f"unknown damage kind {self.kind!r}")


@dataclass(frozen=True)
class DamageScenario:
    name: str
    operators: tuple = ()
    assumptions: tuple = field(default=())


def _log(model, entry):
    meta = dict(model.metadata)
    meta["damage_log"] = tuple(meta.get("damage_log", ())) + (entry,)
    return meta


def _unique_id(existing, base):
    k = 1
    while f"{base}#{k}" in existing:
        k += 1
    return f"{base}#{k}"


def _steel_volume(model, stack_id, area):
    st = model.layer_stacks[stack_id]
    return area * sum(l.thickness for l in st.layers if l.kind == "solid-steel")


def element_areas(model):
    from .shell import frames

    X = model.node_coords()[model.connectivity()]
    E0 = frames(X)
    xy = np.einsum("nij,naj->nai", E0, X - X.mean(axis=1, keepdims=True))[:, :, :2]
    x, y = xy[..., 0], xy[..., 1]
    return 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1))


def apply_section_loss(model, region: Region, fraction=None, depth_per_side=None):
    """Thin every steel layer of the selected elements.

    Give either ``fraction`` (thickness multiplied by 1 - fraction) or
    ``depth_per_side`` (meters removed from each face). Layer stacks are
    cloned, so elements outside the region keep their sections. Overlapping
    operators compound multiplicatively.
    """
    if (fraction is None) == (depth_per_side is None):
        raise DamageError("give exactly one of fraction or depth_per_side")
    if fraction is not None and not 0 < fraction < 1:
        raise DamageError("section loss fraction must be in (0, 1)")
    if depth_per_side is not None and not depth_per_side > 0:
        raise DamageError("depth_per_side must be > 0")
    idx = region.select(model)
    stacks = dict(model.layer_stacks)
    elements = list(model.elements)
    areas = element_areas(model)
    clones = {}
    removed = 0.0
    area = 0.0
    for i in idx:
        el = elements[i]
        sid = el.layer_stack_id
        st = stacks[sid]
        t_steel = sum(l.thickness for l in st.layers if l.kind == "solid-steel")
        if t_steel == 0:
            raise DamageError(f"element {el.id} has no steel layers")
        if sid not in clones:
            f = fraction if fraction is not None else 2.0 * depth_per_side / t_steel
            if not 0 < f < 1:
                raise DamageError(f"section loss removes the whole plate of stack {sid!r}")
            new_id = _unique_id(stacks, f"{sid}-loss")
            stacks[new_id] = st.scaled_steel(new_id, 1.0 - f)
            clones[sid] = (new_id, f)
        new_id, f = clones[sid]
        removed += f * t_steel * areas[i]
        area += areas[i]
        elements[i] = replace(el, layer_stack_id=new_id)
    entry = {"operator": "section_loss", "elements": len(idx), "area": float(area),
             "removed_volume": float(removed),
             "fraction": fraction, "depth_per_side": depth_per_side}
    return model.replace(elements=tuple(elements), layer_stacks=stacks, metadata=_log(model, entry))


def apply_stiffness_reduction(model, region: Region, fraction):
    """Multiply the elastic modulus of every material in the region by 1 - fraction."""
    if not 0 <= fraction < 1:
        raise DamageError("stiffness reduction fraction must be in [0, 1)")
    idx = region.select(model)
    if fraction == 0:
        return model
    stacks = dict(model.layer_stacks)
    materials = dict(model.materials)
    elements = list(model.elements)
    mat_clone = {}
    stack_clone = {}
    for i in idx:
        el = elements[i]
        sid = el.layer_stack_id
        if sid not in stack_clone:
            st = stacks[sid]
            layers = []
            for layer in st.layers:
                mid = layer.material_id
                if mid not in mat_clone:
                    new_mid = _unique_id(materials, f"{mid}-E")
                    materials[new_mid] = materials[mid].with_stiffness(1.0 - fraction)
                    mat_clone[mid] = new_mid
                layers.append(replace(layer, material_id=mat_clone[mid]))
            new_sid = _unique_id(stacks, f"{sid}-E")
            stacks[new_sid] = LayerStack(new_sid, tuple(layers), st.reference_offset)
            stack_clone[sid] = new_sid
        elements[i] = replace(el, layer_stack_id=stack_clone[sid])
    entry = {"operator": "stiffness_reduction", "elements": len(idx), "fraction": fraction,
             "materials": tuple(sorted(mat_clone.values()))}
    return model.replace(elements=tuple(elements), layer_stacks=stacks, materials=materials,
                         metadata=_log(model, entry))


def half_sine_offsets(model, shape: HalfSine, amplitude):
    idx = shape.region.select(model)
    nodes = sorted({n for i in idx for n in model.elements[i].node_ids})
    xyz = model.node_coords(with_imperfections=False)
    x = xyz[nodes, 0]
    x0, x1 = x.min(), x.max()
    if x1 - x0 <= 0:
        raise DamageError("half-sine region has no extent along x")
    d = np.asarray(shape.direction, float)
    d = d / np.linalg.norm(d)
    prof = np.sin(math.pi * (x - x0) / (x1 - x0))
    if shape.taper_top is not None:
        z = xyz[nodes, 2]
        zb = z.min()
        span = shape.taper_top - zb
        prof = prof * np.clip((shape.taper_top - z) / span, 0.0, 1.0) if span > 0 else prof * 0
    off = np.zeros((model.n_nodes, 3))
    off[nodes] = amplitude * prof[:, None] * d[None, :]
    return off


def buckling_offsets(model, mode: BucklingMode, amplitude):
    from .solver import buckling_analysis

    res = buckling_analysis(model, mode.index)
    phi = res.modes[mode.index - 1].reshape(-1, 6)[:, :3]
    return amplitude * phi / np.abs(phi).max()


def apply_geometric_imperfection(model, shape, amplitude):
    """Add a stress-free nodal offset field of peak magnitude ``amplitude``."""
    if not amplitude > 0:
        raise DamageError("imperfection amplitude must be > 0")
    if isinstance(shape, HalfSine):
        off = half_sine_offsets(model, shape, amplitude)
    elif isinstance(shape, BucklingMode):
        off = buckling_offsets(model, shape, amplitude)
    else:
        raise DamageError(f"unknown imperfection shape {shape!r}")
    nodes = tuple(replace(n, imperfection_offset=tuple(float(a + b) for a, b in
                                                       zip(n.imperfection_offset, off[i])))
                  if np.any(off[i]) else n for i, n in enumerate(model.nodes))
    meta = _log(model, {"operator": "geometric_imperfection", "shape": type(shape).__name__,
                        "amplitude": float(amplitude)})
    # the offset is damage geometry, so widen the sanity bound to admit it
    peak = float(np.abs(np.array([n.imperfection_offset for n in nodes])).max())
    meta["imperfection_bound_abs"] = max(float(meta.get("imperfection_bound_abs", 0.0)),
                                         peak * (1 + 1e-9))
    return model.replace(nodes=nodes, metadata=meta)


def apply_operator(model, op: DamageOperator):
    if op.kind == "section_loss":
        return apply_section_loss(model, op.region, op.fraction, op.depth_per_side)
    if op.kind == "stiffness_reduction":
        return apply_stiffness_reduction(model, op.region, op.fraction)
    return apply_geometric_imperfection(model, op.shape, op.amplitude)


def apply_scenario(model, scenario: DamageScenario):
    for op in scenario.operators:
        model = apply_operator(model, op)
    meta = dict(model.metadata)
    meta["scenario"] = scenario.name
    meta["assumptions"] = tuple(scenario.assumptions)
    return model.replace(metadata=meta)


# ---------------------------------------------------------------------------
# bridge scenarios with the documented default extents


def girder_names(model):
    names = set()
    for el in model.elements:
        for t in el.region_tags:
            head = t.split(".")[0]
            if head.startswith("girder"):
                names.add(head)
    return sorted(names, key=lambda s: int(s[6:]) if s[6:].isdigit() else s)


def corrosion_scenario(model, fraction=0.4, end_fraction=0.05):
    span = float(model.metadata["span"])
    big = 1e6
    boxes = (((-big, -big, -big), (end_fraction * span, big, big)),
             ((span * (1 - end_fraction), -big, -big), (big, big, big)))
    tags = tuple(f"{g}.{part}" for g in girder_names(model)
                 for part in ("web", "bottom_flange", "stiffener"))
    op = DamageOperator("section_loss", Region(tags, boxes), fraction=fraction)
    return DamageScenario("corrosion", (op,), (
        f"end regions {end_fraction:.0%} of span from each support",
        "web, bottom flange and bearing stiffeners of every girder",
        f"uniform thickness loss {fraction:.0%}"))


def fire_scenario(model, fraction=0.25, middle_fraction=0.2):
    span = float(model.metadata["span"])
    big = 1e6
    lo = 0.5 * span * (1 - middle_fraction)
    hi = 0.5 * span * (1 + middle_fraction)
    op = DamageOperator("stiffness_reduction",
                        Region(tuple(girder_names(model)), (((lo, -big, -big), (hi, big, big)),)),
                        fraction=fraction)
    return DamageScenario("fire", (op,), (
        f"middle {middle_fraction:.0%} of span, all girders",
        f"elastic modulus reduced {fraction:.0%}, strengths unchanged"))


def impact_scenario(model, amplitude=None, girder=None):
    span = float(model.metadata["span"])
    names = girder_names(model)
    girder = girder or names[0]
    amplitude = span / 500.0 if amplitude is None else amplitude
    top = float(model.metadata.get("girder_depth", 0.0))
    lines = model.metadata.get("girder_lines")
    sign = -1.0
    if lines is not None:
        k = int(girder[6:])
        sign = -1.0 if lines[k] <= 0 else 1.0
    shape = HalfSine(Region((f"{girder}.web", f"{girder}.bottom_flange")), (0.0, sign, 0.0),
                     taper_top=top if top > 0 else None)
    op = DamageOperator("geometric_imperfection", shape=shape, amplitude=amplitude)
    return DamageScenario("impact", (op,), (
        f"exterior girder {girder} bent laterally outward",
        f"half-sine amplitude {amplitude:.4g} m at midspan (span/500 default)",
        "offset tapers to zero at the deck-restrained top flange"))


def standard_scenarios(model):
    return [corrosion_scenario(model), impact_scenario(model), fire_scenario(model)]
