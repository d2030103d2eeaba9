"""Immutable structural model and parametric mesh generators.

Coordinates are SI (m, N, Pa). Bridge models use x along the span,
y across the width and z upward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType

import numpy as np

from .materials import ConcreteLaw, SteelLaw

DOF_NAMES = ("ux", "uy", "uz", "rx", "ry", "rz")
LAYER_KINDS = ("solid-steel", "solid-concrete", "smeared-rebar")
IMPERFECTION_BOUND = 0.1
WARP_LIMIT_DEG = 10.0


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple
    imperfection_offset: tuple = (0.0, 0.0, 0.0)

    @property
    def coords(self):
        return np.add(self.position, self.imperfection_offset)


@dataclass(frozen=True)
class Layer:
    material_id: str
    thickness: float
    kind: str = "solid-steel"
    rebar_ratio: float = 0.0
    rebar_direction: tuple = (1.0, 0.0)


@dataclass(frozen=True)
class LayerStack:
    id: str
    layers: tuple
    reference_offset: float = 0.0

    @property
    def thickness(self):
        return sum(layer.thickness for layer in self.layers)

    @classmethod
    def centered(cls, id, material_id, thickness, kind="solid-steel"):
        return cls(id, (Layer(material_id, thickness, kind),), -0.5 * thickness)

    def scaled_steel(self, new_id, factor):
        """Copy with every steel layer thickness multiplied by ``factor``.

        The stack keeps its mid-surface so thinning is symmetric about the
        plate center line, as for corrosion on both faces.
        """
        layers = []
        for layer in self.layers:
            if layer.kind == "solid-steel":
                layer = replace(layer, thickness=layer.thickness * factor)
            layers.append(layer)
        mid = self.reference_offset + 0.5 * self.thickness
        new_t = sum(layer.thickness for layer in layers)
        return LayerStack(new_id, tuple(layers), mid - 0.5 * new_t)


@dataclass(frozen=True)
class ShellElement:
    id: int
    node_ids: tuple
    layer_stack_id: str
    region_tags: frozenset = frozenset()


@dataclass(frozen=True)
class Support:
    node_id: int
    fixed_dofs: tuple
    prescribed_value: float = 0.0


@dataclass(frozen=True)
class PointLoad:
    node_id: int
    force: tuple


@dataclass(frozen=True)
class PatchLoad:
    center: tuple
    extent: tuple
    resultant: float
    direction: tuple = (0.0, 0.0, -1.0)
    region: str = "deck"


@dataclass(frozen=True)
class LoadCase:
    point_loads: tuple = ()
    patch_loads: tuple = ()

    @property
    def total_force(self):
        total = np.zeros(3)
        for p in self.point_loads:
            total += p.force
        for p in self.patch_loads:
            total += p.resultant * np.asarray(p.direction, float)
        return total


@dataclass(frozen=True, eq=False)
class BridgeModel:
    nodes: tuple
    elements: tuple
    layer_stacks: MappingProxyType
    materials: MappingProxyType
    supports: tuple
    load_case: LoadCase
    design_capacity: float = 1.0
    metadata: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        for name in ("layer_stacks", "materials", "metadata"):
            value = getattr(self, name)
            if not isinstance(value, MappingProxyType):
                object.__setattr__(self, name, MappingProxyType(dict(value)))

    @property
    def n_nodes(self):
        return len(self.nodes)

    def node_coords(self, with_imperfections=True):
        pos = np.array([n.position for n in self.nodes], float).reshape(-1, 3)
        if with_imperfections:
            pos = pos + np.array([n.imperfection_offset for n in self.nodes], float).reshape(-1, 3)
        return pos

    def connectivity(self):
        return np.array([e.node_ids for e in self.elements], int).reshape(-1, 4)

    def elements_tagged(self, prefix):
        """Indices of elements with a region tag equal to or starting with ``prefix``."""
        out = []
        for i, e in enumerate(self.elements):
            if any(tag_matches(t, prefix) for t in e.region_tags):
                out.append(i)
        return out

    def replace(self, **changes):
        return replace(self, **changes)


def tag_matches(tag, selector):
    """``girder1`` selects ``girder1.web`` but not ``girder10.web``."""
    return tag == selector or tag.startswith(selector + ".")


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    entity: str
    id: object
    message: str

    def __str__(self):
        return f"{self.entity} {self.id}: {self.message}"


def _edge_lengths(xyz):
    return np.linalg.norm(np.roll(xyz, -1, axis=0) - xyz, axis=1)


def element_geometry_problems(xyz):
    """Geometry invariant violations for one quadrilateral (4x3 coordinates)."""
    problems = []
    d13 = xyz[2] - xyz[0]
    d24 = xyz[3] - xyz[1]
    n = np.cross(d13, d24)
    area2 = np.linalg.norm(n)
    scale = max(np.max(_edge_lengths(xyz)) ** 2, 1e-300)
    if area2 <= 1e-12 * scale:
        return ["degenerate quadrilateral (zero area)"]
    nhat = n / area2
    for a in range(4):
        e1 = xyz[(a + 1) % 4] - xyz[a]
        e0 = xyz[a] - xyz[a - 1]
        if np.dot(np.cross(e0, e1), nhat) <= 1e-12 * scale:
            problems.append("self-intersecting or non-convex quadrilateral")
            break
    n1 = np.cross(xyz[1] - xyz[0], xyz[3] - xyz[0])
    n2 = np.cross(xyz[3] - xyz[2], xyz[1] - xyz[2])
    c = np.dot(n1, n2) / (np.linalg.norm(n1) * np.linalg.norm(n2))
    if math.degrees(math.acos(min(1.0, max(-1.0, c)))) > WARP_LIMIT_DEG:
        problems.append(f"warp exceeds {WARP_LIMIT_DEG} degrees")
    return problems


def rigid_body_rank(model):
    """Rank of the support constraint set against the six rigid-body modes."""
    xyz = model.node_coords()
    ids = {n.id: i for i, n in enumerate(model.nodes)}
    center = xyz.mean(axis=0) if len(xyz) else np.zeros(3)
    rows = []
    for s in model.supports:
        if s.node_id not in ids:
            continue
        r = xyz[ids[s.node_id]] - center
        for name in s.fixed_dofs:
            if name not in DOF_NAMES:
                continue
            d = DOF_NAMES.index(name)
            modes = np.zeros(6)
            if d < 3:
                modes[d] = 1.0
                # rotation about axis k moves dof d by (e_k x r)_d
                for k in range(3):
                    modes[3 + k] = np.cross(np.eye(3)[k], r)[d]
            else:
                modes[d] = 1.0
            rows.append(modes)
    if not rows:
        return 0
    return int(np.linalg.matrix_rank(np.array(rows), tol=1e-9 * max(1.0, np.abs(rows).max())))


def validate_model(model: BridgeModel, imperfection_bound=IMPERFECTION_BOUND):
    """Return a list of :class:`Diagnostic` (empty when the model is sound)."""
    diags = []
    add = lambda ent, i, msg: diags.append(Diagnostic(ent, i, msg))

    ids = [n.id for n in model.nodes]
    seen = set()
    for n in model.nodes:
        if n.id in seen:
            add("node", n.id, "duplicate node id")
        seen.add(n.id)
    if sorted(seen) != list(range(len(seen))) or ids != list(range(len(ids))):
        if len(seen) == len(ids):
            add("model", "nodes", "node ids must be dense and ordered from 0")
    for n in model.nodes:
        if len(n.position) != 3 or not np.all(np.isfinite(n.position)):
            add("node", n.id, "position must be a finite 3-vector")
        if len(n.imperfection_offset) != 3 or not np.all(np.isfinite(n.imperfection_offset)):
            add("node", n.id, "imperfection_offset must be a finite 3-vector")

    for mid, law in model.materials.items():
        if not isinstance(law, (SteelLaw, ConcreteLaw)):
            add("material", mid, "unknown material law")
            continue
        for msg in law.check():
            add("material", mid, msg)

    for sid, stack in model.layer_stacks.items():
        if stack.id != sid:
            add("layer_stack", sid, "stack id does not match its key")
        if not stack.layers:
            add("layer_stack", sid, "at least one layer required")
        for k, layer in enumerate(stack.layers):
            where = f"{sid}[{k}]"
            if not layer.thickness > 0:
                add("layer", where, "thickness must be > 0")
            if layer.kind not in LAYER_KINDS:
                add("layer", where, f"unknown kind {layer.kind!r}")
            law = model.materials.get(layer.material_id)
            if law is None:
                add("layer", where, f"unknown material {layer.material_id!r}")
            elif layer.kind == "solid-concrete" and not isinstance(law, ConcreteLaw):
                add("layer", where, "solid-concrete layer needs a concrete law")
            elif layer.kind in ("solid-steel", "smeared-rebar") and not isinstance(law, SteelLaw):
                add("layer", where, f"{layer.kind} layer needs a steel law")
            if layer.kind == "smeared-rebar":
                if not 0 < layer.rebar_ratio < 0.1:
                    add("layer", where, "rebar_ratio must be in (0, 0.1)")
                d = np.asarray(layer.rebar_direction, float)
                if d.shape != (2,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
                    add("layer", where, "rebar_direction must be a unit 2-vector")

    n_nodes = len(model.nodes)
    xyz = model.node_coords(with_imperfections=False) if n_nodes else np.zeros((0, 3))
    min_edge = np.full(n_nodes, np.inf)
    eids = set()
    for e in model.elements:
        if e.id in eids:
            add("element", e.id, "duplicate element id")
        eids.add(e.id)
        nid = tuple(e.node_ids)
        if len(nid) != 4 or len(set(nid)) != 4:
            add("element", e.id, "needs 4 distinct nodes")
            continue
        if any(not (0 <= i < n_nodes) for i in nid):
            add("element", e.id, "references unknown node")
            continue
        if e.layer_stack_id not in model.layer_stacks:
            add("element", e.id, f"unknown layer stack {e.layer_stack_id!r}")
        if not e.region_tags:
            add("element", e.id, "region tags must be nonempty")
        pts = xyz[list(nid)]
        for msg in element_geometry_problems(pts):
            add("element", e.id, msg)
        edges = _edge_lengths(pts)
        for i in nid:
            min_edge[i] = min(min_edge[i], edges.min())

    # damage operators that impose deliberate offsets record an absolute allowance
    allowance = float(model.metadata.get("imperfection_bound_abs", 0.0))
    for n in model.nodes:
        if 0 <= n.id < n_nodes and np.isfinite(min_edge[n.id]):
            mag = float(np.linalg.norm(n.imperfection_offset))
            if mag > max(imperfection_bound * min_edge[n.id], allowance):
                add("node", n.id, "imperfection offset exceeds bound "
                    f"({mag:.3g} > {imperfection_bound} x shortest attached edge)")

    for k, s in enumerate(model.supports):
        if not (0 <= s.node_id < n_nodes):
            add("support", k, f"unknown node {s.node_id}")
        if not s.fixed_dofs:
            add("support", k, "fixed_dofs must be nonempty")
        for name in s.fixed_dofs:
            if name not in DOF_NAMES:
                add("support", k, f"unknown dof {name!r}")
        if not np.isfinite(s.prescribed_value):
            add("support", k, "prescribed value must be finite")

    lc = model.load_case
    for k, p in enumerate(lc.point_loads):
        if not (0 <= p.node_id < n_nodes):
            add("point_load", k, f"unknown node {p.node_id}")
        if not np.all(np.isfinite(p.force)):
            add("point_load", k, "force must be finite")
    for k, p in enumerate(lc.patch_loads):
        if len(p.extent) != 2 or not all(x > 0 for x in p.extent):
            add("patch_load", k, "extent components must be > 0")
        d = np.asarray(p.direction, float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
            add("patch_load", k, "direction must be a unit 3-vector")
    total = lc.total_force
    if not np.all(np.isfinite(total)) or (
        not lc.point_loads and not lc.patch_loads
    ) or (np.linalg.norm(total) == 0.0 and not _has_nonzero_load(lc)):
        add("load_case", "", "total applied load must be finite and nonzero")

    if not model.design_capacity > 0:
        add("model", "design_capacity", "design capacity must be > 0")

    rank = rigid_body_rank(model)
    if rank < 6:
        add("model", "supports", f"supports restrain only {rank} of 6 rigid-body modes")
    return diags


def _has_nonzero_load(lc):
    return any(np.any(p.force) for p in lc.point_loads) or any(
        p.resultant != 0 for p in lc.patch_loads)


# ---------------------------------------------------------------------------
# mesh helpers


class _MeshBuilder:
    """Accumulates nodes (deduplicated by rounded position) and elements."""

    def __init__(self, tol=1e-9):
        self.tol = tol
        self.positions = []
        self.lookup = {}
        self.elements = []

    def _key(self, p):
        return tuple(int(round(c / self.tol)) for c in p)

    def node(self, p):
        key = self._key(p)
        idx = self.lookup.get(key)
        if idx is None:
            idx = len(self.positions)
            self.lookup[key] = idx
            self.positions.append(tuple(float(c) for c in p))
        return idx

    def find(self, p):
        return self.lookup.get(self._key(p))

    def quad(self, corners, stack, tags):
        ids = tuple(self.node(c) for c in corners)
        self.elements.append((ids, stack, frozenset(tags)))

    def grid(self, origin, u_dir, v_dir, us, vs, stack, tags_fn):
        """Quads over a tensor grid ``origin + u*u_dir + v*v_dir``."""
        o, a, b = (np.asarray(x, float) for x in (origin, u_dir, v_dir))
        for i in range(len(us) - 1):
            for j in range(len(vs) - 1):
                c = [o + us[i] * a + vs[j] * b, o + us[i + 1] * a + vs[j] * b,
                     o + us[i + 1] * a + vs[j + 1] * b, o + us[i] * a + vs[j + 1] * b]
                self.quad(c, stack, tags_fn(i, j))

    def build(self, stacks, materials, supports, load_case, design_capacity, metadata):
        nodes = tuple(Node(i, p) for i, p in enumerate(self.positions))
        elements = tuple(ShellElement(k, ids, s, tags)
                         for k, (ids, s, tags) in enumerate(self.elements))
        return BridgeModel(nodes, elements, {s.id: s for s in stacks}, dict(materials),
                           tuple(supports), load_case, design_capacity, dict(metadata))


def _stations(breaks, n_min_div=1, max_size=None):
    """Sorted unique stations with optional subdivision to ``max_size``."""
    b = sorted(set(round(float(x), 12) for x in breaks))
    out = [b[0]]
    for lo, hi in zip(b, b[1:]):
        n = n_min_div
        if max_size:
            n = max(n, int(math.ceil((hi - lo) / max_size - 1e-9)))
        out.extend(lo + (hi - lo) * k / n for k in range(1, n + 1))
    return np.array(out)


# ---------------------------------------------------------------------------
# default materials (documented approximations, see README)


def default_girder_steel():
    return SteelLaw(200e9, 0.3, 345e6, ((0.0, 345e6), (0.02, 380e6), (0.15, 480e6)))


def default_rebar_steel():
    return SteelLaw(200e9, 0.3, 414e6, ((0.0, 414e6), (0.1, 500e6)))


def default_deck_concrete():
    return ConcreteLaw(E=25.7e9, nu=0.2, fc=30e6, ft=2.5e6, shear_retention=0.2,
                       crush_strain=0.0035)


# ---------------------------------------------------------------------------
# slab


def _rc_stack(stack_id, thickness, concrete_id, rebar_id, mats, n_concrete_per_band=2,
              band=0.004, reference_offset=None):
    """Reinforced-concrete layer stack.

    ``mats`` is a list of ``(height_from_bottom, area_per_width, direction)``
    for each rebar direction; each becomes a smeared-rebar layer of thickness
    ``band`` whose ratio reproduces the requested steel area.
    """
    mats = sorted(mats, key=lambda m: m[0])
    layers = []
    z = 0.0
    for zc, area, direction in mats:
        lo = zc - 0.5 * band
        if lo < z - 1e-12:
            raise ValueError("rebar bands overlap or leave the section")
        if lo - z > 1e-12:
            for k in range(n_concrete_per_band):
                layers.append(Layer(concrete_id, (lo - z) / n_concrete_per_band, "solid-concrete"))
        layers.append(Layer(rebar_id, band, "smeared-rebar", area / band, tuple(direction)))
        z = lo + band
    if thickness - z <= 1e-12:
        raise ValueError("rebar bands leave no concrete cover")
    for k in range(n_concrete_per_band):
        layers.append(Layer(concrete_id, (thickness - z) / n_concrete_per_band, "solid-concrete"))
    off = -0.5 * thickness if reference_offset is None else reference_offset
    return LayerStack(stack_id, tuple(layers), off)


def generate_slab_model(side=0.9144, thickness=0.0445, rebar_ratio=0.0085, rebar_depth=0.0333,
                        mesh_n=8, concrete=None, rebar=None, load=1000.0, design_capacity=1.0):
    """Quarter of a corner-supported square slab under a central point load.

    The modeled quarter spans ``[0, side/2]^2`` with the slab center at
    ``(side/2, side/2)``. Symmetry planes restrain in-plane normal
    translation and the in-plane rotations there; the corner node carries
    the vertical support. ``load`` is the quarter share of the central load.
    """
    if min(side, thickness, rebar_depth) <= 0 or rebar_ratio <= 0:
        raise ValueError("slab dimensions and rebar ratio must be positive")
    if mesh_n < 2:
        raise ValueError("mesh_n must be >= 2")
    if rebar_depth >= thickness:
        raise ValueError("rebar_depth must be inside the slab")
    concrete = concrete or ConcreteLaw(E=28.6e9, nu=0.15, fc=37.9e6, ft=3.17e6,
                                       shear_retention=0.2, crush_strain=0.0035)
    rebar = rebar or SteelLaw(200e9, 0.3, 345e6, ((0.0, 345e6), (0.1, 400e6)))
    area = rebar_ratio * rebar_depth
    band = min(0.1 * thickness, 0.004)
    while area / band >= 0.1:
        band *= 1.5
    zr = thickness - rebar_depth
    stack = _rc_stack("slab", thickness, "concrete", "rebar",
                      [(zr - 0.5 * band, area, (1.0, 0.0)), (zr + 0.5 * band, area, (0.0, 1.0))],
                      band=band)
    a = 0.5 * side
    g = np.linspace(0.0, a, mesh_n + 1)
    mb = _MeshBuilder()
    for j in range(mesh_n + 1):
        for i in range(mesh_n + 1):
            mb.node((g[i], g[j], 0.0))
    mb.grid((0, 0, 0), (1, 0, 0), (0, 1, 0), g, g, "slab", lambda i, j: {"slab"})
    supports = [Support(mb.find((0.0, 0.0, 0.0)), ("uz",))]
    for j in range(mesh_n + 1):
        supports.append(Support(mb.find((a, g[j], 0.0)), ("ux", "ry", "rz")))
    for i in range(mesh_n + 1):
        nid = mb.find((g[i], a, 0.0))
        dofs = ("uy", "rx", "rz") if i < mesh_n else ("ux", "uy", "rx", "ry", "rz")
        if i == mesh_n:
            supports = [s for s in supports if s.node_id != nid]
        supports.append(Support(nid, dofs))
    center = mb.find((a, a, 0.0))
    lc = LoadCase(point_loads=(PointLoad(center, (0.0, 0.0, -float(load))),))
    meta = {"benchmark": "mcneice_slab", "control_node": center, "control_dof": "uz",
            "symmetry_factor": 4.0, "side": side, "thickness": thickness}
    return mb.build([stack], {"concrete": concrete, "rebar": rebar}, supports, lc,
                    design_capacity, meta)


# ---------------------------------------------------------------------------
# composite girder bridge


@dataclass(frozen=True)
class GirderSection:
    """Plate dimensions of one welded girder (meters)."""

    web_height: float = 1.0
    web_thickness: float = 0.010
    top_flange_width: float = 0.30
    top_flange_thickness: float = 0.016
    bottom_flange_width: float = 0.35
    bottom_flange_thickness: float = 0.025
    stiffener_thickness: float = 0.016

    @property
    def centerline_depth(self):
        return self.web_height + 0.5 * (self.top_flange_thickness + self.bottom_flange_thickness)

    @property
    def stiffener_outstand(self):
        return 0.5 * min(self.top_flange_width, self.bottom_flange_width)


@dataclass(frozen=True)
class BridgeMesh:
    max_span_element: float = 1.4
    span_breaks: tuple = (0.05, 0.4, 0.6, 0.95)
    web_divisions: int = 2
    max_deck_element: float = 1.0
    overhang_divisions: int = 1


def hs20_patch_loads(span, truck_centers, axle_x=None, wheel_gauge=1.83,
                     patch=(0.2, 0.5), axle_loads=(35.6e3, 142.3e3, 142.3e3), spacing=4.27):
    """Wheel patches of HS-20 trucks placed with the middle axle at ``axle_x``."""
    axle_x = 0.5 * span if axle_x is None else axle_x
    loads = []
    for yc in truck_centers:
        for k, P in enumerate(axle_loads):
            x = axle_x + (k - 1) * spacing
            if not 0 < x < span:
                continue
            for side in (-0.5, 0.5):
                loads.append(PatchLoad((x, yc + side * wheel_gauge, 0.0), tuple(patch), 0.5 * P))
    return tuple(loads)


def generate_bridge_model(span=21.34, width=7.92, deck_thickness=0.1905, girder_spacing=3.05,
                          girder_section=None, mesh=None, n_girders=3, steel=None, concrete=None,
                          rebar=None, rebar_area=0.0008, truck_centers=None,
                          design_capacity=1806e3):
    """Composite deck-on-girders superstructure built from flat shells.

    Girders are welded plate assemblies (web, flanges, bearing stiffeners).
    The deck shares nodes with the top flanges and sits on them through a
    rigid offset in its layer stack (full composite action). Supports are a
    hinge at x = 0 and a roller at x = span under each girder.
    """
    gs = girder_section or GirderSection()
    mesh = mesh or BridgeMesh()
    if n_girders < 2:
        raise ValueError("need at least 2 girders")
    if min(span, width, deck_thickness, girder_spacing) <= 0:
        raise ValueError("dimensions must be positive")
    if girder_spacing * (n_girders - 1) > width:
        raise ValueError("girder spacing x (n_girders - 1) exceeds deck width")
    steel = steel or default_girder_steel()
    concrete = concrete or default_deck_concrete()
    rebar = rebar or default_rebar_steel()
    truck_centers = (-0.25 * width, 0.25 * width) if truck_centers is None else truck_centers

    yg = [(k - 0.5 * (n_girders - 1)) * girder_spacing for k in range(n_girders)]
    hc = gs.centerline_depth
    bs = gs.stiffener_outstand
    xs = _stations([0.0, span] + [f * span for f in mesh.span_breaks],
                   max_size=mesh.max_span_element)
    half_tf, half_bf = 0.5 * gs.top_flange_width, 0.5 * gs.bottom_flange_width
    ybreaks = [-0.5 * width, 0.5 * width]
    for y in yg:
        ybreaks += [y - half_tf, y, y + half_tf, y - bs, y + bs]
    ydeck = _deck_stations(ybreaks, yg, half_tf, width, mesh)
    zweb = np.linspace(0.0, hc, mesh.web_divisions + 1)

    cover_bot, cover_top = 0.040, 0.050
    deck_stack = _rc_stack(
        "deck", deck_thickness, "concrete", "rebar",
        [(cover_bot, rebar_area, (0.0, 1.0)), (cover_bot + 0.012, rebar_area, (1.0, 0.0)),
         (deck_thickness - cover_top - 0.012, rebar_area, (1.0, 0.0)),
         (deck_thickness - cover_top, rebar_area, (0.0, 1.0))],
        band=0.010, reference_offset=0.5 * gs.top_flange_thickness)
    stacks = [
        deck_stack,
        LayerStack.centered("web", "steel", gs.web_thickness),
        LayerStack.centered("top_flange", "steel", gs.top_flange_thickness),
        LayerStack.centered("bottom_flange", "steel", gs.bottom_flange_thickness),
        LayerStack.centered("stiffener", "steel", gs.stiffener_thickness),
    ]

    mb = _MeshBuilder()
    # deck (covers the top flanges through shared nodes)
    mb.grid((0, 0, hc), (1, 0, 0), (0, 1, 0), xs, ydeck, "deck", lambda i, j: {"deck"})
    for g, y in enumerate(yg):
        name = f"girder{g}"
        ytf = [v for v in ydeck if y - half_tf - 1e-9 <= v <= y + half_tf + 1e-9]
        mb.grid((0, 0, hc), (1, 0, 0), (0, 1, 0), xs, ytf, "top_flange",
                lambda i, j, n=name: {f"{n}.top_flange"})
        ybf = sorted({y - half_bf, y, y + half_bf, y - bs, y + bs})
        ybf = [v for v in ybf if y - half_bf - 1e-9 <= v <= y + half_bf + 1e-9]
        mb.grid((0, 0, 0), (1, 0, 0), (0, 1, 0), xs, ybf, "bottom_flange",
                lambda i, j, n=name: {f"{n}.bottom_flange"})
        mb.grid((0, y, 0), (1, 0, 0), (0, 0, 1), xs, zweb, "web",
                lambda i, j, n=name: {f"{n}.web"})
        for end, x in (("south", 0.0), ("north", span)):
            for sgn in (-1.0, 1.0):
                ys = sorted([y, y + sgn * bs])
                mb.grid((x, 0, 0), (0, 1, 0), (0, 0, 1), ys, zweb, "stiffener",
                        lambda i, j, n=name, e=end: {f"{n}.stiffener", f"end_region.{e}"})

    supports = []
    for y in yg:
        for x, dofs in ((0.0, ("ux", "uy", "uz")), (span, ("uy", "uz"))):
            supports.append(Support(mb.find((x, y, 0.0)), dofs))
            for yy in (y - half_bf, y + half_bf):
                supports.append(Support(mb.find((x, yy, 0.0)), ("uz",)))
    loads = hs20_patch_loads(span, truck_centers)
    interior = int(np.argmin(np.abs(yg)))
    control = mb.find((xs[np.argmin(np.abs(xs - 0.5 * span))], yg[interior], 0.0))
    meta = {
        "benchmark": "bridge", "span": span, "width": width, "girder_lines": tuple(yg),
        "deck_thickness": deck_thickness, "control_node": control, "control_dof": "uz",
        "interior_girder": interior, "girder_depth": hc,
        "effective_depth": deck_thickness - cover_bot,
    }
    return mb.build(stacks, {"steel": steel, "concrete": concrete, "rebar": rebar},
                    supports, LoadCase(patch_loads=loads), design_capacity, meta)


def _deck_stations(ybreaks, yg, half_tf, width, mesh):
    base = sorted(set(round(v, 12) for v in ybreaks if -0.5 * width - 1e-9 <= v <= 0.5 * width + 1e-9))
    out = [base[0]]
    flange_spans = [(y - half_tf, y + half_tf) for y in yg]
    for lo, hi in zip(base, base[1:]):
        inside = any(a - 1e-9 <= lo and hi <= b + 1e-9 for a, b in flange_spans)
        overhang = hi <= min(yg) - half_tf + 1e-9 or lo >= max(yg) + half_tf - 1e-9
        if inside:
            n = 1
        elif overhang:
            n = max(mesh.overhang_divisions, int(math.ceil((hi - lo) / mesh.max_deck_element - 1e-9)))
        else:
            n = max(1, int(math.ceil((hi - lo) / mesh.max_deck_element - 1e-9)))
        out.extend(lo + (hi - lo) * k / n for k in range(1, n + 1))
    return np.array(out)


# ---------------------------------------------------------------------------
# single plate girder (element-level benchmarks)


def generate_plate_girder_model(length=1.5, section=None, n_length=12, web_divisions=6,
                                flange_divisions=2, steel=None, web_steel=None,
                                supports="simple", bearing=None, load_span=None,
                                load=1000.0, web_z_breaks=(), flange_edge_band=None,
                                stiffened_web_height=0.0, stiffener_positions=None,
                                design_capacity=1.0, benchmark="plate_girder"):
    """Single welded I-girder made of flat shells.

    ``supports="simple"`` pins the bottom flange at x = 0 and puts a roller at
    x = length; ``supports="bearing"`` fixes all bottom-flange nodes in the
    ``bearing`` x-range. The load is a patch across the full top flange over
    ``load_span`` (x-range). ``stiffened_web_height`` thickens the upper part
    of the web to mimic rotational restraint from attached plates.
    """
    gs = section or GirderSection(0.5, 0.004, 0.2, 0.012, 0.2, 0.012, 0.012)
    steel = steel or SteelLaw(200e9, 0.3, 355e6, ((0.0, 355e6), (0.1, 450e6)))
    web_steel = web_steel or steel
    hc = gs.centerline_depth
    bs = gs.stiffener_outstand
    load_span = load_span or (0.5 * length - 0.025, 0.5 * length + 0.025)
    xb = [0.0, length, *load_span]
    if bearing:
        xb += list(bearing)
    stiffener_positions = (0.0, length) if stiffener_positions is None else stiffener_positions
    xb += list(stiffener_positions)
    xs = _stations(xb, max_size=length / n_length)
    zb = [0.0, hc] + [z for z in web_z_breaks if 0 < z < hc]
    if stiffened_web_height:
        zb.append(hc - stiffened_web_height)
    zweb = _stations(zb, max_size=hc / web_divisions)
    half_tf, half_bf = 0.5 * gs.top_flange_width, 0.5 * gs.bottom_flange_width
    yb = [-half_bf, half_bf, 0.0, -bs, bs]
    if flange_edge_band:
        yb += [-half_bf + flange_edge_band, half_bf - flange_edge_band]
    ybf = _stations(yb, max_size=half_bf / flange_divisions)
    ytf = _stations([-half_tf, half_tf, 0.0, -bs, bs], max_size=half_tf / flange_divisions)

    stacks = [LayerStack.centered("web", "web_steel", gs.web_thickness),
              LayerStack.centered("top_flange", "steel", gs.top_flange_thickness),
              LayerStack.centered("bottom_flange", "steel", gs.bottom_flange_thickness),
              LayerStack.centered("stiffener", "steel", gs.stiffener_thickness)]
    if stiffened_web_height:
        stacks.append(LayerStack.centered("web_stiffened", "steel", 3.0 * gs.web_thickness))
    mb = _MeshBuilder()
    name = "girder0"

    def bf_tags(i, j):
        tags = {f"{name}.bottom_flange"}
        if flange_edge_band:
            yc = 0.5 * (ybf[j] + ybf[j + 1])
            if abs(yc) > half_bf - flange_edge_band:
                tags.add(f"{name}.bottom_flange.edge")
        return tags

    mb.grid((0, 0, 0), (1, 0, 0), (0, 1, 0), xs, ybf, "bottom_flange", bf_tags)
    mb.grid((0, 0, hc), (1, 0, 0), (0, 1, 0), xs, ytf, "top_flange",
            lambda i, j: {f"{name}.top_flange"})
    z_damage = min(web_z_breaks) if web_z_breaks else None
    for i in range(len(xs) - 1):
        for j in range(len(zweb) - 1):
            zc = 0.5 * (zweb[j] + zweb[j + 1])
            stack = "web"
            tags = {f"{name}.web"}
            if stiffened_web_height and zc > hc - stiffened_web_height:
                stack = "web_stiffened"
                tags.add(f"{name}.web.stiffened")
            if z_damage is not None and zc < z_damage:
                tags.add(f"{name}.web.bottom")
            c = [(xs[i], 0, zweb[j]), (xs[i + 1], 0, zweb[j]), (xs[i + 1], 0, zweb[j + 1]),
                 (xs[i], 0, zweb[j + 1])]
            mb.quad(c, stack, tags)
    for x in stiffener_positions:
        for sgn in (-1.0, 1.0):
            mb.grid((x, 0, 0), (0, 1, 0), (0, 0, 1), sorted([0.0, sgn * bs]), zweb, "stiffener",
                    lambda i, j: {f"{name}.stiffener"})

    sup = []
    if supports == "simple":
        for x, dofs in ((0.0, ("ux", "uy", "uz")), (length, ("uy", "uz"))):
            for y in ybf:
                d = dofs if abs(y) < 1e-12 else ("uz",)
                sup.append(Support(mb.find((x, y, 0.0)), d))
            sup.append(Support(mb.find((x, 0.0, hc)), ("uy",)))
    elif supports == "bearing":
        lo, hi = bearing
        for x in xs:
            if lo - 1e-9 <= x <= hi + 1e-9:
                for y in ybf:
                    sup.append(Support(mb.find((x, y, 0.0)), ("ux", "uy", "uz")))
        for x in xs:
            for y in ytf:
                sup.append(Support(mb.find((x, y, hc)), ("uy",)))
    else:
        raise ValueError(f"unknown support mode {supports!r}")

    lx = load_span[1] - load_span[0]
    patch = PatchLoad((0.5 * sum(load_span), 0.0, hc), (lx, gs.top_flange_width), float(load),
                      (0.0, 0.0, -1.0), f"{name}.top_flange")
    xmid = 0.5 * sum(load_span)
    control = mb.find((xs[np.argmin(np.abs(xs - xmid))], 0.0, hc))
    meta = {"benchmark": benchmark, "length": length, "girder_depth": hc,
            "control_node": control, "control_dof": "uz"}
    return mb.build(stacks, {"steel": steel, "web_steel": web_steel}, sup,
                    LoadCase(patch_loads=(patch,)), design_capacity, meta)


# ---------------------------------------------------------------------------
# flat plates for analytic checks


def generate_plate_model(length, width, thickness, nx, ny, material=None, supports="strip",
                         load="uniform", load_value=1.0, design_capacity=1.0):
    """Flat rectangular plate in the x-y plane for analytic verification.

    ``supports``: ``"strip"`` (simply supported at x = 0, L), ``"cantilever"``
    (clamped at x = 0), ``"column"`` (pinned ends, in-plane axial load at
    x = L), ``"ss_plate"`` (all edges simply supported, uniaxial
    compression along x).
    ``load``: ``"uniform"`` pressure resultant, ``"tip"`` end line load,
    ``"axial"`` compressive edge load along -x.
    """
    material = material or SteelLaw(200e9, 0.3, 1e12)
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, width, ny + 1)
    mb = _MeshBuilder()
    for y in ys:
        for x in xs:
            mb.node((x, y, 0.0))
    mb.grid((0, 0, 0), (1, 0, 0), (0, 1, 0), xs, ys, "plate", lambda i, j: {"plate"})
    stack = LayerStack.centered("plate", "steel", thickness)
    nid = lambda x, y: mb.find((x, y, 0.0))
    sup = []
    if supports == "strip":
        for y in ys:
            sup.append(Support(nid(0.0, y), ("ux", "uz") + (("uy",) if y == 0 else ())))
            sup.append(Support(nid(length, y), ("uz",)))
    elif supports == "cantilever":
        for y in ys:
            sup.append(Support(nid(0.0, y), DOF_NAMES))
    elif supports == "column":
        for y in ys:
            sup.append(Support(nid(0.0, y), ("ux", "uz") + (("uy",) if y == 0 else ())))
            sup.append(Support(nid(length, y), ("uz",)))
    elif supports == "ss_plate":
        for k, y in enumerate(ys):
            for x in (0.0, length):
                d = ["uz"]
                if x == 0.0:
                    d.append("ux")
                if x == 0.0 and k == 0:
                    d.append("uy")
                sup.append(Support(nid(x, y), tuple(d)))
        for x in xs[1:-1]:
            for y in (0.0, width):
                sup.append(Support(nid(x, y), ("uz",)))
    else:
        raise ValueError(f"unknown supports {supports!r}")
    sup = _merge_supports(sup)
    pls = []
    if load == "uniform":
        pls_patch = (PatchLoad((0.5 * length, 0.5 * width, 0.0), (length, width),
                               float(load_value), (0.0, 0.0, -1.0), "plate"),)
        lc = LoadCase(patch_loads=pls_patch)
    elif load == "tip":
        w = _edge_weights(ys)
        pls = [PointLoad(nid(length, y), (0.0, 0.0, -load_value * wk)) for y, wk in zip(ys, w)]
        lc = LoadCase(point_loads=tuple(pls))
    elif load == "axial":
        w = _edge_weights(ys)
        pls = [PointLoad(nid(length, y), (-load_value * wk, 0.0, 0.0)) for y, wk in zip(ys, w)]
        lc = LoadCase(point_loads=tuple(pls))
    else:
        raise ValueError(f"unknown load {load!r}")
    meta = {"benchmark": f"plate_{supports}", "length": length, "width": width,
            "thickness": thickness}
    return mb.build([stack], {"steel": material}, sup, lc, design_capacity, meta)


def _edge_weights(ys):
    """Consistent nodal weights of a unit total line load along a meshed edge."""
    w = np.zeros(len(ys))
    for k in range(len(ys) - 1):
        h = ys[k + 1] - ys[k]
        w[k] += 0.5 * h
        w[k + 1] += 0.5 * h
    return w / w.sum()


def _merge_supports(sups):
    merged = {}
    for s in sups:
        cur = merged.get(s.node_id, ())
        merged[s.node_id] = tuple(d for d in DOF_NAMES if d in cur or d in s.fixed_dofs)
    return [Support(n, d) for n, d in merged.items()]
