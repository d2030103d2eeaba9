"""Model, scenario and report files (JSON syntax with unit strings).

Quantities are either bare numbers (SI) or strings such as ``"345 MPa"``.
The README describes the schema.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

from . import damage as dmg
from .materials import ConcreteLaw, MaterialError, SteelLaw
from .model import (BridgeMesh, BridgeModel, GirderSection, Layer, LayerStack, LoadCase, Node,
                    PatchLoad, PointLoad, ShellElement, Support, generate_bridge_model,
                    generate_plate_girder_model, generate_plate_model, generate_slab_model)

UNITS = {
    "": 1.0, "m": 1.0, "cm": 1e-2, "mm": 1e-3, "in": 0.0254, "ft": 0.3048,
    "N": 1.0, "kN": 1e3, "MN": 1e6, "kip": 4448.2216152605,
    "Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9, "psi": 6894.757293168, "ksi": 6894757.293168,
    "N/m": 1.0, "kN/m": 1e3, "m2": 1.0, "mm2": 1e-6, "%": 1e-2,
}
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z%/0-9]*)\s*$")


class InputError(ValueError):
    """Bad input file. ``line``/``column`` are set for syntax errors."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path, self.line, self.column = path, line, column
        where = str(path) if path else "<input>"
        if line is not None:
            where += f":{line}:{column}"
        super().__init__(f"{where}: {message}")


def quantity(value, where="value"):
    """Convert a number or ``"<number> <unit>"`` string to SI."""
    if isinstance(value, bool):
        raise InputError(f"{where}: expected a quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _QTY.match(value)
        if m and m.group(2) in UNITS:
            return float(m.group(1)) * UNITS[m.group(2)]
        raise InputError(f"{where}: cannot parse quantity {value!r}")
    raise InputError(f"{where}: expected a quantity, got {type(value).__name__}")


def _vec(values, where, n=None):
    if not isinstance(values, (list, tuple)) or (n is not None and len(values) != n):
        raise InputError(f"{where}: expected a list of {n or 'some'} quantities")
    return tuple(quantity(v, f"{where}[{i}]") for i, v in enumerate(values))


def _convert(obj, where):
    """Generator parameters: quantity strings become floats, everything else passes."""
    if isinstance(obj, dict):
        return {k: _convert(v, f"{where}.{k}") for k, v in obj.items()}
    if isinstance(obj, list):
        return [_convert(v, f"{where}[{i}]") for i, v in enumerate(obj)]
    if isinstance(obj, str) and _QTY.match(obj) and _QTY.match(obj).group(2) in UNITS:
        return quantity(obj, where)
    return obj


def _req(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise InputError(f"{where}: missing field {key!r}")
    return d[key]


def load_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(e.msg, path, e.lineno, e.colno) from None


# ---------------------------------------------------------------------------
# materials


def material_from_dict(d, where):
    law = _req(d, "law", where)
    try:
        if law == "steel":
            fy = quantity(_req(d, "fy", where), f"{where}.fy")
            hard = tuple((float(a), quantity(b, f"{where}.hardening[{i}]"))
                         for i, (a, b) in enumerate(d.get("hardening", ())))
            return SteelLaw(quantity(_req(d, "E", where), f"{where}.E"), float(_req(d, "nu", where)),
                            fy, hard)
        if law == "concrete":
            soft = d.get("softening_modulus")
            return ConcreteLaw(quantity(_req(d, "E", where), f"{where}.E"), float(_req(d, "nu", where)),
                               quantity(_req(d, "fc", where), f"{where}.fc"),
                               quantity(_req(d, "ft", where), f"{where}.ft"),
                               None if soft is None else quantity(soft, f"{where}.softening_modulus"),
                               float(d.get("shear_retention", 0.2)), float(d.get("crush_strain", 0.0035)))
    except MaterialError as e:
        raise InputError(f"{where}: {e}") from None
    raise InputError(f"{where}.law: unknown material law {law!r}")


def material_to_dict(law):
    if isinstance(law, SteelLaw):
        return {"law": "steel", "E": law.E, "nu": law.nu, "fy": law.fy,
                "hardening": [list(p) for p in law.hardening]}
    return {"law": "concrete", "E": law.E, "nu": law.nu, "fc": law.fc, "ft": law.ft,
            "softening_modulus": law.softening_modulus, "shear_retention": law.shear_retention,
            "crush_strain": law.crush_strain}


# ---------------------------------------------------------------------------
# models

GENERATORS = {"bridge": generate_bridge_model, "slab": generate_slab_model,
              "plate_girder": generate_plate_girder_model, "plate": generate_plate_model}


def _generated(spec, where):
    name = _req(spec, "name", where)
    if name not in GENERATORS:
        raise InputError(f"{where}.name: unknown generator {name!r}")
    params = _convert(dict(spec.get("params", {})), f"{where}.params")
    for key in ("steel", "web_steel", "rebar", "material"):
        if key in params:
            params[key] = material_from_dict(spec["params"][key], f"{where}.params.{key}")
    if "concrete" in params:
        params["concrete"] = material_from_dict(spec["params"]["concrete"], f"{where}.params.concrete")
    for key, cls in (("girder_section", GirderSection), ("section", GirderSection), ("mesh", BridgeMesh)):
        if key in params:
            params[key] = cls(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in params[key].items()})
    for key, val in list(params.items()):
        if isinstance(val, list):
            params[key] = tuple(tuple(v) if isinstance(v, list) else v for v in val)
    try:
        return GENERATORS[name](**params)
    except (TypeError, ValueError) as e:
        raise InputError(f"{where}: {e}") from None


def model_from_dict(d, path=None):
    where = "model"
    if "generator" in d:
        model = _generated(d["generator"], "generator")
        changes = {}
        if "design_capacity" in d:
            changes["design_capacity"] = quantity(d["design_capacity"], "design_capacity")
        if "metadata" in d:
            meta = dict(model.metadata)
            meta.update(d["metadata"])
            changes["metadata"] = meta
        return model.replace(**changes) if changes else model

    mats = {k: material_from_dict(v, f"materials.{k}") for k, v in _req(d, "materials", where).items()}
    stacks = {}
    for sid, s in _req(d, "layer_stacks", where).items():
        w = f"layer_stacks.{sid}"
        layers = []
        for i, L in enumerate(_req(s, "layers", w)):
            lw = f"{w}.layers[{i}]"
            layers.append(Layer(_req(L, "material", lw), quantity(_req(L, "thickness", lw), f"{lw}.thickness"),
                                L.get("kind", "solid-steel"), float(L.get("rebar_ratio", 0.0)),
                                tuple(float(x) for x in L.get("rebar_direction", (1.0, 0.0)))))
        stacks[sid] = LayerStack(sid, tuple(layers), quantity(s.get("reference_offset", 0.0), f"{w}.reference_offset"))
    nodes = []
    for i, n in enumerate(_req(d, "nodes", where)):
        w = f"nodes[{i}]"
        if isinstance(n, dict):
            nodes.append(Node(int(n.get("id", i)), _vec(_req(n, "position", w), f"{w}.position", 3),
                              _vec(n.get("imperfection", (0, 0, 0)), f"{w}.imperfection", 3)))
        else:
            nodes.append(Node(i, _vec(n, w, 3)))
    elements = []
    for i, e in enumerate(_req(d, "elements", where)):
        w = f"elements[{i}]"
        elements.append(ShellElement(int(e.get("id", i)), tuple(int(k) for k in _req(e, "nodes", w)),
                                     _req(e, "stack", w), frozenset(e.get("tags", ()))))
    supports = []
    for i, s in enumerate(_req(d, "supports", where)):
        w = f"supports[{i}]"
        supports.append(Support(int(_req(s, "node", w)), tuple(_req(s, "fixed", w)),
                                quantity(s.get("value", 0.0), f"{w}.value")))
    loads = d.get("loads", {})
    points = tuple(PointLoad(int(_req(p, "node", f"loads.point[{i}]")),
                             _vec(_req(p, "force", f"loads.point[{i}]"), f"loads.point[{i}].force", 3))
                   for i, p in enumerate(loads.get("point", ())))
    patches = []
    for i, p in enumerate(loads.get("patch", ())):
        w = f"loads.patch[{i}]"
        patches.append(PatchLoad(_vec(_req(p, "center", w), f"{w}.center"),
                                 _vec(_req(p, "extent", w), f"{w}.extent", 2),
                                 quantity(_req(p, "resultant", w), f"{w}.resultant"),
                                 tuple(float(x) for x in p.get("direction", (0, 0, -1))),
                                 p.get("region", "deck")))
    return BridgeModel(tuple(nodes), tuple(elements), stacks, mats, tuple(supports),
                       LoadCase(points, tuple(patches)),
                       quantity(_req(d, "design_capacity", where), "design_capacity"),
                       dict(d.get("metadata", {})))


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, frozenset, set)):
        return [_plain(v) for v in (sorted(x) if isinstance(x, (set, frozenset)) else x)]
    if hasattr(x, "item"):
        return x.item()
    return x


def model_to_dict(model: BridgeModel):
    """Explicit (generator-free) description; round-trips through model_from_dict."""
    return {
        "materials": {k: material_to_dict(v) for k, v in model.materials.items()},
        "layer_stacks": {k: {"reference_offset": s.reference_offset, "layers": [
            {"material": L.material_id, "thickness": L.thickness, "kind": L.kind,
             "rebar_ratio": L.rebar_ratio, "rebar_direction": list(L.rebar_direction)}
            for L in s.layers]} for k, s in model.layer_stacks.items()},
        "nodes": [{"id": n.id, "position": list(n.position), "imperfection": list(n.imperfection_offset)}
                  for n in model.nodes],
        "elements": [{"id": e.id, "nodes": list(e.node_ids), "stack": e.layer_stack_id,
                      "tags": sorted(e.region_tags)} for e in model.elements],
        "supports": [{"node": s.node_id, "fixed": list(s.fixed_dofs), "value": s.prescribed_value}
                     for s in model.supports],
        "loads": {"point": [{"node": p.node_id, "force": list(p.force)} for p in model.load_case.point_loads],
                  "patch": [{"center": list(p.center), "extent": list(p.extent), "resultant": p.resultant,
                             "direction": list(p.direction), "region": p.region}
                            for p in model.load_case.patch_loads]},
        "design_capacity": model.design_capacity,
        "metadata": _plain(dict(model.metadata)),
    }


def read_model(path):
    return model_from_dict(load_json(path), path)


CONTROL_FIELDS = {"step": quantity, "max_steps": int, "control_node": int, "dof": str,
                  "residual_tol": float, "increment_tol": float, "max_iterations": int,
                  "drop_ratio": float, "hinge_threshold": float, "hinge_parts": tuple}


def control_from_dict(d, where="control"):
    """Keyword overrides for ControlSpec from a model file's ``control`` section."""
    out = {}
    for k, v in (d or {}).items():
        if k not in CONTROL_FIELDS:
            raise InputError(f"{where}: unknown field {k!r}")
        out[k] = quantity(v, f"{where}.{k}") if CONTROL_FIELDS[k] is quantity else CONTROL_FIELDS[k](v)
    return out


# ---------------------------------------------------------------------------
# scenarios


def _region(d, where):
    boxes = []
    for i, b in enumerate(d.get("boxes", ())):
        w = f"{where}.boxes[{i}]"
        boxes.append((_vec(_req(b, "min", w), f"{w}.min", 3), _vec(_req(b, "max", w), f"{w}.max", 3)))
    return dmg.Region(tuple(d.get("tags", ())), tuple(boxes))


def _shape(d, where):
    kind = _req(d, "type", where)
    if kind == "half_sine":
        top = d.get("taper_top")
        return dmg.HalfSine(_region(_req(d, "region", where), f"{where}.region"),
                            tuple(float(x) for x in d.get("direction", (0, 1, 0))),
                            None if top is None else quantity(top, f"{where}.taper_top"))
    if kind == "buckling_mode":
        return dmg.BucklingMode(int(d.get("index", 1)))
    raise InputError(f"{where}.type: unknown shape {kind!r}")


PRESETS = {"corrosion": dmg.corrosion_scenario, "impact": dmg.impact_scenario, "fire": dmg.fire_scenario}


def scenario_from_dict(d, model=None):
    """Build a DamageScenario. Presets need the model to size their regions."""
    s = _req(d, "scenario", "file")
    if "preset" in s:
        if s["preset"] not in PRESETS:
            raise InputError(f"scenario.preset: unknown preset {s['preset']!r}")
        if model is None:
            raise InputError("scenario.preset: a model is required to resolve presets")
        return PRESETS[s["preset"]](model, **_convert(s.get("params", {}), "scenario.params"))
    ops = []
    for i, o in enumerate(_req(s, "operators", "scenario")):
        w = f"scenario.operators[{i}]"
        kind = _req(o, "kind", w)
        try:
            if kind == "geometric_imperfection":
                ops.append(dmg.DamageOperator(kind, shape=_shape(_req(o, "shape", w), f"{w}.shape"),
                                              amplitude=quantity(_req(o, "amplitude", w), f"{w}.amplitude")))
            else:
                reg = _region(_req(o, "region", w), f"{w}.region")
                dps = o.get("depth_per_side")
                ops.append(dmg.DamageOperator(kind, reg, fraction=o.get("fraction"),
                                              depth_per_side=None if dps is None else quantity(dps, f"{w}.depth_per_side")))
        except dmg.DamageError as e:
            raise InputError(f"{w}: {e}") from None
    return dmg.DamageScenario(_req(s, "name", "scenario"), tuple(ops), tuple(s.get("assumptions", ())))


def _region_dict(r):
    return {"tags": list(r.tags), "boxes": [{"min": list(lo), "max": list(hi)} for lo, hi in r.boxes]}


def scenario_to_dict(sc: dmg.DamageScenario):
    ops = []
    for op in sc.operators:
        o = {"kind": op.kind}
        if op.kind == "geometric_imperfection":
            sh = op.shape
            if isinstance(sh, dmg.HalfSine):
                o["shape"] = {"type": "half_sine", "region": _region_dict(sh.region),
                              "direction": list(sh.direction), "taper_top": sh.taper_top}
            else:
                o["shape"] = {"type": "buckling_mode", "index": sh.index}
            o["amplitude"] = op.amplitude
        else:
            o["region"] = _region_dict(op.region)
            if op.fraction is not None:
                o["fraction"] = op.fraction
            if op.depth_per_side is not None:
                o["depth_per_side"] = op.depth_per_side
        ops.append(o)
    return {"scenario": {"name": sc.name, "assumptions": list(sc.assumptions), "operators": ops}}


def read_scenario(path, model=None):
    return scenario_from_dict(load_json(path), model)


# ---------------------------------------------------------------------------
# output


def dumps(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path, text):
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def data_path(name):
    """Path of a bundled data file (``name`` without directory)."""
    return Path(__file__).parent / "data" / name
